//! Built-in problem instances.

mod grid;
mod illustrative;
mod poisson;

pub use grid::{Face, Grid, Interpolator};
pub use illustrative::{illustrative_derivatives, Illustrative1D, ScalarDerivatives};
pub use poisson::{
    boundary_value, generate_synthetic_data, source_mode, theta_paths_for_experiments, theta_truth,
    two_bump, PoissonConfig, PoissonFactor, PoissonModel, PoissonRegularization, SyntheticDataset,
    THETA_DIM,
};
