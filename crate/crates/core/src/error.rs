use thiserror::Error;

/// Failure modes shared across the solver stack.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite entry at index {index}")]
    NonFinite { index: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("symmetric eigensolver did not converge in {sweeps} sweeps")]
    NonConvergence { sweeps: usize },

    #[error("non-positive curvature p'Ap = {curvature:e} at PCG iteration {iteration}")]
    IndefiniteCurvature { iteration: usize, curvature: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("randomized range finder produced rank {found} < requested {requested}")]
    EigFailure { requested: usize, found: usize },

    #[error("P'W asymmetry {relative:e} exceeds tolerance; pairs come from mismatched operators")]
    Asymmetry { relative: f64 },

    #[error("preconditioner storage cap of {cap} vectors exceeded (would hold {requested})")]
    StorageExceeded { cap: usize, requested: usize },

    #[error("state solve failed: {0}")]
    StateSolveFailure(String),

    #[error("linearized solve failed: {0}")]
    LinearSolveFailure(String),

    #[error("adjoint workspace was built at a different (m, theta)")]
    StaleWorkspace,

    #[error("tolerance satisfaction stalled after {iterations} iterations (|g| = {grad_norm:e})")]
    TolsatStall { iterations: usize, grad_norm: f64 },

    #[error("line search failed after {backtracks} backtracks")]
    LineSearchFailure { backtracks: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
