//! Pseudo-time continuation for parameterized inverse problems with
//! adaptive quasi-Newton preconditioning.

pub mod adjoint;
pub mod continuation;
pub mod error;
pub mod krylov;
pub mod linalg;
pub mod models;
pub mod precond;
pub mod problem;

pub use error::{Error, Result};
