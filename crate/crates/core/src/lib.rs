//! Numerical laboratory for one-level additive Schwarz and restricted
//! Schwarz preconditioners for the Poisson problem on structured grids.

pub mod decomposition;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod fem;
pub mod linalg;
pub mod operators;
pub mod spaces;

pub use error::{Error, Result};
