//! Numerical kernels shared by every other module.
//!
//! Spectral work is dense: all diagnostics run at desk scale where full
//! decompositions are exact and cheap. Sparse storage is used for assembly,
//! matrix-vector products and the banded global solve.

pub mod dense;
pub mod krylov;
pub mod sparse;

pub use dense::{
    block_diag, eig_sym, eig_sym_gen, max_abs, solve_spd, svd, symmetrize, GenEigen, SpdFactor, Svd,
};
pub use krylov::{krylov_solve, KrylovMethod, KrylovParams, Metric, SolveReport};
pub use sparse::{BandedCholesky, CsrMatrix};

pub type DenseMatrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
