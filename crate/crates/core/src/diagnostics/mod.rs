//! Measured constants, condition numbers, bound verification and solver
//! comparisons. Every quantity is computed exactly on materialized dense
//! operators, so the configurations are limited by the bundle's dense cap.

mod bounds;
mod constants;
mod model;
mod positivity;
mod solver;
mod spectrum;

pub use bounds::{
    central_bound, positivity_bounds, structural_bounds, verify_bounds, wielandt_bounds, BoundReport, BoundStatus,
    BOUND_RTOL,
};
pub use constants::{
    measure_constants, measure_with_model, ConstantsReport, ExtensionConstants, FormConstants, InnerProductLabels,
};
pub use model::DenseModel;
pub use positivity::{positivity_from_grams, positivity_report, positivity_with_model, PositivityReport, POSITIVITY_TOL};
pub use solver::{cg_iteration_bound, solver_table, SolverRow, SolverRun, BASELINE};
pub use spectrum::{spectrum, spectrum_of, Eigenvalue, SpectrumReport};
