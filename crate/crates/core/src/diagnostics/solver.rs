use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fem::unit_load;
use crate::linalg::{krylov_solve, KrylovMethod, KrylovParams, Metric, SolveReport};
use crate::operators::{equation_apply, equation_rhs, preconditioned_apply, recover_solution, LocalSolverBundle, MethodKind};

/// Method column entry for the unpreconditioned baseline.
pub const BASELINE: &str = "NONE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverRow {
    pub method: String,
    pub solver: KrylovMethod,
    pub iterations: usize,
    pub converged: bool,
    /// Final over initial residual, in the iteration metric.
    pub relative_residual: f64,
    /// `‖u − u_direct‖_a / ‖u_direct‖_a`.
    pub error_a: f64,
    /// `error_a ≤ 10·tol`.
    pub matches_direct: bool,
    /// `⌈√κ ln(2/tol)/2⌉ + 1` for CG on AS, when κ is known.
    pub iteration_bound: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SolverRun {
    pub row: SolverRow,
    pub report: SolveReport,
}

/// CG iteration estimate from the spectral condition number.
pub fn cg_iteration_bound(kappa: f64, tol: f64) -> usize {
    (kappa.sqrt() * (2.0 / tol).ln() / 2.0).ceil() as usize + 1
}

/// Solves `A u = load(f ≡ 1)` with every method, plus the unpreconditioned
/// baseline. AS runs with CG and GMRES, every other method with GMRES.
/// `kappa_as` is the spectral condition number of AS, if measured.
pub fn solver_table(
    bundle: &LocalSolverBundle,
    methods: &[MethodKind],
    tol: f64,
    max_iter: usize,
    kappa_as: Option<f64>,
) -> Result<Vec<SolverRun>> {
    let f = unit_load(bundle.grid(), bundle.free_dofs());
    let direct = bundle.solve_global(&f)?;
    let a = bundle.stiffness();
    let energy = |v: &DVector<f64>| v.dot(&a.mul_vec(v)).max(0.0).sqrt();
    let reference = energy(&direct);
    let row = |method: String, solver: KrylovMethod, report: SolveReport, u: DVector<f64>, bound: Option<usize>| {
        let error_a = energy(&(&u - &direct)) / reference;
        SolverRun {
            row: SolverRow {
                method,
                solver,
                iterations: report.iterations,
                converged: report.converged,
                relative_residual: report.relative_residual(),
                error_a,
                matches_direct: error_a <= 10.0 * tol,
                iteration_bound: bound,
            },
            report: SolveReport { solution: u, ..report },
        }
    };

    let mut runs = Vec::new();
    let baseline = krylov_solve(|u| Ok(a.mul_vec(u)), &f, &KrylovParams::gmres(tol, max_iter), Metric::Euclidean)?;
    let u = baseline.solution.clone();
    runs.push(row(BASELINE.to_string(), KrylovMethod::Gmres, baseline, u, None));

    for &kind in methods {
        let kind = kind.validate()?;
        let rhs = equation_rhs(kind, bundle, &f)?;
        // operator forms live in (H, a), the equation forms in its dual
        let metric = match kind {
            MethodKind::FeT | MethodKind::EfT | MethodKind::FepsT(_) => Metric::Inverse(bundle.global_factor()?),
            _ => Metric::Sparse(a),
        };
        let apply = |u: &DVector<f64>| match kind {
            MethodKind::EfT => equation_apply(kind, bundle, u),
            _ => preconditioned_apply(kind, bundle, u),
        };
        let solvers: &[KrylovMethod] = if kind == MethodKind::As {
            &[KrylovMethod::Cg, KrylovMethod::Gmres]
        } else {
            &[KrylovMethod::Gmres]
        };
        for &solver in solvers {
            let params = match solver {
                KrylovMethod::Cg => KrylovParams::cg(tol, max_iter),
                KrylovMethod::Gmres => KrylovParams::gmres(tol, max_iter),
            };
            let report = krylov_solve(apply, &rhs, &params, metric)?;
            let u = recover_solution(kind, bundle, &report.solution)?;
            let bound = match solver {
                KrylovMethod::Cg => kappa_as.map(|k| cg_iteration_bound(k, tol)),
                KrylovMethod::Gmres => None,
            };
            runs.push(row(kind.to_string(), solver, report, u, bound));
        }
    }
    Ok(runs)
}
