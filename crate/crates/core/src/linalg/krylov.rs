//! Conjugate gradients and restarted GMRES over abstract operator
//! applications, in a caller-supplied inner product.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::sparse::{BandedCholesky, CsrMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum KrylovMethod {
    Cg,
    Gmres,
}

impl KrylovMethod {
    pub fn name(self) -> &'static str {
        match self {
            KrylovMethod::Cg => "CG",
            KrylovMethod::Gmres => "GMRES",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KrylovParams {
    pub method: KrylovMethod,
    pub tol: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for KrylovParams {
    fn default() -> Self {
        Self {
            method: KrylovMethod::Gmres,
            tol: 1e-10,
            max_iter: 1000,
            restart: 200,
        }
    }
}

impl KrylovParams {
    pub fn cg(tol: f64, max_iter: usize) -> Self {
        Self {
            method: KrylovMethod::Cg,
            tol,
            max_iter,
            ..Self::default()
        }
    }

    pub fn gmres(tol: f64, max_iter: usize) -> Self {
        Self {
            method: KrylovMethod::Gmres,
            tol,
            max_iter,
            ..Self::default()
        }
    }
}

/// Outcome of an iterative solve. `residual_history[0]` is the initial
/// residual norm; entry `k` is the residual norm after iteration `k`.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: DVector<f64>,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

impl SolveReport {
    pub fn relative_residual(&self) -> f64 {
        let first = self.residual_history[0];
        let last = *self.residual_history.last().expect("history is never empty");
        if first == 0.0 {
            0.0
        } else {
            last / first
        }
    }
}

/// Inner product used to measure residuals and orthogonalize.
#[derive(Debug, Clone, Copy)]
pub enum Metric<'a> {
    Euclidean,
    Sparse(&'a CsrMatrix),
    Dense(&'a DMatrix<f64>),
    /// `x·A⁻¹y` through a factorization of `A`: the dual norm for residuals
    /// of equations posed in `H'`.
    Inverse(&'a BandedCholesky),
}

impl Metric<'_> {
    pub fn dot(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        match self {
            Metric::Euclidean => x.dot(y),
            Metric::Sparse(m) => x.dot(&m.mul_vec(y)),
            Metric::Dense(m) => x.dot(&(*m * y)),
            Metric::Inverse(f) => x.dot(&f.solve(y).expect("metric dimension matches the factor")),
        }
    }

    pub fn norm(&self, x: &DVector<f64>) -> f64 {
        self.dot(x, x).max(0.0).sqrt()
    }
}

/// Solves `apply(x) = rhs` from a zero initial guess.
pub fn krylov_solve<F>(apply: F, rhs: &DVector<f64>, params: &KrylovParams, metric: Metric<'_>) -> Result<SolveReport>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    match params.method {
        KrylovMethod::Cg => cg(apply, rhs, params, metric),
        KrylovMethod::Gmres => gmres(apply, rhs, params, metric),
    }
}

fn cg<F>(apply: F, rhs: &DVector<f64>, params: &KrylovParams, metric: Metric<'_>) -> Result<SolveReport>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = rhs.len();
    let mut x = DVector::zeros(n);
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = metric.dot(&r, &r);
    let r0 = rr.sqrt();
    let mut history = vec![r0];
    if r0 == 0.0 {
        return Ok(SolveReport {
            solution: x,
            iterations: 0,
            residual_history: history,
            converged: true,
        });
    }
    let target = params.tol * r0;
    let mut iterations = 0;
    while iterations < params.max_iter {
        let q = apply(&p)?;
        let pq = metric.dot(&p, &q);
        if !(pq > 0.0) {
            return Err(Error::Breakdown(format!(
                "CG curvature {pq:e} at iteration {iterations}: operator is not positive definite"
            )));
        }
        let alpha = rr / pq;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &q, 1.0);
        let rr_new = metric.dot(&r, &r);
        iterations += 1;
        history.push(rr_new.max(0.0).sqrt());
        if rr_new.sqrt() <= target {
            return Ok(SolveReport {
                solution: x,
                iterations,
                residual_history: history,
                converged: true,
            });
        }
        let beta = rr_new / rr;
        rr = rr_new;
        p = &r + beta * &p;
    }
    Ok(SolveReport {
        solution: x,
        iterations,
        residual_history: history,
        converged: false,
    })
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let h = a.hypot(b);
        (a / h, b / h)
    }
}

fn gmres<F>(apply: F, rhs: &DVector<f64>, params: &KrylovParams, metric: Metric<'_>) -> Result<SolveReport>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = rhs.len();
    let restart = params.restart.max(1);
    let mut x = DVector::zeros(n);
    let r0 = metric.norm(rhs);
    let mut history = vec![r0];
    if r0 == 0.0 {
        return Ok(SolveReport {
            solution: x,
            iterations: 0,
            residual_history: history,
            converged: true,
        });
    }
    let target = params.tol * r0;
    let mut iterations = 0;

    loop {
        let r = rhs - apply(&x)?;
        let beta = metric.norm(&r);
        if beta <= target {
            return Ok(SolveReport {
                solution: x,
                iterations,
                residual_history: history,
                converged: true,
            });
        }
        if iterations >= params.max_iter {
            return Ok(SolveReport {
                solution: x,
                iterations,
                residual_history: history,
                converged: false,
            });
        }
        let mut basis: Vec<DVector<f64>> = vec![r / beta];
        let mut h = DMatrix::<f64>::zeros(restart + 1, restart);
        let mut cs = vec![0.0; restart];
        let mut sn = vec![0.0; restart];
        let mut g = DVector::<f64>::zeros(restart + 1);
        g[0] = beta;
        let mut k = 0;
        let mut lucky = false;
        while k < restart && iterations < params.max_iter {
            let mut w = apply(&basis[k])?;
            // modified Gram-Schmidt followed by one reorthogonalization pass
            for _pass in 0..2 {
                for (j, v) in basis.iter().enumerate() {
                    let c = metric.dot(v, &w);
                    h[(j, k)] += c;
                    w.axpy(-c, v, 1.0);
                }
            }
            let hnext = metric.norm(&w);
            h[(k + 1, k)] = hnext;
            for j in 0..k {
                let (a, b) = (h[(j, k)], h[(j + 1, k)]);
                h[(j, k)] = cs[j] * a + sn[j] * b;
                h[(j + 1, k)] = -sn[j] * a + cs[j] * b;
            }
            let (c, s) = givens(h[(k, k)], h[(k + 1, k)]);
            cs[k] = c;
            sn[k] = s;
            h[(k, k)] = c * h[(k, k)] + s * h[(k + 1, k)];
            h[(k + 1, k)] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            iterations += 1;
            k += 1;
            history.push(g[k].abs());
            if hnext <= 1e-14 * beta {
                lucky = true;
                break;
            }
            if g[k].abs() <= target {
                break;
            }
            basis.push(w / hnext);
        }
        // back substitution on the k×k triangle
        let mut y = DVector::<f64>::zeros(k);
        for i in (0..k).rev() {
            let s: f64 = ((i + 1)..k).map(|j| h[(i, j)] * y[j]).sum();
            if h[(i, i)] == 0.0 {
                return Err(Error::Breakdown(format!("singular Hessenberg at column {i}")));
            }
            y[i] = (g[i] - s) / h[(i, i)];
        }
        for (j, v) in basis.iter().take(k).enumerate() {
            x.axpy(y[j], v, 1.0);
        }
        let true_res = metric.norm(&(rhs - apply(&x)?));
        *history.last_mut().expect("at least one iteration ran") = true_res;
        if true_res <= target {
            return Ok(SolveReport {
                solution: x,
                iterations,
                residual_history: history,
                converged: true,
            });
        }
        if lucky {
            // exact in the Krylov space yet above tolerance: the operator is singular on it
            return Ok(SolveReport {
                solution: x,
                iterations,
                residual_history: history,
                converged: false,
            });
        }
    }
}
