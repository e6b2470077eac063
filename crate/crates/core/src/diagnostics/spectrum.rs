use nalgebra::{DMatrix, Schur};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eig_sym_gen, symmetrize};
use crate::operators::{materialize, LocalSolverBundle, MethodKind};
use crate::spaces::IpLabel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub method: MethodKind,
    /// Sorted by real part, then imaginary part.
    pub eigenvalues: Vec<Eigenvalue>,
    /// `‖T‖_{a,a}·‖T⁻¹‖_{a,a}`.
    pub kappa_aa: f64,
    /// Extreme `a`-singular values of `T`.
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// `λ_max/λ_min`, only for `a`-self-adjoint methods.
    pub kappa_spectral: Option<f64>,
    pub lambda_min: Option<f64>,
    pub lambda_max: Option<f64>,
    /// `min a(Tu,u)/a(u,u)`.
    pub min_field_of_values: f64,
    pub field_of_values_ip: IpLabel,
}

/// Spectrum, `a`-condition number and field of values of the method's
/// materialized operator.
pub fn spectrum(kind: MethodKind, bundle: &LocalSolverBundle) -> Result<SpectrumReport> {
    let t = materialize(kind, bundle)?;
    let a = bundle.stiffness_dense()?;
    spectrum_of(kind, &t, &a)
}

pub fn spectrum_of(kind: MethodKind, t: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<SpectrumReport> {
    // nalgebra's convenience method iterates to machine epsilon without a cap
    let schur = Schur::try_new(t.clone(), 1e-15, 1000 * t.nrows().max(1))
        .ok_or_else(|| Error::Breakdown("Schur iteration did not converge".into()))?;
    let mut eigenvalues: Vec<Eigenvalue> = schur
        .complex_eigenvalues()
        .iter()
        .map(|z| Eigenvalue { re: z.re, im: z.im })
        .collect();
    eigenvalues.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));

    let gains = eig_sym_gen(&symmetrize(&(t.transpose() * a * t)), a)?;
    let (sigma_min, sigma_max) = (gains.min().max(0.0).sqrt(), gains.max().sqrt());
    let kappa_aa = if sigma_min > 0.0 { sigma_max / sigma_min } else { f64::INFINITY };

    let at = a * t;
    let fov = eig_sym_gen(&symmetrize(&at), a)?;
    let (kappa_spectral, lambda_min, lambda_max) = if kind.is_symmetric() {
        // a-self-adjoint: `A T` is symmetric and the pencil gives the spectrum
        let asym = crate::linalg::dense::asymmetry(&at);
        if asym > 1e-8 {
            return Err(Error::NotSymmetric { asymmetry: asym });
        }
        let (lo, hi) = (fov.min(), fov.max());
        (Some(hi / lo), Some(lo), Some(hi))
    } else {
        (None, None, None)
    };
    Ok(SpectrumReport {
        method: kind,
        eigenvalues,
        kappa_aa,
        sigma_min,
        sigma_max,
        kappa_spectral,
        lambda_min,
        lambda_max,
        min_field_of_values: fov.min(),
        field_of_values_ip: IpLabel::A,
    })
}
