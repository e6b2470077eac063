use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::model::DenseModel;
use crate::error::{Error, Result};
use crate::linalg::{eig_sym_gen, symmetrize, SpdFactor};
use crate::operators::{build_form, LocalSolverBundle};
use crate::spaces::{subspace_angles, InnerProduct, IpLabel, Subspace};

/// Field-of-values threshold for the positivity verdict.
pub const POSITIVITY_TOL: f64 = 1e-10;

/// Positivity of `T_ε = F_ε E^{T,b} = R^{T,c_ε} Π_{G,b} R`, for which
/// `a(T_ε u, u) = c_ε(Π_{G,b} Ru, Ru)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub epsilon: f64,
    /// `min c_ε(Π_{G,b}Ru, Ru) / c_ε(Ru, Ru)`.
    pub min_field_of_values: f64,
    /// The same numerator over `a(u,u)`: the `a`-field of values of `T_ε`.
    pub min_field_of_values_a: f64,
    /// `a`-field of values of `F E^{T,b}` (the `ε → 0` operator).
    pub min_field_of_values_limit: f64,
    /// Extreme eigenvalues of `(c_ε, b)` on `Ĝ`.
    pub m: f64,
    pub big_m: f64,
    /// `tan Θ_{c_ε}(G^{⊥,b}, G^{⊥,c_ε})`.
    pub tan_theta: f64,
    /// `1/tan θ_{c_ε}(G, G^{⊥,b})`, equal to `tan_theta`.
    pub cot_theta_g: f64,
    /// `√(mM)(M−m)²/(2(M+m))`.
    pub multiplier_printed: f64,
    /// `(M−m)/(2√(mM))`, the bound that follows from the Wielandt inequality.
    pub multiplier_corrected: f64,
    /// `sup_u ‖(I−Π_{G,c})Ru‖_c / ‖Π_{G,c}Ru‖_c`.
    pub ratio_sup: f64,
    /// `multiplier_printed · ratio_sup`.
    pub alpha_r: f64,
    pub alpha_r_corrected: f64,
    /// `min [c(Π_{G,b}Ru, Ru) − (1−α²)‖Π_{G,c}Ru‖²_c] / c(Ru, Ru)` for the
    /// printed and corrected `α_R`.
    pub conclusion_margin: f64,
    pub conclusion_margin_corrected: f64,
    pub pass: bool,
}

pub fn positivity_report(bundle: &LocalSolverBundle, eps: f64) -> Result<PositivityReport> {
    let model = DenseModel::new(bundle)?;
    positivity_with_model(bundle, &model, eps)
}

pub fn positivity_with_model(bundle: &LocalSolverBundle, model: &DenseModel, eps: f64) -> Result<PositivityReport> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidEpsilon(eps));
    }
    let b = bundle.b_form().gram();
    let c = build_form(bundle.grid(), bundle.decomposition(), Some(eps))?.gram();
    positivity_from_grams(model, &b, &c, eps)
}

/// The computation on explicit Gram matrices of `b` and `c` over `Ĝ`.
pub fn positivity_from_grams(model: &DenseModel, b: &DMatrix<f64>, c: &DMatrix<f64>, eps: f64) -> Result<PositivityReport> {
    let j = &model.selector;
    let r = &model.restriction;
    let pi_b = projector_onto_g(j, b)?;
    let pi_c = projector_onto_g(j, c)?;

    let rcr = symmetrize(&(r.transpose() * c * r));
    let num = symmetrize(&(r.transpose() * c * &pi_b * r));
    let min_field_of_values = eig_sym_gen(&num, &rcr)?.min();
    let min_field_of_values_a = eig_sym_gen(&num, model.a.gram())?.min();
    let limit = model.a.gram() * &model.f * &model.e_t;
    let min_field_of_values_limit = eig_sym_gen(&symmetrize(&limit), model.a.gram())?.min();

    let pencil = eig_sym_gen(c, b)?;
    let (m, big_m) = (pencil.min(), pencil.max());

    let b_ip = InnerProduct::new(b.clone(), IpLabel::B)?;
    let c_ip = InnerProduct::new(c.clone(), IpLabel::CEps)?;
    let g = Subspace::new(j.clone())?;
    let g_perp_b = g.complement(&b_ip)?;
    let g_perp_c = g.complement(&c_ip)?;
    let tan_theta = subspace_angles(&g_perp_b, &g_perp_c, &c_ip)?.theta_max.tan();
    let cot_theta_g = 1.0 / subspace_angles(&g, &g_perp_b, &c_ip)?.theta_min.tan();

    let multiplier_printed = (m * big_m).sqrt() * (big_m - m).powi(2) / (2.0 * (big_m + m));
    let multiplier_corrected = (big_m - m) / (2.0 * (m * big_m).sqrt());

    let id = DMatrix::<f64>::identity(pi_c.nrows(), pi_c.nrows());
    let y = &pi_c * r;
    let z = (&id - &pi_c) * r;
    let yy = symmetrize(&(y.transpose() * c * &y));
    let zz = symmetrize(&(z.transpose() * c * &z));
    let ratio_sup = eig_sym_gen(&zz, &yy)?.max().max(0.0).sqrt();
    let alpha_r = multiplier_printed * ratio_sup;
    let alpha_r_corrected = multiplier_corrected * ratio_sup;
    let margin = |alpha: f64| -> Result<f64> {
        let diff = &num - &yy * (1.0 - alpha * alpha);
        Ok(eig_sym_gen(&symmetrize(&diff), &rcr)?.min())
    };

    Ok(PositivityReport {
        epsilon: eps,
        min_field_of_values,
        min_field_of_values_a,
        min_field_of_values_limit,
        m,
        big_m,
        tan_theta,
        cot_theta_g,
        multiplier_printed,
        multiplier_corrected,
        ratio_sup,
        alpha_r,
        alpha_r_corrected,
        conclusion_margin: margin(alpha_r)?,
        conclusion_margin_corrected: margin(alpha_r_corrected)?,
        pass: min_field_of_values >= -POSITIVITY_TOL,
    })
}

/// `Π_{G,w} = J (JᵀWJ)⁻¹ JᵀW`.
fn projector_onto_g(j: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let jt_w = j.transpose() * w;
    let inner = SpdFactor::new(&symmetrize(&(&jt_w * j)))?;
    Ok(j * inner.solve_matrix(&jt_w)?)
}
