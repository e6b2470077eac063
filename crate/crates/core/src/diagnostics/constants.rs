use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::model::DenseModel;
use crate::error::{Error, Result};
use crate::linalg::{eig_sym, eig_sym_gen, symmetrize};
use crate::operators::{build_form, LocalSolverBundle};
use crate::spaces::{oblique_project, operator_norm, orth_project, subspace_angles, InnerProduct, IpLabel, Subspace};

/// Constants of the extension `F_ε` (`ε = 0` is `F` itself) that enter the
/// nonsymmetric bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionConstants {
    pub epsilon: f64,
    /// `‖F_ε‖_{b,a}`.
    pub norm_f: f64,
    /// `‖F̂_ε‖_{a,b}` with `F̂_ε = F̂ (F_ε F̂)⁻¹`.
    pub norm_f_hat: f64,
    /// `cos β_{E,F} = cos Θ_b(R(F^{T,b}), R(E^{T,b}))`.
    pub cos_beta_ef: f64,
    /// `sin θ_b(R(F^{T,b}), N(E))`.
    pub sin_theta_ft_ne: f64,
    /// `‖Q‖_{b,b}` for `Q = Q(R(E^{T,b}), N(F))`.
    pub norm_q: f64,
    /// `‖Q|_{R(Ê)}‖_{b,b}`.
    pub norm_q_on_e_hat: f64,
    /// `‖Q'|_{R(F̂)}‖_{b,b}` for `Q' = Q(R(F^{T,b}), N(E))`, the roles of `E`
    /// and `F` exchanged.
    pub norm_q_swapped_on_f_hat: f64,
}

/// Constants of the pair `(b, c_ε)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormConstants {
    pub epsilon: f64,
    /// `r₀² = max c_ε/b` on `Ĝ`.
    pub r0: f64,
    /// `r₁² = max b/c_ε` on `R(R)`.
    pub r1: f64,
    /// Extreme eigenvalues of the pencil `(c_ε, b)` on `Ĝ`.
    pub m: f64,
    pub big_m: f64,
    /// `‖Π_{R(R),c_ε}‖_{b,b}`.
    pub norm_pi_rr_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub nu: usize,
    pub rho_mu: f64,
    /// Pairwise strengthened Cauchy cosines, `μ_{ℓℓ} = 1`.
    pub mu: Vec<Vec<f64>>,
    /// `‖Ê‖_{a,b}`, the measured stable-decomposition constant.
    pub c_e: f64,
    /// `‖F̂‖_{a,b}`.
    pub c_f: f64,
    pub norm_e: f64,
    pub norm_f: f64,
    pub norm_f_ov: f64,
    /// `‖F_ov F̂‖_{a,a}`.
    pub norm_f_ov_f_hat: f64,
    /// `cos θ_b(R(Ê), R(E^{T,b}))`.
    pub cos_alpha_e: f64,
    /// `cos θ_b(R(F̂), R(F^{T,b}))`.
    pub cos_alpha_f: f64,
    /// `‖Π_{R(E^{T,b}),b}|_{R(Ê)}‖_{b,b}`, equal to `cos α_E`.
    pub norm_pi_et_on_e_hat: f64,
    /// `‖Π_{R(F^{T,b}),b}|_{R(F̂)}‖_{b,b}`, equal to `cos α_F`.
    pub norm_pi_ft_on_f_hat: f64,
    /// `Θ_b(R(Ê), R(F̂))`.
    pub theta_e_hat_f_hat: f64,
    /// `Q_E = ÊE` and `Q_F = F̂F`.
    pub norm_q_e: f64,
    pub norm_q_f: f64,
    /// `max |Q_E² − Q_E|`.
    pub q_e_idempotency: f64,
    /// `cos Θ_b(R(Ê), R(E^{T,b}))`.
    pub cos_theta_e_hat_et: f64,
    /// `arccos(1/‖Q_E‖)` and `arccos(1/‖Q_F‖)`.
    pub beta_e: f64,
    pub beta_f: f64,
    pub extension: Vec<ExtensionConstants>,
    pub forms: Vec<FormConstants>,
    pub inner_products: InnerProductLabels,
}

/// Which inner product measures each side of the reported norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerProductLabels {
    pub h: IpLabel,
    pub g: IpLabel,
    pub forms: IpLabel,
}

impl ConstantsReport {
    pub fn extension(&self, eps: f64) -> Result<&ExtensionConstants> {
        self.extension
            .iter()
            .find(|x| x.epsilon == eps)
            .ok_or(Error::MissingConstant("extension constants for epsilon"))
    }

    pub fn form(&self, eps: f64) -> Result<&FormConstants> {
        self.forms
            .iter()
            .find(|x| x.epsilon == eps)
            .ok_or(Error::MissingConstant("form constants for epsilon"))
    }
}

/// Measures every constant on the configuration of `bundle`. `epsilons`
/// selects the `c_ε` forms and `F_ε` extensions; `F` itself is always
/// included as `ε = 0`.
pub fn measure_constants(bundle: &LocalSolverBundle, epsilons: &[f64]) -> Result<ConstantsReport> {
    for &eps in epsilons {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidEpsilon(eps));
        }
    }
    let model = DenseModel::new(bundle)?;
    measure_with_model(bundle, &model, epsilons)
}

pub fn measure_with_model(bundle: &LocalSolverBundle, model: &DenseModel, epsilons: &[f64]) -> Result<ConstantsReport> {
    let (a, b) = (&model.a, &model.b);
    let (mu, rho_mu) = strengthened_cauchy(bundle, a)?;

    let c_e = operator_norm(&model.e_hat, a, b, None)?;
    let c_f = operator_norm(&model.f_hat, a, b, None)?;
    let norm_e = operator_norm(&model.e, b, a, None)?;
    let norm_f = operator_norm(&model.f, b, a, None)?;
    let norm_f_ov = operator_norm(&model.f_ov, b, a, None)?;
    let norm_f_ov_f_hat = operator_norm(&(&model.f_ov * &model.f_hat), a, a, None)?;

    let range_e_hat = model.range(&model.e_hat)?;
    let range_f_hat = model.range(&model.f_hat)?;
    let range_et = model.range(&model.e_t)?;
    let range_ft = model.range(&model.adjoint(&model.f)?)?;
    let alpha_e = subspace_angles(&range_e_hat, &range_et, b)?;
    let alpha_f = subspace_angles(&range_f_hat, &range_ft, b)?;
    let pi_et = orth_project(&range_et, b)?;
    let pi_ft = orth_project(&range_ft, b)?;

    let q_e = &model.e_hat * &model.e;
    let q_f = &model.f_hat * &model.f;
    let norm_q_e = operator_norm(&q_e, b, b, None)?;
    let norm_q_f = operator_norm(&q_f, b, b, None)?;

    let mut extension = vec![extension_constants(model, &range_e_hat, &range_f_hat, &range_et, 0.0)?];
    let mut forms = Vec::new();
    for &eps in epsilons {
        extension.push(extension_constants(model, &range_e_hat, &range_f_hat, &range_et, eps)?);
        forms.push(form_constants(bundle, model, eps)?);
    }

    Ok(ConstantsReport {
        nu: bundle.decomposition().nu(),
        rho_mu,
        mu,
        c_e,
        c_f,
        norm_e,
        norm_f,
        norm_f_ov,
        norm_f_ov_f_hat,
        cos_alpha_e: alpha_e.theta_min.cos(),
        cos_alpha_f: alpha_f.theta_min.cos(),
        norm_pi_et_on_e_hat: operator_norm(&pi_et, b, b, Some(&range_e_hat))?,
        norm_pi_ft_on_f_hat: operator_norm(&pi_ft, b, b, Some(&range_f_hat))?,
        theta_e_hat_f_hat: subspace_angles(&range_e_hat, &range_f_hat, b)?.theta_max,
        norm_q_e,
        norm_q_f,
        q_e_idempotency: (&q_e * &q_e - &q_e).amax(),
        cos_theta_e_hat_et: subspace_angles(&range_e_hat, &range_et, b)?.theta_max.cos(),
        beta_e: (1.0 / norm_q_e).min(1.0).acos(),
        beta_f: (1.0 / norm_q_f).min(1.0).acos(),
        extension,
        forms,
        inner_products: InnerProductLabels {
            h: IpLabel::A,
            g: IpLabel::B,
            forms: IpLabel::CEps,
        },
    })
}

/// `μ_{ℓk} = cos θ_a(E_ℓ(G_ℓ), E_k(G_k))` for neighbors, 0 otherwise, and
/// the spectral radius of `μ`.
fn strengthened_cauchy(bundle: &LocalSolverBundle, a: &InnerProduct) -> Result<(Vec<Vec<f64>>, f64)> {
    let (n, ns) = (bundle.dim(), bundle.num_subdomains());
    let bases: Vec<Subspace> = (0..ns)
        .map(|ell| {
            let dofs = &bundle.local(ell).global_dofs;
            let mut m = DMatrix::zeros(n, dofs.len());
            for (k, &g) in dofs.iter().enumerate() {
                m[(g, k)] = 1.0;
            }
            Subspace::new(m)
        })
        .collect::<Result<_>>()?;
    let mut mu = DMatrix::identity(ns, ns);
    for ell in 0..ns {
        for &k in bundle.decomposition().neighbors(ell) {
            if k > ell {
                let c = subspace_angles(&bases[ell], &bases[k], a)?.theta_min.cos();
                mu[(ell, k)] = c;
                mu[(k, ell)] = c;
            }
        }
    }
    let (values, _) = eig_sym(&mu);
    let rho = values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let rows = (0..ns).map(|i| mu.row(i).iter().copied().collect()).collect();
    Ok((rows, rho))
}

fn extension_constants(
    model: &DenseModel,
    range_e_hat: &Subspace,
    range_f_hat: &Subspace,
    range_et: &Subspace,
    eps: f64,
) -> Result<ExtensionConstants> {
    let (a, b) = (&model.a, &model.b);
    let f = model.f_eps(eps);
    // F_ε F̂ = I + ε F_ov F̂
    let f_f_hat = &f * &model.f_hat;
    let f_hat_eps = &model.f_hat
        * f_f_hat
            .clone()
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Breakdown(format!("F_ε F̂ is singular at ε = {eps}")))?;
    let range_ft = model.range(&model.adjoint(&f)?)?;
    let kernel_e = range_et.complement(b)?;
    let kernel_f = range_ft.complement(b)?;
    let q = oblique_project(range_et, &kernel_f)?;
    let q_swapped = oblique_project(&range_ft, &kernel_e)?;
    Ok(ExtensionConstants {
        epsilon: eps,
        norm_f: operator_norm(&f, b, a, None)?,
        norm_f_hat: operator_norm(&f_hat_eps, a, b, None)?,
        cos_beta_ef: subspace_angles(&range_ft, range_et, b)?.theta_max.cos(),
        sin_theta_ft_ne: subspace_angles(&range_ft, &kernel_e, b)?.theta_min.sin(),
        norm_q: operator_norm(&q, b, b, None)?,
        norm_q_on_e_hat: operator_norm(&q, b, b, Some(range_e_hat))?,
        norm_q_swapped_on_f_hat: operator_norm(&q_swapped, b, b, Some(range_f_hat))?,
    })
}

fn form_constants(bundle: &LocalSolverBundle, model: &DenseModel, eps: f64) -> Result<FormConstants> {
    let b_hat = bundle.b_form().gram();
    let c_hat = build_form(bundle.grid(), bundle.decomposition(), Some(eps))?.gram();
    let pencil = eig_sym_gen(&c_hat, &b_hat)?;
    let r = &model.restriction;
    let rbr = symmetrize(&(r.transpose() * &b_hat * r));
    let rcr = symmetrize(&(r.transpose() * &c_hat * r));
    let r1 = eig_sym_gen(&rbr, &rcr)?.max().sqrt();
    let b_ip = InnerProduct::new(b_hat.clone(), IpLabel::B)?;
    let c_ip = InnerProduct::new(c_hat, IpLabel::CEps)?;
    let range_r = Subspace::range(r, &c_ip)?;
    let pi = orth_project(&range_r, &c_ip)?;
    Ok(FormConstants {
        epsilon: eps,
        r0: pencil.max().sqrt(),
        r1,
        m: pencil.min(),
        big_m: pencil.max(),
        norm_pi_rr_c: operator_norm(&pi, &b_ip, &b_ip, None)?,
    })
}
