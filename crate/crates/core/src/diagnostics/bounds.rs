use std::f64::consts::FRAC_PI_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::constants::ConstantsReport;
use super::positivity::{PositivityReport, POSITIVITY_TOL};
use super::spectrum::SpectrumReport;
use crate::error::{Error, Result};
use crate::operators::MethodKind;
use crate::spaces::WielandtReport;

/// Relative tolerance of every asserted comparison.
pub const BOUND_RTOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundStatus {
    Pass,
    Fail,
    /// Quantity without a guarantee; never affects the verdict.
    Report,
}

impl fmt::Display for BoundStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
            Self::Report => "report",
        })
    }
}

/// One inequality `measured ≤ bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    /// Method name, or `-` for statements about the decomposition alone.
    pub method: String,
    pub statement: String,
    pub measured: f64,
    pub bound: f64,
    /// `bound / measured`.
    pub slack: f64,
    pub status: BoundStatus,
}

impl BoundReport {
    pub fn assert(method: &str, statement: &str, measured: f64, bound: f64) -> Self {
        let ok = measured <= bound * (1.0 + BOUND_RTOL) || measured <= bound + f64::EPSILON;
        Self::with_status(method, statement, measured, bound, if ok { BoundStatus::Pass } else { BoundStatus::Fail })
    }

    pub fn report(method: &str, statement: &str, measured: f64, bound: f64) -> Self {
        Self::with_status(method, statement, measured, bound, BoundStatus::Report)
    }

    /// `|measured − target| ≤ tol`, stored as `measured = |difference|`.
    pub fn equality(method: &str, statement: &str, difference: f64, tol: f64) -> Self {
        let d = difference.abs();
        Self::with_status(
            method,
            statement,
            d,
            tol,
            if d <= tol { BoundStatus::Pass } else { BoundStatus::Fail },
        )
    }

    fn with_status(method: &str, statement: &str, measured: f64, bound: f64, status: BoundStatus) -> Self {
        let slack = if measured > 0.0 { bound / measured } else { f64::INFINITY };
        Self {
            method: method.to_string(),
            statement: statement.to_string(),
            measured,
            bound,
            slack,
            status,
        }
    }

    pub fn failed(&self) -> bool {
        self.status == BoundStatus::Fail
    }
}

/// Right side of the constant-based bound for `F_ε E^{T,b}`:
/// `√ν √ρ C_F C_E (1 + ε‖F_ov‖)/(1 − ε‖F_ov F̂‖)`, infinite once the
/// denominator vanishes.
pub fn central_bound(c: &ConstantsReport, eps: f64) -> f64 {
    let den = 1.0 - eps * c.norm_f_ov_f_hat;
    if den <= 0.0 {
        return f64::INFINITY;
    }
    (c.nu as f64).sqrt() * c.rho_mu.sqrt() * c.c_f * c.c_e * (1.0 + eps * c.norm_f_ov) / den
}

/// Statements that depend only on the decomposition and the forms.
pub fn structural_bounds(c: &ConstantsReport) -> Vec<BoundReport> {
    let mut rows = vec![
        BoundReport::assert("-", "norm_e_sq_le_rho", c.norm_e * c.norm_e, c.rho_mu),
        BoundReport::assert("-", "rho_le_nu", c.rho_mu, c.nu as f64),
        BoundReport::assert("-", "norm_f_le_1", c.norm_f, 1.0),
        BoundReport::assert("-", "norm_f_ov_le_norm_e", c.norm_f_ov, c.norm_e),
        BoundReport::equality("-", "q_e_idempotent", c.q_e_idempotency, 1e-10),
        BoundReport::equality("-", "cos_theta_e_hat_et_eq_inv_norm_q_e", c.cos_theta_e_hat_et - 1.0 / c.norm_q_e, 1e-8),
        BoundReport::assert("-", "norm_q_e_le_norm_e_hat_norm_e", c.norm_q_e, c.c_e * c.norm_e),
        BoundReport::equality("-", "cos_alpha_e_eq_projection_norm", c.cos_alpha_e - c.norm_pi_et_on_e_hat, 1e-8),
        BoundReport::equality("-", "cos_alpha_f_eq_1", c.cos_alpha_f - 1.0, 1e-8),
        BoundReport::report("-", "cos_alpha_e", c.cos_alpha_e, 1.0),
        BoundReport::equality("-", "range_e_hat_eq_range_f_hat", c.theta_e_hat_f_hat, 1e-8),
        BoundReport::report("-", "c_f_vs_c_e", c.c_f, c.c_e),
    ];
    for x in &c.extension {
        rows.push(BoundReport::equality(
            "-",
            &format!("sin_theta_ft_ne_eq_cos_beta(eps={})", x.epsilon),
            x.sin_theta_ft_ne - x.cos_beta_ef,
            1e-8,
        ));
        if x.epsilon > 0.0 {
            let den = 1.0 - x.epsilon * c.norm_f_ov_f_hat;
            let hat_bound = if den > 0.0 { c.c_f / den } else { f64::INFINITY };
            rows.push(BoundReport::assert(
                "-",
                &format!("norm_f_eps(eps={})", x.epsilon),
                x.norm_f,
                1.0 + x.epsilon * c.norm_f_ov,
            ));
            rows.push(BoundReport::assert("-", &format!("norm_f_hat_eps(eps={})", x.epsilon), x.norm_f_hat, hat_bound));
        }
    }
    for f in &c.forms {
        rows.push(BoundReport::equality("-", &format!("r0_eq_1(eps={})", f.epsilon), f.r0 - 1.0, 1e-10));
        rows.push(BoundReport::assert("-", &format!("r1_le_sqrt_nu(eps={})", f.epsilon), f.r1, (c.nu as f64).sqrt()));
        rows.push(BoundReport::assert(
            "-",
            &format!("norm_pi_rr_c_le_r0_r1(eps={})", f.epsilon),
            f.norm_pi_rr_c,
            f.r0 * f.r1,
        ));
    }
    rows
}

/// Bounds on the method's spectrum and condition number.
pub fn verify_bounds(kind: MethodKind, c: &ConstantsReport, s: &SpectrumReport) -> Result<Vec<BoundReport>> {
    if s.method != kind {
        return Err(Error::Config(format!("spectrum of {} given for {kind}", s.method)));
    }
    let name = kind.to_string();
    let m = name.as_str();
    let sqrt_nu = (c.nu as f64).sqrt();
    let mut rows = Vec::new();
    match kind {
        MethodKind::As => {
            let lo = s.lambda_min.ok_or(Error::MissingConstant("lambda_min"))?;
            let hi = s.lambda_max.ok_or(Error::MissingConstant("lambda_max"))?;
            rows.push(BoundReport::assert(m, "lions_lower", 1.0 / lo, c.c_e * c.c_e));
            rows.push(BoundReport::assert(m, "lions_upper", hi, c.rho_mu));
            rows.push(BoundReport::assert(m, "kappa_lions", s.kappa_aa, c.rho_mu * c.c_e * c.c_e));
            rows.push(BoundReport::assert(
                m,
                "kappa_symmetric_corollary",
                s.kappa_aa,
                c.cos_alpha_e * c.norm_e * c.norm_e * c.c_e * c.c_e,
            ));
            if s.eigenvalues.iter().any(|z| z.im != 0.0 || z.re <= 0.0) {
                rows.push(BoundReport::with_status(m, "eigenvalues_real_positive", 1.0, 0.0, BoundStatus::Fail));
            }
        }
        MethodKind::FeT | MethodKind::FepsT(_) => {
            let eps = kind.epsilon().unwrap_or(0.0);
            let x = c.extension(eps)?;
            let tail = c.norm_e * c.c_e;
            rows.push(BoundReport::assert(
                m,
                "five_norm",
                s.kappa_aa,
                x.norm_f_hat * x.norm_f * x.norm_q_on_e_hat * tail,
            ));
            rows.push(BoundReport::assert(
                m,
                "beta_form",
                s.kappa_aa,
                x.norm_f_hat * x.norm_f * c.cos_alpha_e / x.cos_beta_ef * tail,
            ));
            rows.push(BoundReport::report(m, "restricted_q_le_q_cos_alpha_e", x.norm_q_on_e_hat, x.norm_q * c.cos_alpha_e));
            rows.push(BoundReport::equality(m, "inv_norm_q_eq_cos_beta", 1.0 / x.norm_q - x.cos_beta_ef, 1e-8));
            if eps == 0.0 {
                rows.push(BoundReport::assert(m, "central_limit", s.kappa_aa, central_bound(c, 0.0)));
                let as_bound = c.rho_mu * c.c_e * c.c_e;
                rows.push(BoundReport::report(m, "comparison_bound_vs_as_bound", central_bound(c, 0.0), as_bound));
                rows.push(BoundReport::report(
                    m,
                    "comparison_hypotheses",
                    (c.c_f / c.c_e).max(c.rho_mu.sqrt() / sqrt_nu),
                    1.0,
                ));
            } else {
                let f = c.form(eps)?;
                rows.push(BoundReport::assert(m, "central", s.kappa_aa, central_bound(c, eps)));
                rows.push(BoundReport::report(m, "central_vs_limit", central_bound(c, 0.0), central_bound(c, eps)));
                rows.push(BoundReport::assert(
                    m,
                    "restriction_form",
                    s.kappa_aa,
                    x.norm_f_hat * x.norm_f * c.cos_alpha_e * f.r0 * f.r1 * tail,
                ));
            }
        }
        MethodKind::EfT => {
            let x = c.extension(0.0)?;
            rows.push(BoundReport::assert(
                m,
                "five_norm_swapped",
                s.kappa_aa,
                c.c_e * c.norm_e * x.norm_q_swapped_on_f_hat * c.norm_f * c.c_f,
            ));
            let inverse = 1.0 / s.sigma_min;
            let sum = c.beta_e + c.beta_f;
            let bound = if sum < FRAC_PI_2 {
                c.cos_alpha_e / sum.cos() * c.c_e * c.c_f
            } else {
                f64::INFINITY
            };
            rows.push(BoundReport::report(m, "beta_sum_hypothesis", sum, FRAC_PI_2));
            rows.push(BoundReport::report(m, "beta_sum_inverse", inverse, bound));
        }
        MethodKind::RasCut | MethodKind::ObddCut => {
            rows.push(BoundReport::report(m, "kappa_vs_lions", s.kappa_aa, c.rho_mu * c.c_e * c.c_e));
        }
    }
    Ok(rows)
}

/// Positivity rows over an `ε` sweep; the verdict is asserted only at the
/// smallest `ε`, the others are reported.
pub fn positivity_bounds(reports: &[PositivityReport]) -> Vec<BoundReport> {
    let smallest = reports.iter().map(|p| p.epsilon).fold(f64::INFINITY, f64::min);
    let mut rows = Vec::new();
    for p in reports {
        let tag = |s: &str| format!("{s}(eps={})", p.epsilon);
        let fov = BoundReport::assert("-", &tag("positivity"), -p.min_field_of_values, POSITIVITY_TOL);
        rows.push(if p.epsilon == smallest {
            fov
        } else {
            BoundReport::report("-", &tag("positivity"), -p.min_field_of_values, POSITIVITY_TOL)
        });
        rows.push(BoundReport::assert("-", &tag("tan_theta_wielandt"), p.tan_theta, p.multiplier_corrected));
        rows.push(BoundReport::report("-", &tag("tan_theta_printed_multiplier"), p.tan_theta, p.multiplier_printed));
        rows.push(BoundReport::equality("-", &tag("tan_theta_eq_cot_theta_g"), p.tan_theta - p.cot_theta_g, 1e-8 * p.tan_theta.max(1.0)));
        rows.push(BoundReport::report("-", &tag("alpha_r"), p.alpha_r, 1.0));
        rows.push(BoundReport::report("-", &tag("alpha_r_corrected"), p.alpha_r_corrected, 1.0));
        rows.push(BoundReport::report("-", &tag("positivity_conclusion"), -p.conclusion_margin, 0.0));
        rows.push(BoundReport::report("-", &tag("positivity_conclusion_corrected"), -p.conclusion_margin_corrected, 0.0));
    }
    rows
}

pub fn wielandt_bounds(eps: f64, w: &WielandtReport) -> Vec<BoundReport> {
    vec![
        BoundReport::assert("-", &format!("wielandt(eps={eps})"), w.worst_ratio, w.bound + 1e-10),
        BoundReport::report("-", &format!("wielandt_extremal(eps={eps})"), w.extremal_ratio, w.bound),
    ]
}
