use nalgebra::DMatrix;

use crate::error::Result;
use crate::operators::{apply_et, ExtensionKind, LocalSolverBundle};
use crate::spaces::{InnerProduct, IpLabel, Subspace};

/// Dense matrices of every operator in the `(H, a)` / `(G, b)` pair.
///
/// Maps into or out of the local spaces are expressed in `G` coordinates
/// (interior positions of `Ĝ`, selected by `J_G`), so the `b` Gram matrix
/// used here is `J_Gᵀ B̂ J_G`.
#[derive(Debug, Clone)]
pub struct DenseModel {
    /// `A` on `H`.
    pub a: InnerProduct,
    /// `b` restricted to `G`.
    pub b: InnerProduct,
    /// `J_G`: `dim Ĝ × dim G`.
    pub selector: DMatrix<f64>,
    /// `R`: `dim Ĝ × dim H`.
    pub restriction: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub f_ov: DMatrix<f64>,
    /// `Ê u = {χ_ℓ u}`.
    pub e_hat: DMatrix<f64>,
    /// `F̂ u = {η_ℓ u}`.
    pub f_hat: DMatrix<f64>,
    /// `E^{T,b}` from the local solves.
    pub e_t: DMatrix<f64>,
}

impl DenseModel {
    pub fn new(bundle: &LocalSolverBundle) -> Result<Self> {
        let form = bundle.b_form();
        let j = form.g_selector();
        let jt = j.transpose();
        let a = InnerProduct::new(bundle.stiffness_dense()?, IpLabel::A)?;
        let b = InnerProduct::new(&jt * form.gram() * &j, IpLabel::B)?;
        let cuts = bundle.cuts();
        let e_hat = &jt * bundle.columns_of(|u| bundle.weighted_decomposition(&cuts.chi, u))?;
        let f_hat = &jt * bundle.columns_of(|u| bundle.weighted_decomposition(&cuts.eta, u))?;
        let e_t = &jt * bundle.columns_of(|u| apply_et(bundle, u))?;
        Ok(Self {
            restriction: bundle.restriction_dense()?,
            e: bundle.extension_dense(ExtensionKind::E)? * &j,
            f: bundle.extension_dense(ExtensionKind::F)? * &j,
            f_ov: bundle.extension_dense(ExtensionKind::FOv)? * &j,
            selector: j,
            a,
            b,
            e_hat,
            f_hat,
            e_t,
        })
    }

    pub fn dim_h(&self) -> usize {
        self.a.dim()
    }

    pub fn dim_g(&self) -> usize {
        self.b.dim()
    }

    /// `F_ε = F + ε F_ov` (`ε = 0` gives `F`).
    pub fn f_eps(&self, eps: f64) -> DMatrix<f64> {
        &self.f + &self.f_ov * eps
    }

    /// `b`-to-`a` adjoint `M^{T,b} = B⁻¹ Mᵀ A` of a map `M: G → H`.
    pub fn adjoint(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.b.factor().solve_matrix(&(m.transpose() * self.a.gram()))
    }

    pub fn range(&self, m: &DMatrix<f64>) -> Result<Subspace> {
        Subspace::range(m, &self.b)
    }

    /// `N(M) = R(M^{T,b})^{⊥,b}` for a map `M: G → H`.
    pub fn kernel(&self, m: &DMatrix<f64>) -> Result<Subspace> {
        self.range(&self.adjoint(m)?)?.complement(&self.b)
    }
}
