//! Product-space forms, local solvers and the extension, transpose and
//! preconditioned operators built on them.
//!
//! Vectors on `Ĝ` are stored block by block over the local closure dofs of
//! every subdomain (see [`crate::decomposition::Subdomain::local_nodes`]).
//! `G` is the sub-block of interior dofs. Vectors on `H` are coefficient
//! vectors on the free nodes of the grid.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::decomposition::{CutFunctions, OverlapDecomposition};
use crate::error::{Error, Result};
use crate::fem::{assemble_stiffness, boundary_mass, DofMap, FormKind, StructuredGrid};
use crate::linalg::{block_diag, BandedCholesky, CsrMatrix, SpdFactor};
use crate::spaces::IpLabel;

pub const DEFAULT_DENSE_CAP: usize = 5000;

/// Block-diagonal Gram matrix on `Ĝ`.
#[derive(Debug, Clone)]
pub struct ProductSpaceForm {
    pub label: IpLabel,
    pub epsilon: Option<f64>,
    blocks: Vec<DMatrix<f64>>,
    offsets: Vec<usize>,
    interior: Vec<Vec<usize>>,
}

impl ProductSpaceForm {
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// `dim Ĝ`.
    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap_or(&0)
    }

    /// `dim G`.
    pub fn g_dim(&self) -> usize {
        self.interior.iter().map(Vec::len).sum()
    }

    pub fn block(&self, ell: usize) -> &DMatrix<f64> {
        &self.blocks[ell]
    }

    pub fn offset(&self, ell: usize) -> usize {
        self.offsets[ell]
    }

    /// Positions of the interior dofs inside block `ell`.
    pub fn interior_positions(&self, ell: usize) -> &[usize] {
        &self.interior[ell]
    }

    /// Positions of all interior dofs inside a `Ĝ`-vector, in block order.
    pub fn g_positions(&self) -> Vec<usize> {
        self.interior
            .iter()
            .zip(&self.offsets)
            .flat_map(|(pos, &off)| pos.iter().map(move |p| off + p))
            .collect()
    }

    /// `J_G`: the `dim Ĝ × dim G` injection of `G` into `Ĝ`.
    pub fn g_selector(&self) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.dim(), self.g_dim());
        for (k, p) in self.g_positions().into_iter().enumerate() {
            j[(p, k)] = 1.0;
        }
        j
    }

    pub fn gram(&self) -> DMatrix<f64> {
        block_diag(&self.blocks)
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for (ell, b) in self.blocks.iter().enumerate() {
            let (off, n) = (self.offsets[ell], b.nrows());
            out.rows_mut(off, n).copy_from(&(b * v.rows(off, n)));
        }
        out
    }

    pub fn dot(&self, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
        v.dot(&self.apply(w))
    }
}

fn local_dof_maps(grid: &StructuredGrid, od: &OverlapDecomposition) -> Result<Vec<(DofMap, DofMap)>> {
    od.subdomains()
        .iter()
        .map(|s| {
            Ok((
                DofMap::new(s.local_nodes(), grid.num_nodes())?,
                DofMap::new(s.interior_nodes.clone(), grid.num_nodes())?,
            ))
        })
        .collect()
}

fn stiffness_or_zero(grid: &StructuredGrid, elements: &[usize], rows: &DofMap, cols: &DofMap, kind: FormKind) -> Result<CsrMatrix> {
    if elements.is_empty() {
        return Ok(CsrMatrix::zeros(rows.len(), cols.len()));
    }
    Ok(assemble_stiffness(grid, elements, rows, cols, kind)?.matrix)
}

/// The `b` form (`ε = None`) or the `c_ε` form on `Ĝ`:
/// `b_ℓ = ∫_{O_ℓ}∇v∇w + ∫_{∂O_ℓ}vw`, `c_ε,ℓ = ∫_{D_ℓ} + ε∫_{O_ℓ∖D_ℓ} + ∫_{∂O_ℓ}vw`.
pub fn build_form(grid: &StructuredGrid, od: &OverlapDecomposition, epsilon: Option<f64>) -> Result<ProductSpaceForm> {
    if let Some(eps) = epsilon {
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(Error::InvalidEpsilon(eps));
        }
    }
    let mut blocks = Vec::new();
    let mut offsets = vec![0];
    let mut interior = Vec::new();
    for (s, (local, _)) in od.subdomains().iter().zip(local_dof_maps(grid, od)?) {
        let stiffness = match epsilon {
            None => stiffness_or_zero(grid, &s.overlap_elements, &local, &local, FormKind::Overlap)?.to_dense(),
            Some(eps) => {
                stiffness_or_zero(grid, &s.core_elements, &local, &local, FormKind::Region)?.to_dense()
                    + stiffness_or_zero(grid, &s.ring_elements, &local, &local, FormKind::Region)?.to_dense() * eps
            }
        };
        let mass = boundary_mass(grid, &s.overlap_elements, &s.boundary_nodes, &local)?.matrix.to_dense();
        let block = stiffness + mass;
        SpdFactor::new(&block).map_err(|_| Error::NotSpd {
            context: format!("product-space block {} of the {} form", blocks.len(), if epsilon.is_some() { "c_eps" } else { "b" }),
        })?;
        offsets.push(offsets.last().unwrap() + block.nrows());
        blocks.push(block);
        interior.push(s.interior_positions());
    }
    Ok(ProductSpaceForm {
        label: if epsilon.is_some() { IpLabel::CEps } else { IpLabel::B },
        epsilon,
        blocks,
        offsets,
        interior,
    })
}

/// The pair `(b, c_ε)`; `c_ε` only when `ε` is given.
pub fn build_forms(
    grid: &StructuredGrid,
    od: &OverlapDecomposition,
    epsilon: Option<f64>,
) -> Result<(ProductSpaceForm, Option<ProductSpaceForm>)> {
    let b = build_form(grid, od, None)?;
    let c = epsilon.map(|e| build_form(grid, od, Some(e))).transpose()?;
    Ok((b, c))
}

/// Per-subdomain data for the local Dirichlet problems on `O_ℓ`.
#[derive(Debug, Clone)]
pub struct LocalSolver {
    /// Free-dof index of every interior node (the columns of `E_ℓ`).
    pub global_dofs: Vec<usize>,
    /// `B_ℓ`: stiffness on the interior dofs of `O_ℓ`.
    pub dirichlet: DMatrix<f64>,
    factor: SpdFactor,
    /// `Ñ_ℓ`: `∫_{D_ℓ}∇φ_j∇φ_i`, rows free dofs, columns interior dofs.
    pub neumann: CsrMatrix,
    /// Stiffness over `O_ℓ ∖ D_ℓ`, same shape as `neumann`.
    pub ring: CsrMatrix,
    /// `η_ℓ` on the interior dofs.
    pub eta: DVector<f64>,
    /// `χ_ℓ` on the interior dofs.
    pub chi: DVector<f64>,
}

impl LocalSolver {
    pub fn dim(&self) -> usize {
        self.global_dofs.len()
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        self.factor.solve(rhs)
    }

    /// `E_ℓᵀ·r`.
    pub fn restrict(&self, r: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.global_dofs.iter().map(|&g| r[g]))
    }

    /// `out += E_ℓ·x`.
    pub fn extend_add(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        for (k, &g) in self.global_dofs.iter().enumerate() {
            out[g] += x[k];
        }
    }
}

/// Everything needed to apply the operators on one configuration. Built
/// once and read-only afterwards; the global factorization of `A`, needed
/// only for diagnostics, is computed on first use.
#[derive(Debug)]
pub struct LocalSolverBundle {
    grid: StructuredGrid,
    od: OverlapDecomposition,
    cuts: CutFunctions,
    free: DofMap,
    stiffness: CsrMatrix,
    b_form: ProductSpaceForm,
    local: Vec<LocalSolver>,
    global_factor: OnceLock<BandedCholesky>,
    dense_cap: usize,
}

impl LocalSolverBundle {
    pub fn new(grid: &StructuredGrid, od: &OverlapDecomposition) -> Result<Self> {
        let free = grid.free_dofs();
        let stiffness = assemble_stiffness(grid, &grid.all_elements(), &free, &free, FormKind::Global)?.matrix;
        let cuts = CutFunctions::new(grid, od);
        let b_form = build_form(grid, od, None)?;
        let mut local = Vec::new();
        for (ell, (s, (_, interior))) in od.subdomains().iter().zip(local_dof_maps(grid, od)?).enumerate() {
            let dirichlet = assemble_stiffness(grid, &s.overlap_elements, &interior, &interior, FormKind::Overlap)?
                .matrix
                .to_dense();
            let factor = SpdFactor::new(&dirichlet).map_err(|_| Error::NotSpd {
                context: format!("local Dirichlet matrix of subdomain {ell}"),
            })?;
            let global_dofs = interior
                .nodes()
                .iter()
                .map(|&n| free.dof(n).expect("interior nodes are free"))
                .collect();
            local.push(LocalSolver {
                global_dofs,
                dirichlet,
                factor,
                neumann: stiffness_or_zero(grid, &s.core_elements, &free, &interior, FormKind::Region)?,
                ring: stiffness_or_zero(grid, &s.ring_elements, &free, &interior, FormKind::Region)?,
                eta: cuts.eta_on(ell, &interior),
                chi: cuts.chi_on(ell, &interior),
            });
        }
        Ok(Self {
            grid: grid.clone(),
            od: od.clone(),
            cuts,
            free,
            stiffness,
            b_form,
            local,
            global_factor: OnceLock::new(),
            dense_cap: DEFAULT_DENSE_CAP,
        })
    }

    pub fn with_dense_cap(mut self, cap: usize) -> Self {
        self.dense_cap = cap;
        self
    }

    pub fn dense_cap(&self) -> usize {
        self.dense_cap
    }

    pub fn grid(&self) -> &StructuredGrid {
        &self.grid
    }

    pub fn decomposition(&self) -> &OverlapDecomposition {
        &self.od
    }

    pub fn cuts(&self) -> &CutFunctions {
        &self.cuts
    }

    pub fn free_dofs(&self) -> &DofMap {
        &self.free
    }

    /// Global Dirichlet stiffness `A`.
    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    pub fn b_form(&self) -> &ProductSpaceForm {
        &self.b_form
    }

    pub fn local(&self, ell: usize) -> &LocalSolver {
        &self.local[ell]
    }

    pub fn num_subdomains(&self) -> usize {
        self.local.len()
    }

    /// `dim H`.
    pub fn dim(&self) -> usize {
        self.free.len()
    }

    pub fn check_dense(&self, size: usize) -> Result<()> {
        if size > self.dense_cap {
            return Err(Error::DenseCapExceeded { size, cap: self.dense_cap });
        }
        Ok(())
    }

    fn check_h(&self, u: &DVector<f64>) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: u.len(),
            });
        }
        Ok(())
    }

    /// The banded factorization of `A`, computed on first use.
    pub fn global_factor(&self) -> Result<&BandedCholesky> {
        if let Some(f) = self.global_factor.get() {
            return Ok(f);
        }
        let f = BandedCholesky::new(&self.stiffness)?;
        Ok(self.global_factor.get_or_init(|| f))
    }

    /// `A⁻¹·rhs` (one global solve; diagnostics only).
    pub fn solve_global(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        self.global_factor()?.solve(rhs)
    }

    pub fn solve_global_matrix(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.global_factor()?.solve_matrix(rhs)
    }

    /// Packs interior vectors into a `Ĝ`-vector (zero on closure boundaries).
    pub fn pack(&self, parts: &[DVector<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.b_form.dim());
        for (ell, x) in parts.iter().enumerate() {
            let off = self.b_form.offset(ell);
            for (k, &p) in self.b_form.interior_positions(ell).iter().enumerate() {
                out[off + p] = x[k];
            }
        }
        out
    }

    /// Splits a `Ĝ`-vector into interior parts, rejecting vectors outside `G`.
    pub fn unpack(&self, v: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        if v.len() != self.b_form.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.b_form.dim(),
                found: v.len(),
            });
        }
        (0..self.num_subdomains())
            .map(|ell| {
                let off = self.b_form.offset(ell);
                let n = self.b_form.block(ell).nrows();
                let pos = self.b_form.interior_positions(ell);
                let mut interior = vec![false; n];
                for &p in pos {
                    interior[p] = true;
                }
                if (0..n).any(|k| !interior[k] && v[off + k] != 0.0) {
                    return Err(Error::NotInG { block: ell });
                }
                Ok(DVector::from_iterator(pos.len(), pos.iter().map(|&p| v[off + p])))
            })
            .collect()
    }

    /// `R`: restriction of an `H`-vector to every local closure.
    pub fn restrict(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_h(u)?;
        let mut out = DVector::zeros(self.b_form.dim());
        for (ell, s) in self.od.subdomains().iter().enumerate() {
            let off = self.b_form.offset(ell);
            for (k, n) in s.local_nodes().into_iter().enumerate() {
                out[off + k] = u[self.free.dof(n).expect("local nodes are free")];
            }
        }
        Ok(out)
    }

    /// `Ê_w u = {w_ℓ ∘ u}` for nodal weights `w` (χ gives `Ê`, η gives `F̂`).
    pub fn weighted_decomposition(&self, weights: &[DVector<f64>], u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_h(u)?;
        let parts: Vec<DVector<f64>> = self
            .od
            .subdomains()
            .iter()
            .enumerate()
            .map(|(ell, s)| {
                DVector::from_iterator(
                    s.interior_nodes.len(),
                    s.interior_nodes
                        .iter()
                        .map(|&n| weights[ell][n] * u[self.free.dof(n).expect("interior nodes are free")]),
                )
            })
            .collect();
        Ok(self.pack(&parts))
    }
}

/// `E^{T,b}u = {B_ℓ⁻¹ E_ℓᵀ A u}`.
pub fn apply_et(bundle: &LocalSolverBundle, u: &DVector<f64>) -> Result<DVector<f64>> {
    bundle.check_h(u)?;
    let r = bundle.stiffness.mul_vec(u);
    Ok(bundle.pack(&et_parts(bundle, &r)?))
}

fn et_parts(bundle: &LocalSolverBundle, residual: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
    bundle.local.iter().map(|l| l.solve(&l.restrict(residual))).collect()
}

/// `F^{T,b}u = {B_ℓ⁻¹ Ñ_ℓᵀ u}`.
pub fn apply_ft(bundle: &LocalSolverBundle, u: &DVector<f64>) -> Result<DVector<f64>> {
    bundle.check_h(u)?;
    let parts = bundle
        .local
        .iter()
        .map(|l| l.solve(&l.neumann.tr_mul_vec(u)))
        .collect::<Result<Vec<_>>>()?;
    Ok(bundle.pack(&parts))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtensionKind {
    /// Extension by zero.
    E,
    /// `F{v} = A⁻¹ Σ Ñ_ℓ v_ℓ`.
    F,
    /// `F_ov{v} = A⁻¹ Σ K_ℓ v_ℓ` with `K_ℓ` the stiffness over `O_ℓ ∖ D_ℓ`.
    FOv,
    /// `F_ε = F + ε F_ov`.
    FEps(f64),
}

/// Assembles `Σ_ℓ W_ℓ v_ℓ` without any global solve.
fn assemble_load(bundle: &LocalSolverBundle, kind: ExtensionKind, parts: &[DVector<f64>]) -> DVector<f64> {
    let mut out = DVector::zeros(bundle.dim());
    for (l, v) in bundle.local.iter().zip(parts) {
        match kind {
            ExtensionKind::E => l.extend_add(v, &mut out),
            ExtensionKind::F => out += l.neumann.mul_vec(v),
            ExtensionKind::FOv => out += l.ring.mul_vec(v),
            ExtensionKind::FEps(eps) => out += l.neumann.mul_vec(v) + l.ring.mul_vec(v) * eps,
        }
    }
    out
}

pub fn apply_extension(bundle: &LocalSolverBundle, kind: ExtensionKind, v: &DVector<f64>) -> Result<DVector<f64>> {
    let parts = bundle.unpack(v)?;
    let load = assemble_load(bundle, kind, &parts);
    match kind {
        ExtensionKind::E => Ok(load),
        _ => bundle.solve_global(&load),
    }
}

/// The composed methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MethodKind {
    /// `Σ E_ℓ B_ℓ⁻¹ E_ℓᵀ A`.
    As,
    /// `F E^{T,b}`.
    FeT,
    /// `E F^{T,b}`.
    EfT,
    /// `Σ E_ℓ diag(η_ℓ) B_ℓ⁻¹ E_ℓᵀ A`.
    RasCut,
    /// `Σ E_ℓ B_ℓ⁻¹ diag(η_ℓ) E_ℓᵀ A`.
    ObddCut,
    /// `F_ε E^{T,b}`.
    FepsT(f64),
}

impl MethodKind {
    pub const BASE: [MethodKind; 5] = [Self::As, Self::FeT, Self::EfT, Self::RasCut, Self::ObddCut];

    /// Position in the enum order; used for deterministic report sorting.
    pub fn rank(self) -> usize {
        match self {
            Self::As => 0,
            Self::FeT => 1,
            Self::EfT => 2,
            Self::RasCut => 3,
            Self::ObddCut => 4,
            Self::FepsT(_) => 5,
        }
    }

    pub fn is_symmetric(self) -> bool {
        matches!(self, Self::As)
    }

    pub fn validate(self) -> Result<Self> {
        match self {
            Self::FepsT(eps) if !(eps > 0.0 && eps < 1.0) => Err(Error::InvalidEpsilon(eps)),
            other => Ok(other),
        }
    }

    pub fn epsilon(self) -> Option<f64> {
        match self {
            Self::FepsT(eps) => Some(eps),
            _ => None,
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::As => f.write_str("AS"),
            Self::FeT => f.write_str("FE_T"),
            Self::EfT => f.write_str("EF_T"),
            Self::RasCut => f.write_str("RAS_CUT"),
            Self::ObddCut => f.write_str("OBDD_CUT"),
            Self::FepsT(eps) => write!(f, "FEPS_T({eps})"),
        }
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let kind = match s {
            "AS" => Self::As,
            "FE_T" => Self::FeT,
            "EF_T" => Self::EfT,
            "RAS_CUT" => Self::RasCut,
            "OBDD_CUT" => Self::ObddCut,
            _ => {
                let eps = s
                    .strip_prefix("FEPS_T(")
                    .and_then(|r| r.strip_suffix(')'))
                    .and_then(|e| e.parse::<f64>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))?;
                Self::FepsT(eps)
            }
        };
        kind.validate()
    }
}

impl TryFrom<String> for MethodKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MethodKind> for String {
    fn from(m: MethodKind) -> String {
        m.to_string()
    }
}

/// The Galerkin form of each method, free of `A⁻¹`:
/// AS, RAS_CUT, OBDD_CUT return `T u` itself; FE_T and FEPS_T return
/// `A·T u = Σ (Ñ_ℓ + ε K_ℓ) B_ℓ⁻¹ E_ℓᵀ A u`; EF_T returns `A·E F^{T,b} u`.
pub fn equation_apply(kind: MethodKind, bundle: &LocalSolverBundle, u: &DVector<f64>) -> Result<DVector<f64>> {
    bundle.check_h(u)?;
    let kind = kind.validate()?;
    match kind {
        MethodKind::FeT => equation_apply_ext(bundle, ExtensionKind::F, u),
        MethodKind::FepsT(eps) => equation_apply_ext(bundle, ExtensionKind::FEps(eps), u),
        MethodKind::EfT => Ok(bundle.stiffness.mul_vec(&ef_apply(bundle, u)?)),
        _ => local_method_apply(kind, bundle, u),
    }
}

fn equation_apply_ext(bundle: &LocalSolverBundle, ext: ExtensionKind, u: &DVector<f64>) -> Result<DVector<f64>> {
    let r = bundle.stiffness.mul_vec(u);
    Ok(assemble_load(bundle, ext, &et_parts(bundle, &r)?))
}

fn ef_apply(bundle: &LocalSolverBundle, w: &DVector<f64>) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(bundle.dim());
    for l in &bundle.local {
        l.extend_add(&l.solve(&l.neumann.tr_mul_vec(w))?, &mut out);
    }
    Ok(out)
}

fn local_method_apply(kind: MethodKind, bundle: &LocalSolverBundle, u: &DVector<f64>) -> Result<DVector<f64>> {
    let r = bundle.stiffness.mul_vec(u);
    let mut out = DVector::zeros(bundle.dim());
    for l in &bundle.local {
        let local_r = l.restrict(&r);
        let x = match kind {
            MethodKind::As => l.solve(&local_r)?,
            MethodKind::RasCut => l.solve(&local_r)?.component_mul(&l.eta),
            MethodKind::ObddCut => l.solve(&local_r.component_mul(&l.eta))?,
            _ => unreachable!("only local methods reach here"),
        };
        l.extend_add(&x, &mut out);
    }
    Ok(out)
}

/// The method as an operator `T: H → H`. FE_T and FEPS_T need one global
/// solve here.
pub fn operator_apply(kind: MethodKind, bundle: &LocalSolverBundle, u: &DVector<f64>) -> Result<DVector<f64>> {
    bundle.check_h(u)?;
    match kind.validate()? {
        MethodKind::FeT | MethodKind::FepsT(_) => bundle.solve_global(&equation_apply(kind, bundle, u)?),
        MethodKind::EfT => ef_apply(bundle, u),
        k => local_method_apply(k, bundle, u),
    }
}

/// Application used by the preconditioned iteration: the `A⁻¹`-free
/// equation form for FE_T and FEPS_T, the operator image for every other
/// method.
pub fn preconditioned_apply(kind: MethodKind, bundle: &LocalSolverBundle, u: &DVector<f64>) -> Result<DVector<f64>> {
    match kind {
        MethodKind::FeT | MethodKind::FepsT(_) => equation_apply(kind, bundle, u),
        _ => operator_apply(kind, bundle, u),
    }
}

/// Right side of the equation solved by [`equation_apply`] for the load `f`.
/// For FE_T and FEPS_T this is `L̃ = Σ (Ñ_ℓ + εK_ℓ) B_ℓ⁻¹ E_ℓᵀ f`, for EF_T it
/// is `f`, otherwise the preconditioned load `Σ E_ℓ W_ℓ B_ℓ⁻¹ E_ℓᵀ f`.
pub fn equation_rhs(kind: MethodKind, bundle: &LocalSolverBundle, f: &DVector<f64>) -> Result<DVector<f64>> {
    bundle.check_h(f)?;
    let kind = kind.validate()?;
    let parts = || -> Result<Vec<DVector<f64>>> { bundle.local.iter().map(|l| l.solve(&l.restrict(f))).collect() };
    match kind {
        MethodKind::EfT => Ok(f.clone()),
        MethodKind::FeT => Ok(assemble_load(bundle, ExtensionKind::F, &parts()?)),
        MethodKind::FepsT(eps) => Ok(assemble_load(bundle, ExtensionKind::FEps(eps), &parts()?)),
        _ => {
            let mut out = DVector::zeros(bundle.dim());
            for l in &bundle.local {
                let local_f = l.restrict(f);
                let x = match kind {
                    MethodKind::As => l.solve(&local_f)?,
                    MethodKind::RasCut => l.solve(&local_f)?.component_mul(&l.eta),
                    _ => l.solve(&local_f.component_mul(&l.eta))?,
                };
                l.extend_add(&x, &mut out);
            }
            Ok(out)
        }
    }
}

/// Maps the iterate of the equation back to the solution `u`: for EF_T
/// `u = E F^{T,b} w`, otherwise the identity.
pub fn recover_solution(kind: MethodKind, bundle: &LocalSolverBundle, w: &DVector<f64>) -> Result<DVector<f64>> {
    match kind {
        MethodKind::EfT => ef_apply(bundle, w),
        _ => Ok(w.clone()),
    }
}

/// Dense matrix of the operator `T: H → H` of the method.
pub fn materialize(kind: MethodKind, bundle: &LocalSolverBundle) -> Result<DMatrix<f64>> {
    let n = bundle.dim();
    bundle.check_dense(n)?;
    let mut eq = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        let col = match kind.validate()? {
            MethodKind::FeT | MethodKind::FepsT(_) => equation_apply(kind, bundle, &e)?,
            _ => operator_apply(kind, bundle, &e)?,
        };
        eq.set_column(j, &col);
    }
    match kind {
        MethodKind::FeT | MethodKind::FepsT(_) => bundle.solve_global_matrix(&eq),
        _ => Ok(eq),
    }
}

/// Dense matrices of the building blocks, for diagnostics.
impl LocalSolverBundle {
    pub fn stiffness_dense(&self) -> Result<DMatrix<f64>> {
        self.check_dense(self.dim())?;
        Ok(self.stiffness.to_dense())
    }

    /// Extension of the given kind as a `dim H × dim Ĝ` matrix (zero
    /// columns on closure-boundary positions).
    pub fn extension_dense(&self, kind: ExtensionKind) -> Result<DMatrix<f64>> {
        let (n, g) = (self.dim(), self.b_form.dim());
        self.check_dense(n.max(g))?;
        let mut load = DMatrix::zeros(n, g);
        for (ell, l) in self.local.iter().enumerate() {
            let off = self.b_form.offset(ell);
            for (k, &p) in self.b_form.interior_positions(ell).iter().enumerate() {
                let mut col = DVector::zeros(n);
                let mut unit = DVector::zeros(l.dim());
                unit[k] = 1.0;
                match kind {
                    ExtensionKind::E => l.extend_add(&unit, &mut col),
                    ExtensionKind::F => col += l.neumann.mul_vec(&unit),
                    ExtensionKind::FOv => col += l.ring.mul_vec(&unit),
                    ExtensionKind::FEps(eps) => col += l.neumann.mul_vec(&unit) + l.ring.mul_vec(&unit) * eps,
                }
                load.set_column(off + p, &col);
            }
        }
        match kind {
            ExtensionKind::E => Ok(load),
            _ => self.solve_global_matrix(&load),
        }
    }

    /// `R` as a `dim Ĝ × dim H` matrix.
    pub fn restriction_dense(&self) -> Result<DMatrix<f64>> {
        let (n, g) = (self.dim(), self.b_form.dim());
        self.check_dense(n.max(g))?;
        let mut r = DMatrix::zeros(g, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            r.set_column(j, &self.restrict(&e)?);
        }
        Ok(r)
    }

    /// A map `H → Ĝ` applied to every unit vector.
    pub fn columns_of(&self, f: impl Fn(&DVector<f64>) -> Result<DVector<f64>>) -> Result<DMatrix<f64>> {
        let (n, g) = (self.dim(), self.b_form.dim());
        self.check_dense(n.max(g))?;
        let mut out = DMatrix::zeros(g, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            out.set_column(j, &f(&e)?);
        }
        Ok(out)
    }
}
