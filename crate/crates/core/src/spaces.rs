//! Subspace geometry in SPD inner products: projectors, angles, restricted
//! operator norms and the Wielandt inequality.
//!
//! Everything is computed in the coordinates `z = Lᵀx` where `G = L·Lᵀ` is
//! the Gram matrix, so that the inner product becomes Euclidean.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eig_sym, eig_sym_gen, svd, SpdFactor};

/// Relative rank tolerance used for every degeneracy decision.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IpLabel {
    A,
    B,
    CEps,
    Euclidean,
}

/// An SPD Gram matrix together with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct InnerProduct {
    gram: DMatrix<f64>,
    label: IpLabel,
    factor: SpdFactor,
}

impl InnerProduct {
    pub fn new(gram: DMatrix<f64>, label: IpLabel) -> Result<Self> {
        let factor = SpdFactor::new(&gram)?;
        Ok(Self { gram, label, factor })
    }

    pub fn euclidean(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n), IpLabel::Euclidean).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn label(&self) -> IpLabel {
        self.label
    }

    pub fn factor(&self) -> &SpdFactor {
        &self.factor
    }

    pub fn dot(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        x.dot(&(&self.gram * y))
    }

    pub fn norm(&self, x: &DVector<f64>) -> f64 {
        self.dot(x, x).max(0.0).sqrt()
    }

    /// `Lᵀ·M`
    fn to_coords(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor.l().transpose() * m
    }

    /// `L⁻ᵀ·Z`
    fn from_coords(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor.solve_lower_transpose(z)
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: n,
            });
        }
        Ok(())
    }
}

/// Column span of a full-rank basis matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: DMatrix<f64>,
}

impl Subspace {
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        let rank = svd(&basis).rank(RANK_TOL);
        if rank < basis.ncols() {
            return Err(Error::RankDeficient {
                rank,
                cols: basis.ncols(),
            });
        }
        Ok(Self { basis })
    }

    pub fn whole(n: usize) -> Self {
        Self {
            basis: DMatrix::identity(n, n),
        }
    }

    /// Range of an arbitrary (possibly rank-deficient) matrix, returned with
    /// an `ip`-orthonormal basis. Directions whose singular value falls below
    /// `RANK_TOL` relative to the largest are dropped.
    pub fn range(m: &DMatrix<f64>, ip: &InnerProduct) -> Result<Self> {
        ip.check_dim(m.nrows())?;
        let dec = svd(&ip.to_coords(m));
        let r = dec.rank(RANK_TOL);
        let u = dec.u.columns(0, r).into_owned();
        Ok(Self {
            basis: ip.from_coords(&u),
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// `X^{⊥,ip}` with an `ip`-orthonormal basis.
    pub fn complement(&self, ip: &InnerProduct) -> Result<Self> {
        let q = ip.to_coords(orthonormalize(self, ip)?.basis());
        let n = self.ambient_dim();
        let (values, vectors) = eig_sym(&(DMatrix::identity(n, n) - &q * q.transpose()));
        let keep: Vec<usize> = (0..n).filter(|&i| values[i] > 0.5).collect();
        let z = DMatrix::from_fn(n, keep.len(), |r, c| vectors[(r, keep[c])]);
        Ok(Self {
            basis: ip.from_coords(&z),
        })
    }
}

/// `ip`-orthonormal basis of the same span, column signs fixed so that the
/// triangular factor has a positive diagonal.
pub fn orthonormalize(x: &Subspace, ip: &InnerProduct) -> Result<Subspace> {
    ip.check_dim(x.ambient_dim())?;
    let w = ip.to_coords(x.basis());
    let rank = svd(&w).rank(RANK_TOL);
    if rank < x.dim() {
        return Err(Error::RankDeficient { rank, cols: x.dim() });
    }
    let qr = w.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..q.ncols() {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(Subspace {
        basis: ip.from_coords(&q),
    })
}

/// Orthogonal projector `Π_{X,ip} = Q·Qᵀ·G` for an `ip`-orthonormal basis `Q`.
pub fn orth_project(x: &Subspace, ip: &InnerProduct) -> Result<DMatrix<f64>> {
    let q = orthonormalize(x, ip)?;
    Ok(q.basis() * q.basis().transpose() * ip.gram())
}

/// Oblique projector onto `X` along `Y`, `Q = [X 0]·[X Y]⁻¹`.
pub fn oblique_project(x: &Subspace, y: &Subspace) -> Result<DMatrix<f64>> {
    let n = x.ambient_dim();
    if y.ambient_dim() != n || x.dim() + y.dim() != n {
        return Err(Error::NotComplementary);
    }
    let mut m = DMatrix::zeros(n, n);
    m.columns_mut(0, x.dim()).copy_from(x.basis());
    m.columns_mut(x.dim(), y.dim()).copy_from(y.basis());
    // columns scaled to unit length so the conditioning test is scale-free
    for mut c in m.column_iter_mut() {
        let norm = c.norm();
        c /= norm;
    }
    let dec = svd(&m);
    if dec.min() <= RANK_TOL * dec.max() {
        return Err(Error::NotComplementary);
    }
    let mut padded = DMatrix::zeros(n, n);
    padded.columns_mut(0, x.dim()).copy_from(&m.columns(0, x.dim()));
    let lu = m.transpose().lu();
    let qt = lu.solve(&padded.transpose()).ok_or(Error::NotComplementary)?;
    Ok(qt.transpose())
}

/// Minimal angle `θ` and one-sided maximal angle `Θ` between `X` and `Y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Angles {
    pub theta_min: f64,
    pub theta_max: f64,
}

/// `cos θ = sup b(x,y)/‖x‖‖y‖`; `sin Θ = sup_{x∈X} dist(x, Y)/‖x‖`.
///
/// Both angles come from `atan2` of a sine and a cosine measured separately,
/// which keeps small angles accurate.
pub fn subspace_angles(x: &Subspace, y: &Subspace, ip: &InnerProduct) -> Result<Angles> {
    let ux = ip.to_coords(orthonormalize(x, ip)?.basis());
    let uy = ip.to_coords(orthonormalize(y, ip)?.basis());
    let cross = ux.transpose() * &uy;
    let residual = &ux - &uy * cross.transpose();
    let c = svd(&cross);
    let s = svd(&residual);
    let cos_min = c.max().min(1.0);
    let sin_min = s.min();
    let sin_max = s.max().min(1.0);
    let cos_max = if x.dim() > y.dim() { 0.0 } else { c.min() };
    Ok(Angles {
        theta_min: sin_min.atan2(cos_min).clamp(0.0, FRAC_PI_2),
        theta_max: sin_max.atan2(cos_max).clamp(0.0, FRAC_PI_2),
    })
}

/// Extreme gains `inf/sup ‖M·x‖_out / ‖x‖_in`, optionally over `x` in a
/// subspace of the input space.
pub fn operator_gains(
    m: &DMatrix<f64>,
    ip_in: &InnerProduct,
    ip_out: &InnerProduct,
    restricted_to: Option<&Subspace>,
) -> Result<(f64, f64)> {
    ip_in.check_dim(m.ncols())?;
    ip_out.check_dim(m.nrows())?;
    let z = match restricted_to {
        Some(s) => {
            ip_in.check_dim(s.ambient_dim())?;
            s.basis().clone()
        }
        None => DMatrix::identity(m.ncols(), m.ncols()),
    };
    let mz = m * &z;
    let top = mz.transpose() * ip_out.gram() * &mz;
    let bottom = z.transpose() * ip_in.gram() * &z;
    let eig = eig_sym_gen(&crate::linalg::symmetrize(&top), &crate::linalg::symmetrize(&bottom)).map_err(|e| match e {
        Error::NotSpd { .. } => Error::RankDeficient {
            rank: svd(&z).rank(RANK_TOL),
            cols: z.ncols(),
        },
        other => other,
    })?;
    if eig.values.is_empty() {
        return Ok((0.0, 0.0));
    }
    Ok((eig.min().max(0.0).sqrt(), eig.max().max(0.0).sqrt()))
}

/// `sup ‖M·x‖_out / ‖x‖_in`.
pub fn operator_norm(
    m: &DMatrix<f64>,
    ip_in: &InnerProduct,
    ip_out: &InnerProduct,
    restricted_to: Option<&Subspace>,
) -> Result<f64> {
    Ok(operator_gains(m, ip_in, ip_out, restricted_to)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WielandtReport {
    /// Smallest eigenvalue of the pencil `(c, b)`.
    pub m: f64,
    /// Largest eigenvalue of the pencil `(c, b)`.
    pub big_m: f64,
    /// `((M − m)/(M + m))²`.
    pub bound: f64,
    /// Largest ratio over the random `b`-orthogonal pairs.
    pub sampled_ratio: f64,
    /// Largest ratio over pairs in the plane of the extreme eigenvectors.
    pub extremal_ratio: f64,
    /// `max(sampled_ratio, extremal_ratio)`.
    pub worst_ratio: f64,
}

impl WielandtReport {
    pub fn holds(&self) -> bool {
        self.worst_ratio <= self.bound + 1e-10
    }
}

/// `b(x, C·y)² / (b(x,x)·b(C·y, C·y))` with `b(C·u, v) = c(u, v)`.
pub fn wielandt_ratio(b: &SpdFactor, bm: &DMatrix<f64>, cm: &DMatrix<f64>, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let cy_raw = cm * y;
    let cy = b.solve(&cy_raw).expect("dimensions checked by caller");
    let num = x.dot(&cy_raw);
    let den = x.dot(&(bm * x)) * cy.dot(&cy_raw);
    if den <= 0.0 {
        0.0
    } else {
        num * num / den
    }
}

/// Largest Wielandt ratio over `b`-orthogonal pairs `x = cos t·v₁ + sin t·v₂`,
/// `y = −sin t·v₁ + cos t·v₂` with `v₁, v₂` `b`-orthonormal. Dense sweep on
/// `t ∈ [0, π]` followed by golden-section refinement of the best bracket.
pub fn planar_sweep(
    b: &SpdFactor,
    bm: &DMatrix<f64>,
    cm: &DMatrix<f64>,
    v1: &DVector<f64>,
    v2: &DVector<f64>,
) -> (f64, f64) {
    let ratio = |t: f64| {
        let (s, c) = t.sin_cos();
        wielandt_ratio(b, bm, cm, &(v1 * c + v2 * s), &(v2 * c - v1 * s))
    };
    let steps = 2000;
    let dt = std::f64::consts::PI / steps as f64;
    let (mut best_t, mut best) = (0.0, ratio(0.0));
    for k in 1..=steps {
        let t = k as f64 * dt;
        let r = ratio(t);
        if r > best {
            best = r;
            best_t = t;
        }
    }
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (best_t - dt, best_t + dt);
    let mut x1 = hi - golden * (hi - lo);
    let mut x2 = lo + golden * (hi - lo);
    let (mut f1, mut f2) = (ratio(x1), ratio(x2));
    for _ in 0..80 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + golden * (hi - lo);
            f2 = ratio(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - golden * (hi - lo);
            f1 = ratio(x1);
        }
    }
    let t = 0.5 * (lo + hi);
    let r = ratio(t);
    if r >= best {
        (r, t)
    } else {
        (best, best_t)
    }
}

/// Checks the Wielandt inequality for the pair `(b, c)` on seeded random
/// `b`-orthogonal pairs and on the extreme eigenvector plane.
pub fn wielandt_gap(b_ip: &InnerProduct, c_ip: &InnerProduct, samples: usize, seed: u64) -> Result<WielandtReport> {
    let n = b_ip.dim();
    c_ip.check_dim(n)?;
    let (bm, cm) = (b_ip.gram(), c_ip.gram());
    let eig = eig_sym_gen(cm, bm)?;
    let (m, big_m) = (eig.min(), eig.max());
    let bound = ((big_m - m) / (big_m + m)).powi(2);
    let factor = b_ip.factor();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampled: f64 = 0.0;
    for _ in 0..samples {
        let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let mut y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let bx = bm * &x;
        y -= &x * (bx.dot(&y) / bx.dot(&x));
        if b_ip.norm(&y) <= 1e-12 * b_ip.norm(&x).max(1.0) {
            continue;
        }
        sampled = sampled.max(wielandt_ratio(factor, bm, cm, &x, &y));
    }
    let extremal = if n >= 2 {
        let v1 = eig.vectors.column(0).into_owned();
        let v2 = eig.vectors.column(n - 1).into_owned();
        planar_sweep(factor, bm, cm, &v1, &v2).0
    } else {
        0.0
    };
    Ok(WielandtReport {
        m,
        big_m,
        bound,
        sampled_ratio: sampled,
        extremal_ratio: extremal,
        worst_ratio: sampled.max(extremal),
    })
}
