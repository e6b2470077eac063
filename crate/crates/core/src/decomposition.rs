//! Box partitions of the structured grid into nonoverlapping blocks `D_ℓ`,
//! their overlapping enlargements `O_ℓ`, and the nodal cut functions and
//! partition of unity built on them.
//!
//! Local spaces on `O_ℓ` carry the nodes of `O̅_ℓ` that are not on `∂D`:
//! values on `∂O_ℓ ∩ ∂D` are fixed to zero, matching the global space.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fem::{DofMap, StructuredGrid};
use crate::linalg::CsrMatrix;

/// Half-open box of cells `lo[d] <= c < hi[d]`. Only the first coordinate
/// is meaningful in 1D.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellBox {
    pub lo: [usize; 2],
    pub hi: [usize; 2],
}

impl CellBox {
    fn intersects(&self, other: &CellBox, dim: usize) -> bool {
        (0..dim).all(|d| self.lo[d].max(other.lo[d]) < self.hi[d].min(other.hi[d]))
    }

    fn contains_node(&self, p: [usize; 2], dim: usize) -> bool {
        (0..dim).all(|d| self.lo[d] <= p[d] && p[d] <= self.hi[d])
    }

    fn node_on_boundary(&self, p: [usize; 2], dim: usize) -> bool {
        (0..dim).any(|d| p[d] == self.lo[d] || p[d] == self.hi[d])
    }

    /// Lattice distance (max norm) from a node to the closed node box.
    fn node_distance(&self, p: [usize; 2], dim: usize) -> usize {
        (0..dim)
            .map(|d| {
                if p[d] < self.lo[d] {
                    self.lo[d] - p[d]
                } else {
                    p[d].saturating_sub(self.hi[d])
                }
            })
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct Subdomain {
    pub core: CellBox,
    pub overlap: CellBox,
    /// Elements of `D_ℓ`.
    pub core_elements: Vec<usize>,
    /// Elements of `O_ℓ`.
    pub overlap_elements: Vec<usize>,
    /// Elements of `O_ℓ ∖ D_ℓ`.
    pub ring_elements: Vec<usize>,
    /// All nodes of `O̅_ℓ`.
    pub closure_nodes: Vec<usize>,
    /// Nodes strictly inside `O_ℓ` (hence off `∂D`).
    pub interior_nodes: Vec<usize>,
    /// Nodes on `∂O_ℓ` that are interior to `D`.
    pub boundary_nodes: Vec<usize>,
}

impl Subdomain {
    /// Nodes carrying the local closure space: interior and boundary nodes
    /// merged in ascending order.
    pub fn local_nodes(&self) -> Vec<usize> {
        let mut nodes: Vec<usize> = self.interior_nodes.iter().chain(&self.boundary_nodes).copied().collect();
        nodes.sort_unstable();
        nodes
    }

    /// Positions of the interior nodes inside [`Subdomain::local_nodes`].
    pub fn interior_positions(&self) -> Vec<usize> {
        let local = self.local_nodes();
        self.interior_nodes
            .iter()
            .map(|n| local.binary_search(n).expect("interior node is local"))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct OverlapDecomposition {
    dim: usize,
    cells: usize,
    blocks_per_side: usize,
    layers: usize,
    h: f64,
    subdomains: Vec<Subdomain>,
    neighbors: Vec<Vec<usize>>,
    nu: usize,
}

impl OverlapDecomposition {
    /// Equal blocks grown by `layers` element layers and clipped to the
    /// unit interval or square.
    pub fn new(grid: &StructuredGrid, blocks_per_side: usize, layers: usize) -> Result<Self> {
        let cells = grid.cells_per_side();
        let dim = grid.dim();
        if blocks_per_side == 0 || cells % blocks_per_side != 0 {
            return Err(Error::IndivisibleBlocks {
                blocks: blocks_per_side,
                cells,
            });
        }
        if layers == 0 {
            return Err(Error::ZeroOverlap);
        }
        let width = cells / blocks_per_side;
        let blocks_y = if dim == 2 { blocks_per_side } else { 1 };
        let mut subdomains = Vec::new();
        for by in 0..blocks_y {
            for bx in 0..blocks_per_side {
                let b = [bx, by];
                let mut core = CellBox { lo: [0, 0], hi: [1, 1] };
                let mut overlap = core;
                for d in 0..dim {
                    core.lo[d] = b[d] * width;
                    core.hi[d] = (b[d] + 1) * width;
                    overlap.lo[d] = core.lo[d].saturating_sub(layers);
                    overlap.hi[d] = (core.hi[d] + layers).min(cells);
                }
                let ell = subdomains.len();
                if (0..dim).all(|d| overlap.lo[d] == 0 && overlap.hi[d] == cells) {
                    return Err(Error::OverlapTooLarge(ell));
                }
                subdomains.push(Self::build_subdomain(grid, core, overlap));
            }
        }
        let neighbors: Vec<Vec<usize>> = subdomains
            .iter()
            .map(|s| {
                subdomains
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| s.overlap.intersects(&t.overlap, dim))
                    .map(|(k, _)| k)
                    .collect()
            })
            .collect();
        let nu = neighbors.iter().map(Vec::len).max().unwrap_or(0);
        Ok(Self {
            dim,
            cells,
            blocks_per_side,
            layers,
            h: grid.h(),
            subdomains,
            neighbors,
            nu,
        })
    }

    fn build_subdomain(grid: &StructuredGrid, core: CellBox, overlap: CellBox) -> Subdomain {
        let dim = grid.dim();
        let core_elements = grid.elements_in_box(core.lo, core.hi);
        let overlap_elements = grid.elements_in_box(overlap.lo, overlap.hi);
        let ring_elements = overlap_elements
            .iter()
            .copied()
            .filter(|e| core_elements.binary_search(e).is_err())
            .collect();
        let closure_nodes: Vec<usize> = (0..grid.num_nodes())
            .filter(|&n| overlap.contains_node(grid.node_lattice(n), dim))
            .collect();
        let (mut interior_nodes, mut boundary_nodes) = (Vec::new(), Vec::new());
        for &n in &closure_nodes {
            if !overlap.node_on_boundary(grid.node_lattice(n), dim) {
                interior_nodes.push(n);
            } else if !grid.is_boundary(n) {
                boundary_nodes.push(n);
            }
        }
        Subdomain {
            core,
            overlap,
            core_elements,
            overlap_elements,
            ring_elements,
            closure_nodes,
            interior_nodes,
            boundary_nodes,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_side(&self) -> usize {
        self.cells
    }

    pub fn blocks_per_side(&self) -> usize {
        self.blocks_per_side
    }

    pub fn overlap_layers(&self) -> usize {
        self.layers
    }

    /// Overlap width `δ = layers·h`.
    pub fn delta(&self) -> f64 {
        self.layers as f64 * self.h
    }

    pub fn num_subdomains(&self) -> usize {
        self.subdomains.len()
    }

    pub fn subdomains(&self) -> &[Subdomain] {
        &self.subdomains
    }

    pub fn subdomain(&self, ell: usize) -> &Subdomain {
        &self.subdomains[ell]
    }

    /// `Neigh(ℓ)`, including `ℓ` itself.
    pub fn neighbors(&self, ell: usize) -> &[usize] {
        &self.neighbors[ell]
    }

    /// `ν = max_ℓ #Neigh(ℓ)`.
    pub fn nu(&self) -> usize {
        self.nu
    }

    /// Number of overlapped subdomains whose closure contains `node`.
    pub fn cover_count(&self, grid: &StructuredGrid, node: usize) -> usize {
        let p = grid.node_lattice(node);
        self.subdomains
            .iter()
            .filter(|s| s.overlap.contains_node(p, self.dim) && !s.overlap.node_on_boundary(p, self.dim))
            .count()
    }
}

/// Nodal cut functions `η_ℓ` and partition of unity `χ_ℓ = η_ℓ / Σ_k η_k`,
/// stored over all grid nodes.
#[derive(Debug, Clone)]
pub struct CutFunctions {
    pub eta: Vec<DVector<f64>>,
    pub chi: Vec<DVector<f64>>,
}

impl CutFunctions {
    /// `η_ℓ` is 1 on the nodes of `D̅_ℓ` and decays linearly with the lattice
    /// distance to `D̅_ℓ`, reaching 0 after `layers` layers (on `∂O_ℓ`).
    pub fn new(grid: &StructuredGrid, od: &OverlapDecomposition) -> Self {
        let dim = grid.dim();
        let layers = od.overlap_layers() as f64;
        let eta: Vec<DVector<f64>> = od
            .subdomains()
            .iter()
            .map(|s| {
                DVector::from_iterator(
                    grid.num_nodes(),
                    (0..grid.num_nodes()).map(|n| {
                        let d = s.core.node_distance(grid.node_lattice(n), dim) as f64;
                        (1.0 - d / layers).max(0.0)
                    }),
                )
            })
            .collect();
        let total = eta.iter().fold(DVector::zeros(grid.num_nodes()), |acc, e| acc + e);
        let chi = eta.iter().map(|e| e.component_div(&total)).collect();
        Self { eta, chi }
    }

    /// Largest P1 gradient norm of any `η_ℓ` times `δ`; the cut constant.
    pub fn cut_constant(&self, grid: &StructuredGrid, od: &OverlapDecomposition) -> f64 {
        max_gradient(grid, &self.eta) * od.delta()
    }

    /// Largest P1 gradient norm of any `χ_ℓ` times `δ`.
    pub fn pu_constant(&self, grid: &StructuredGrid, od: &OverlapDecomposition) -> f64 {
        max_gradient(grid, &self.chi) * od.delta()
    }

    /// Values of `η_ℓ` on the given dofs.
    pub fn eta_on(&self, ell: usize, dofs: &DofMap) -> DVector<f64> {
        DVector::from_iterator(dofs.len(), dofs.nodes().iter().map(|&n| self.eta[ell][n]))
    }

    pub fn chi_on(&self, ell: usize, dofs: &DofMap) -> DVector<f64> {
        DVector::from_iterator(dofs.len(), dofs.nodes().iter().map(|&n| self.chi[ell][n]))
    }
}

fn max_gradient(grid: &StructuredGrid, fields: &[DVector<f64>]) -> f64 {
    let mut worst = 0.0_f64;
    for f in fields {
        for e in 0..grid.num_elements() {
            let nodes = grid.element_nodes(e);
            let grad = if grid.dim() == 1 {
                (f[nodes[1]] - f[nodes[0]]).abs() / grid.h()
            } else {
                // gradient of the linear interpolant through three points
                let p: Vec<[f64; 2]> = nodes.iter().map(|&n| grid.coordinates(n)).collect();
                let (dx1, dy1) = (p[1][0] - p[0][0], p[1][1] - p[0][1]);
                let (dx2, dy2) = (p[2][0] - p[0][0], p[2][1] - p[0][1]);
                let (df1, df2) = (f[nodes[1]] - f[nodes[0]], f[nodes[2]] - f[nodes[0]]);
                let det = dx1 * dy2 - dx2 * dy1;
                let gx = (df1 * dy2 - df2 * dy1) / det;
                let gy = (dx1 * df2 - dx2 * df1) / det;
                gx.hypot(gy)
            };
            worst = worst.max(grad);
        }
    }
    worst
}

/// Selection and injection operators between the global free dofs and the
/// local spaces.
#[derive(Debug, Clone)]
pub struct RestrictionOps {
    /// `R_ℓ`: global free dofs → local closure values.
    pub restrict: Vec<CsrMatrix>,
    /// `E_ℓ`: local interior values → global free dofs (zero extension).
    pub extend: Vec<CsrMatrix>,
    /// Stacked `R`: global free dofs → product space.
    pub stacked: CsrMatrix,
}

impl RestrictionOps {
    pub fn new(od: &OverlapDecomposition, free: &DofMap) -> Result<Self> {
        let n = free.len();
        let mut restrict = Vec::new();
        let mut extend = Vec::new();
        let mut stacked = Vec::new();
        let mut offset = 0;
        for s in od.subdomains() {
            let local = s.local_nodes();
            let to_free = |node: usize| {
                free.dof(node).ok_or(Error::OutOfRange {
                    index: node,
                    limit: free.num_grid_nodes(),
                })
            };
            let mut rt = Vec::with_capacity(local.len());
            for (k, &node) in local.iter().enumerate() {
                let g = to_free(node)?;
                rt.push((k, g, 1.0));
                stacked.push((offset + k, g, 1.0));
            }
            let et = s
                .interior_nodes
                .iter()
                .enumerate()
                .map(|(k, &node)| Ok((to_free(node)?, k, 1.0)))
                .collect::<Result<Vec<_>>>()?;
            restrict.push(CsrMatrix::from_triplets(local.len(), n, rt)?);
            extend.push(CsrMatrix::from_triplets(n, s.interior_nodes.len(), et)?);
            offset += local.len();
        }
        Ok(Self {
            restrict,
            extend,
            stacked: CsrMatrix::from_triplets(offset, n, stacked)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn brute_force_nu(od: &OverlapDecomposition) -> usize {
        // exhaustive elementwise intersection of the overlap element lists
        (0..od.num_subdomains())
            .map(|l| {
                (0..od.num_subdomains())
                    .filter(|&k| {
                        let a = &od.subdomain(l).overlap_elements;
                        od.subdomain(k).overlap_elements.iter().any(|e| a.contains(e))
                    })
                    .count()
            })
            .max()
            .unwrap()
    }

    #[test]
    fn one_dimensional_four_blocks() {
        let g = StructuredGrid::new(1, 16).unwrap();
        let od = OverlapDecomposition::new(&g, 4, 1).unwrap();
        assert_eq!(od.subdomain(1).overlap_elements.len(), 6);
        assert_eq!(od.subdomain(2).overlap_elements.len(), 6);
        assert_eq!(od.nu(), 3);
        assert_eq!(brute_force_nu(&od), 3);
        assert_eq!(od.neighbors(0), &[0, 1]);
        assert!((od.delta() - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn single_block_is_rejected() {
        let g = StructuredGrid::new(1, 8).unwrap();
        assert!(matches!(OverlapDecomposition::new(&g, 1, 1), Err(Error::OverlapTooLarge(0))));
        assert!(matches!(
            OverlapDecomposition::new(&g, 3, 1),
            Err(Error::IndivisibleBlocks { blocks: 3, cells: 8 })
        ));
        assert!(matches!(OverlapDecomposition::new(&g, 2, 0), Err(Error::ZeroOverlap)));
    }

    #[test]
    fn two_dimensional_corner_overlap() {
        let g = StructuredGrid::new(2, 8).unwrap();
        let od = OverlapDecomposition::new(&g, 2, 1).unwrap();
        assert_eq!(od.num_subdomains(), 4);
        assert_eq!(od.nu(), 4);
        assert_eq!(brute_force_nu(&od), 4);
    }

    #[test]
    fn decomposition_invariants() {
        for (dim, cells, blocks, layers) in [(1, 32, 4, 2), (2, 16, 2, 1), (2, 12, 3, 2)] {
            let g = StructuredGrid::new(dim, cells).unwrap();
            let od = OverlapDecomposition::new(&g, blocks, layers).unwrap();
            let mut owner = vec![0usize; g.num_elements()];
            for (l, s) in od.subdomains().iter().enumerate() {
                for &e in &s.core_elements {
                    owner[e] += 1;
                    assert!(s.overlap_elements.binary_search(&e).is_ok());
                }
                assert!(od.neighbors(l).contains(&l));
                assert_eq!(s.ring_elements.len() + s.core_elements.len(), s.overlap_elements.len());
            }
            assert!(owner.iter().all(|&c| c == 1), "blocks partition the elements");
            let free = g.free_dofs();
            for &n in free.nodes() {
                assert!(od.cover_count(&g, n) <= od.nu());
            }
        }
    }

    #[test]
    fn cut_function_profile_two_layers() {
        let g = StructuredGrid::new(1, 16).unwrap();
        let od = OverlapDecomposition::new(&g, 4, 2).unwrap();
        let cuts = CutFunctions::new(&g, &od);
        // D_0 = [0, 4h]; η_0 on nodes 4, 5, 6
        let eta = &cuts.eta[0];
        assert_eq!((eta[4], eta[5], eta[6]), (1.0, 0.5, 0.0));
        assert!(eta.iter().skip(6).all(|&v| v == 0.0));
    }

    #[test]
    fn cut_functions_one_layer() {
        let g = StructuredGrid::new(1, 16).unwrap();
        let od = OverlapDecomposition::new(&g, 4, 1).unwrap();
        let cuts = CutFunctions::new(&g, &od);
        let s = od.subdomain(1);
        for n in 0..g.num_nodes() {
            let inside_core = (4..=8).contains(&n);
            assert_eq!(cuts.eta[1][n], if inside_core { 1.0 } else { 0.0 });
        }
        assert!(s.boundary_nodes.iter().all(|&n| cuts.eta[1][n] == 0.0));
        assert!((cuts.cut_constant(&g, &od) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn partition_of_unity_properties() {
        for (dim, cells, blocks, layers) in [(1, 16, 4, 1), (1, 32, 4, 2), (2, 16, 2, 1), (2, 12, 3, 2)] {
            let g = StructuredGrid::new(dim, cells).unwrap();
            let od = OverlapDecomposition::new(&g, blocks, layers).unwrap();
            let cuts = CutFunctions::new(&g, &od);
            let sum = cuts.chi.iter().fold(DVector::zeros(g.num_nodes()), |a, c| a + c);
            assert!(sum.iter().all(|&v| (v - 1.0).abs() < 1e-14));
            for (l, s) in od.subdomains().iter().enumerate() {
                for n in 0..g.num_nodes() {
                    let p = g.node_lattice(n);
                    let in_closure = s.closure_nodes.binary_search(&n).is_ok();
                    let on_rim = s.overlap.node_on_boundary(p, dim) && !g.is_boundary(n);
                    if !in_closure || on_rim {
                        assert_eq!(cuts.chi[l][n], 0.0, "χ_ℓ supported in O_ℓ");
                    }
                    let in_core = s.core.contains_node(p, dim);
                    let others = od
                        .subdomains()
                        .iter()
                        .enumerate()
                        .any(|(k, t)| k != l && t.overlap.contains_node(p, dim) && !t.overlap.node_on_boundary(p, dim));
                    if in_core && !others && !g.is_boundary(n) {
                        assert_eq!(cuts.chi[l][n], 1.0);
                    }
                    assert!((0.0..=1.0).contains(&cuts.eta[l][n]));
                }
            }
        }
    }

    #[test]
    fn restriction_and_extension_identities() {
        let g = StructuredGrid::new(1, 16).unwrap();
        let od = OverlapDecomposition::new(&g, 4, 1).unwrap();
        let free = g.free_dofs();
        let ops = RestrictionOps::new(&od, &free).unwrap();
        let cuts = CutFunctions::new(&g, &od);
        let ones = DVector::from_element(free.len(), 1.0);
        assert!(ops.stacked.mul_vec(&ones).iter().all(|&v| v == 1.0));
        let mut pou = DMatrix::zeros(free.len(), free.len());
        for (l, s) in od.subdomains().iter().enumerate() {
            let e = ops.extend[l].to_dense();
            let ni = s.interior_nodes.len();
            assert_eq!(e.transpose() * &e, DMatrix::identity(ni, ni));
            // R_ℓ·E_ℓ injects interior values into the closure pattern
            let re = ops.restrict[l].to_dense() * &e;
            let pos = s.interior_positions();
            for (k, &p) in pos.iter().enumerate() {
                assert_eq!(re[(p, k)], 1.0);
            }
            assert_eq!(re.sum(), ni as f64);
            let interior = DofMap::new(s.interior_nodes.clone(), g.num_nodes()).unwrap();
            let chi = DMatrix::from_diagonal(&cuts.chi_on(l, &interior));
            pou += &e * chi * e.transpose();
        }
        assert!((pou - DMatrix::identity(free.len(), free.len())).amax() < 1e-14);
    }
}
