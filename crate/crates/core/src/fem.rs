//! P1 finite elements for the Poisson problem on the unit interval and the
//! unit square.
//!
//! A single assembly routine produces every stiffness-type form used by the
//! preconditioners: the restriction of the integration region to a subset
//! of elements is what distinguishes the global form, the overlap forms and
//! the nonoverlapping-region (Neumann) forms.

use std::collections::HashMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

/// Uniform grid on `[0,1]^dim` with `cells` cells per side. In 2D every
/// square cell is split along its `(i,j)–(i+1,j+1)` diagonal.
#[derive(Debug, Clone)]
pub struct StructuredGrid {
    dim: usize,
    cells: usize,
    conn: Vec<usize>,
    on_boundary: Vec<bool>,
}

impl StructuredGrid {
    pub fn new(dim: usize, cells: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if cells < 4 {
            return Err(Error::TooCoarse { cells });
        }
        let side = cells + 1;
        let (conn, on_boundary) = if dim == 1 {
            let conn = (0..cells).flat_map(|i| [i, i + 1]).collect();
            let on_boundary = (0..side).map(|i| i == 0 || i == cells).collect();
            (conn, on_boundary)
        } else {
            let node = |i: usize, j: usize| j * side + i;
            let mut conn = Vec::with_capacity(6 * cells * cells);
            for j in 0..cells {
                for i in 0..cells {
                    conn.extend([node(i, j), node(i + 1, j), node(i + 1, j + 1)]);
                    conn.extend([node(i, j), node(i + 1, j + 1), node(i, j + 1)]);
                }
            }
            let on_boundary = (0..side * side)
                .map(|n| {
                    let (i, j) = (n % side, n / side);
                    i == 0 || j == 0 || i == cells || j == cells
                })
                .collect();
            (conn, on_boundary)
        };
        Ok(Self {
            dim,
            cells,
            conn,
            on_boundary,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_side(&self) -> usize {
        self.cells
    }

    pub fn h(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn nodes_per_element(&self) -> usize {
        self.dim + 1
    }

    pub fn num_nodes(&self) -> usize {
        (self.cells + 1).pow(self.dim as u32)
    }

    pub fn num_elements(&self) -> usize {
        self.conn.len() / self.nodes_per_element()
    }

    pub fn element_nodes(&self, e: usize) -> &[usize] {
        let k = self.nodes_per_element();
        &self.conn[e * k..(e + 1) * k]
    }

    /// Integer lattice coordinates of a node (the second entry is 0 in 1D).
    pub fn node_lattice(&self, node: usize) -> [usize; 2] {
        if self.dim == 1 {
            [node, 0]
        } else {
            let side = self.cells + 1;
            [node % side, node / side]
        }
    }

    pub fn node_at(&self, lattice: [usize; 2]) -> usize {
        if self.dim == 1 {
            lattice[0]
        } else {
            lattice[1] * (self.cells + 1) + lattice[0]
        }
    }

    pub fn coordinates(&self, node: usize) -> [f64; 2] {
        let [i, j] = self.node_lattice(node);
        [i as f64 * self.h(), j as f64 * self.h()]
    }

    /// Lattice coordinates of the cell containing element `e`.
    pub fn element_cell(&self, e: usize) -> [usize; 2] {
        if self.dim == 1 {
            [e, 0]
        } else {
            let c = e / 2;
            [c % self.cells, c / self.cells]
        }
    }

    /// Elements of the cells `lo[d] <= cell[d] < hi[d]`, ascending.
    pub fn elements_in_box(&self, lo: [usize; 2], hi: [usize; 2]) -> Vec<usize> {
        (0..self.num_elements())
            .filter(|&e| {
                let c = self.element_cell(e);
                (0..self.dim).all(|d| lo[d] <= c[d] && c[d] < hi[d])
            })
            .collect()
    }

    pub fn all_elements(&self) -> Vec<usize> {
        (0..self.num_elements()).collect()
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.on_boundary[node]
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&n| self.on_boundary[n]).collect()
    }

    /// Degrees of freedom of the global space: nodes off `∂[0,1]^dim`.
    pub fn free_dofs(&self) -> DofMap {
        let nodes = (0..self.num_nodes()).filter(|&n| !self.on_boundary[n]).collect();
        DofMap::new(nodes, self.num_nodes()).expect("interior nodes are distinct and in range")
    }

    /// Nodal interpolant of `f` on the given dofs.
    pub fn interpolate(&self, dofs: &DofMap, f: impl Fn(f64, f64) -> f64) -> DVector<f64> {
        DVector::from_iterator(
            dofs.len(),
            dofs.nodes().iter().map(|&n| {
                let [x, y] = self.coordinates(n);
                f(x, y)
            }),
        )
    }

    fn element_measure(&self) -> f64 {
        let h = self.h();
        if self.dim == 1 {
            h
        } else {
            0.5 * h * h
        }
    }

    /// Local stiffness `∫ ∇φ_j·∇φ_i` of element `e`.
    pub fn element_stiffness(&self, e: usize) -> [[f64; 3]; 3] {
        let mut k = [[0.0; 3]; 3];
        if self.dim == 1 {
            let s = 1.0 / self.h();
            k[0][0] = s;
            k[1][1] = s;
            k[0][1] = -s;
            k[1][0] = -s;
            return k;
        }
        let p: Vec<[f64; 2]> = self.element_nodes(e).iter().map(|&n| self.coordinates(n)).collect();
        let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
        let mut bx = [0.0; 3];
        let mut by = [0.0; 3];
        for a in 0..3 {
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            bx[a] = p[b][1] - p[c][1];
            by[a] = p[c][0] - p[b][0];
        }
        for a in 0..3 {
            for b in 0..3 {
                k[a][b] = (bx[a] * bx[b] + by[a] * by[b]) / (2.0 * area2.abs());
            }
        }
        k
    }
}

/// Injective ordered map from dof indices to grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    nodes: Vec<usize>,
    lookup: Vec<Option<usize>>,
}

impl DofMap {
    pub fn new(nodes: Vec<usize>, num_nodes: usize) -> Result<Self> {
        let mut lookup = vec![None; num_nodes];
        for (k, &n) in nodes.iter().enumerate() {
            if n >= num_nodes {
                return Err(Error::OutOfRange { index: n, limit: num_nodes });
            }
            if lookup[n].replace(k).is_some() {
                return Err(Error::Config(format!("node {n} listed twice in a dof map")));
            }
        }
        Ok(Self { nodes, lookup })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn node(&self, dof: usize) -> usize {
        self.nodes[dof]
    }

    pub fn dof(&self, node: usize) -> Option<usize> {
        self.lookup.get(node).copied().flatten()
    }

    pub fn num_grid_nodes(&self) -> usize {
        self.lookup.len()
    }
}

/// Which bilinear form an assembled matrix realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FormKind {
    /// `a`: stiffness over the whole domain.
    Global,
    /// `b_ℓ`: stiffness over an overlapped subdomain.
    Overlap,
    /// `b̃_ℓ`: stiffness over a nonoverlapping block only.
    Region,
    /// `b^∂_ℓ`: lumped boundary mass.
    BoundaryMass,
}

#[derive(Debug, Clone)]
pub struct AssembledForm {
    pub matrix: CsrMatrix,
    pub rows: DofMap,
    pub cols: DofMap,
    pub kind: FormKind,
}

/// Assembles `Σ_{e ∈ elements} ∫_e ∇φ_j·∇φ_i` for row dof `i`, column dof `j`.
/// Nodes absent from a dof map are dropped (homogeneous Dirichlet values).
pub fn assemble_stiffness(
    grid: &StructuredGrid,
    elements: &[usize],
    rows: &DofMap,
    cols: &DofMap,
    kind: FormKind,
) -> Result<AssembledForm> {
    if elements.is_empty() {
        return Err(Error::EmptyElementSet);
    }
    for map in [rows, cols] {
        if map.num_grid_nodes() != grid.num_nodes() {
            return Err(Error::DimensionMismatch {
                expected: grid.num_nodes(),
                found: map.num_grid_nodes(),
            });
        }
    }
    let mut trips = Vec::new();
    for &e in elements {
        if e >= grid.num_elements() {
            return Err(Error::OutOfRange {
                index: e,
                limit: grid.num_elements(),
            });
        }
        let k = grid.element_stiffness(e);
        let nodes = grid.element_nodes(e);
        for (a, &na) in nodes.iter().enumerate() {
            let Some(r) = rows.dof(na) else { continue };
            for (b, &nb) in nodes.iter().enumerate() {
                if let Some(c) = cols.dof(nb) {
                    trips.push((r, c, k[a][b]));
                }
            }
        }
    }
    Ok(AssembledForm {
        matrix: CsrMatrix::from_triplets(rows.len(), cols.len(), trips)?,
        rows: rows.clone(),
        cols: cols.clone(),
        kind,
    })
}

/// Boundary facets of an element set: facets owned by exactly one element.
/// Returned as node lists (one node in 1D, two in 2D).
fn boundary_facets(grid: &StructuredGrid, elements: &[usize]) -> Vec<Vec<usize>> {
    let mut count: HashMap<Vec<usize>, usize> = HashMap::new();
    for &e in elements {
        let nodes = grid.element_nodes(e);
        let facets: Vec<Vec<usize>> = if grid.dim() == 1 {
            nodes.iter().map(|&n| vec![n]).collect()
        } else {
            (0..3)
                .map(|a| {
                    let mut f = vec![nodes[a], nodes[(a + 1) % 3]];
                    f.sort_unstable();
                    f
                })
                .collect()
        };
        for f in facets {
            *count.entry(f).or_default() += 1;
        }
    }
    let mut out: Vec<Vec<usize>> = count.into_iter().filter(|(_, c)| *c == 1).map(|(f, _)| f).collect();
    out.sort();
    out
}

/// Lumped boundary mass `∫_{∂Ω} v·w` of the region covered by `elements`,
/// restricted to `boundary_nodes`: in 1D each boundary point weighs 1, in 2D
/// a node weighs half the length of the boundary edges touching it. Nodes
/// not present in `dofs` are dropped.
pub fn boundary_mass(
    grid: &StructuredGrid,
    elements: &[usize],
    boundary_nodes: &[usize],
    dofs: &DofMap,
) -> Result<AssembledForm> {
    if elements.is_empty() {
        return Err(Error::EmptyElementSet);
    }
    let mut weight: HashMap<usize, f64> = HashMap::new();
    for f in boundary_facets(grid, elements) {
        if f.len() == 1 {
            *weight.entry(f[0]).or_default() += 1.0;
        } else {
            let [x0, y0] = grid.coordinates(f[0]);
            let [x1, y1] = grid.coordinates(f[1]);
            let len = (x1 - x0).hypot(y1 - y0);
            for n in f {
                *weight.entry(n).or_default() += 0.5 * len;
            }
        }
    }
    let mut trips = Vec::new();
    for &n in boundary_nodes {
        let w = weight.get(&n).copied().ok_or(Error::NotOnBoundary(n))?;
        if let Some(d) = dofs.dof(n) {
            trips.push((d, d, w));
        }
    }
    Ok(AssembledForm {
        matrix: CsrMatrix::from_triplets(dofs.len(), dofs.len(), trips)?,
        rows: dofs.clone(),
        cols: dofs.clone(),
        kind: FormKind::BoundaryMass,
    })
}

/// Nodes on the topological boundary of the region covered by `elements`.
pub fn region_boundary_nodes(grid: &StructuredGrid, elements: &[usize]) -> Vec<usize> {
    let mut nodes: Vec<usize> = boundary_facets(grid, elements).into_iter().flatten().collect();
    nodes.sort_unstable();
    nodes.dedup();
    nodes
}

/// Load vector `∫ f·φ_i` for `f ≡ 1`.
pub fn unit_load(grid: &StructuredGrid, dofs: &DofMap) -> DVector<f64> {
    let share = grid.element_measure() / grid.nodes_per_element() as f64;
    let mut out = DVector::zeros(dofs.len());
    for e in 0..grid.num_elements() {
        for &n in grid.element_nodes(e) {
            if let Some(d) = dofs.dof(n) {
                out[d] += share;
            }
        }
    }
    out
}
