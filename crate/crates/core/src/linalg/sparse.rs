//! Compressed-row sparse matrices and a banded Cholesky solver.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Compressed sparse row storage. Column indices within a row are sorted
/// and unique.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            if r >= rows {
                return Err(Error::OutOfRange { index: r, limit: rows });
            }
            if c >= cols {
                return Err(Error::OutOfRange { index: c, limit: cols });
            }
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; rows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            row_ptr: vec![0; rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Nonzeros of row `r` as `(col, value)` pairs.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.cols, "sparse matvec dimension");
        DVector::from_iterator(
            self.rows,
            (0..self.rows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum::<f64>()),
        )
    }

    /// `Mᵀ·x`.
    pub fn tr_mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.rows, "sparse transpose matvec dimension");
        let mut out = DVector::zeros(self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out[c] += v * x[r];
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.cols, self.rows, self.triplets().map(|(r, c, v)| (c, r, v)))
            .expect("transposed indices are in range")
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.triplets() {
            out[(r, c)] += v;
        }
        out
    }

    /// Sparse sum of matrices with equal shapes.
    pub fn sum<'a>(parts: impl IntoIterator<Item = &'a CsrMatrix>) -> Result<Self> {
        let mut shape = None;
        let mut trips = Vec::new();
        for p in parts {
            match shape {
                None => shape = Some((p.rows, p.cols)),
                Some((r, c)) if (r, c) != (p.rows, p.cols) => {
                    return Err(Error::DimensionMismatch {
                        expected: r * c,
                        found: p.rows * p.cols,
                    })
                }
                _ => {}
            }
            trips.extend(p.triplets());
        }
        let (r, c) = shape.unwrap_or((0, 0));
        Self::from_triplets(r, c, trips)
    }

    /// Half bandwidth `max |i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        self.triplets()
            .map(|(r, c, _)| r.abs_diff(c))
            .max()
            .unwrap_or(0)
    }
}

/// Cholesky factorization of a symmetric positive definite banded matrix,
/// stored by lower diagonals. Cost is `O(n·w²)` for half bandwidth `w`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    w: usize,
    // l[i][k] = L(i, i - w + k) for k in 0..=w
    l: Vec<Vec<f64>>,
}

impl BandedCholesky {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                found: a.ncols(),
            });
        }
        let n = a.nrows();
        let w = a.bandwidth();
        let mut l = vec![vec![0.0; w + 1]; n];
        for (r, c, v) in a.triplets() {
            if c <= r {
                l[r][w + c - r] = v;
            }
        }
        for j in 0..n {
            let lo = j.saturating_sub(w);
            let mut d = l[j][w];
            for k in lo..j {
                let x = l[j][w + k - j];
                d -= x * x;
            }
            if !(d > 0.0) {
                return Err(Error::NotSpd {
                    context: format!("banded Cholesky pivot {d:e} at row {j}"),
                });
            }
            let d = d.sqrt();
            l[j][w] = d;
            for i in (j + 1)..n.min(j + w + 1) {
                let lo_i = i.saturating_sub(w).max(lo);
                let mut s = l[i][w + j - i];
                for k in lo_i..j {
                    s -= l[i][w + k - i] * l[j][w + k - j];
                }
                l[i][w + j - i] = s / d;
            }
        }
        Ok(Self { n, w, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        if rhs.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: rhs.len(),
            });
        }
        let (n, w) = (self.n, self.w);
        let mut y = rhs.clone();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(w)..i {
                s -= self.l[i][w + k - i] * y[k];
            }
            y[i] = s / self.l[i][w];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n.min(i + w + 1) {
                s -= self.l[k][w + i - k] * y[k];
            }
            y[i] = s / self.l[i][w];
        }
        Ok(y)
    }

    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(rhs.nrows(), rhs.ncols());
        for j in 0..rhs.ncols() {
            out.set_column(j, &self.solve(&rhs.column(j).into_owned())?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 3, vec![(0, 1, 1.0), (1, 2, 2.0), (0, 1, 0.5)]).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 1.5);
        assert_eq!(m.get(1, 0), 0.0);
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(m.mul_vec(&x).as_slice(), &[3.0, 6.0]);
        assert_eq!(m.tr_mul_vec(&DVector::from_vec(vec![1.0, 1.0])).as_slice(), &[0.0, 1.5, 2.0]);
        assert_eq!(m.transpose().to_dense(), m.to_dense().transpose());
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(matches!(
            CsrMatrix::from_triplets(2, 2, vec![(2, 0, 1.0)]),
            Err(Error::OutOfRange { index: 2, limit: 2 })
        ));
    }

    #[test]
    fn banded_cholesky_matches_dense() {
        let n = 12;
        let mut trips = Vec::new();
        for i in 0..n {
            trips.push((i, i, 5.0 + i as f64 * 0.1));
            if i + 1 < n {
                trips.push((i, i + 1, -1.0));
                trips.push((i + 1, i, -1.0));
            }
            if i + 3 < n {
                trips.push((i, i + 3, -0.7));
                trips.push((i + 3, i, -0.7));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, trips).unwrap();
        let chol = BandedCholesky::new(&a).unwrap();
        let rhs = DVector::from_fn(n, |i, _| (i as f64).sin());
        let x = chol.solve(&rhs).unwrap();
        assert!((a.mul_vec(&x) - &rhs).amax() < 1e-13);
    }

    #[test]
    fn banded_cholesky_detects_indefinite() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]).unwrap();
        assert!(matches!(BandedCholesky::new(&a), Err(Error::NotSpd { .. })));
    }
}
