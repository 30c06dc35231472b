//! Symmetric sparse matrices (upper-triangle CSR) and a banded LDLᵀ factorization.
//!
//! The factorization does not pivot. For the Helmholtz system a vanishing
//! pivot signals a (discrete) resonance, and the signs of the pivots give the
//! inertia of the matrix by Sylvester's law.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Relative pivot threshold below which the factorization reports a resonance.
pub const PIVOT_TOL: f64 = 1e-12;

/// Symmetric matrix storing only entries with `col >= row`. Symmetry holds by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSym {
    /// Compresses `(row, col, value)` triplets; each triplet is folded into the upper triangle
    /// and duplicates are summed in input order.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); dim];
        for &(i, j, v) in triplets {
            let (r, c) = if i <= j { (i, j) } else { (j, i) };
            rows[r].push((c, v));
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut last: Option<usize> = None;
            for (c, v) in row {
                if last == Some(c) {
                    *vals.last_mut().expect("entry exists") += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            row_ptr: vec![0; dim + 1],
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz_upper(&self) -> usize {
        self.vals.len()
    }

    /// Upper-triangle entries `(row, col, value)` with `col >= row`.
    pub fn upper_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |p| (i, self.cols[p], self.vals[p]))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (r, c) = if i <= j { (i, j) } else { (j, i) };
        let span = &self.cols[self.row_ptr[r]..self.row_ptr[r + 1]];
        match span.binary_search(&c) {
            Ok(p) => self.vals[self.row_ptr[r] + p],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    /// Half bandwidth `max |i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        self.upper_entries().map(|(i, j, _)| j - i).max().unwrap_or(0)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        let mut y = vec![0.0; self.dim];
        for i in 0..self.dim {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let (j, v) = (self.cols[p], self.vals[p]);
                y[i] += v * x[j];
                if j != i {
                    y[j] += v * x[i];
                }
            }
        }
        y
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let (j, v) = (self.cols[p], self.vals[p]);
                s += v * x[i] * y[j];
                if j != i {
                    s += v * x[j] * y[i];
                }
            }
        }
        s
    }

    /// `A X` for a dense block of column vectors.
    pub fn mul_dense(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(x.nrows(), self.dim);
        let mut y = DMatrix::zeros(self.dim, x.ncols());
        for c in 0..x.ncols() {
            let col = self.matvec(x.column(c).as_slice());
            y.column_mut(c).copy_from_slice(&col);
        }
        y
    }

    /// `a * self + b * other`, merging sparsity patterns.
    pub fn lin_comb(&self, a: f64, other: &SparseSym, b: f64) -> SparseSym {
        assert_eq!(self.dim, other.dim);
        let mut row_ptr = Vec::with_capacity(self.dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..self.dim {
            let (mut p, pe) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let (mut q, qe) = (other.row_ptr[i], other.row_ptr[i + 1]);
            while p < pe || q < qe {
                let cp = if p < pe { self.cols[p] } else { usize::MAX };
                let cq = if q < qe { other.cols[q] } else { usize::MAX };
                if cp == cq {
                    cols.push(cp);
                    vals.push(a * self.vals[p] + b * other.vals[q]);
                    p += 1;
                    q += 1;
                } else if cp < cq {
                    cols.push(cp);
                    vals.push(a * self.vals[p]);
                    p += 1;
                } else {
                    cols.push(cq);
                    vals.push(b * other.vals[q]);
                    q += 1;
                }
            }
            row_ptr.push(cols.len());
        }
        SparseSym {
            dim: self.dim,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn scaled(&self, a: f64) -> SparseSym {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= a);
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, j, v) in self.upper_entries() {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    }

    /// Frobenius norm of the full (symmetric) matrix.
    pub fn norm(&self) -> f64 {
        self.upper_entries()
            .map(|(i, j, v)| if i == j { v * v } else { 2.0 * v * v })
            .sum::<f64>()
            .sqrt()
    }

    pub fn factor(&self) -> Result<BandedLdlt> {
        BandedLdlt::factor(self)
    }
}

/// `A = L D Lᵀ` for a symmetric band matrix, computed without pivoting.
#[derive(Debug, Clone)]
pub struct BandedLdlt {
    dim: usize,
    band: usize,
    // Row i holds L[i, i-band..i] left-padded with zeros.
    lower: Vec<f64>,
    diag: Vec<f64>,
}

impl BandedLdlt {
    pub fn factor(a: &SparseSym) -> Result<Self> {
        let n = a.dim();
        let band = a.bandwidth();
        let mut lower = vec![0.0; n * band];
        let mut diag = vec![0.0; n];
        // Working copy of row i of the band, columns i-band..=i.
        let mut row = vec![0.0; band + 1];
        // Transposed band of A: column i entries above the diagonal live in rows i-band..i.
        let mut upper_by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, j, v) in a.upper_entries() {
            upper_by_col[j].push((i, v));
        }
        let mut max_pivot: f64 = 0.0;
        for i in 0..n {
            row.iter_mut().for_each(|r| *r = 0.0);
            for &(r, v) in &upper_by_col[i] {
                row[band + r - i] = v;
            }
            let j0 = i.saturating_sub(band);
            // Solve for L[i, j] left to right; row[] holds A[i, j] - sum_k L[i,k] D[k] L[j,k].
            for j in j0..i {
                let off_j = band + j - i;
                let lij = row[off_j] / diag[j];
                lower[i * band + off_j] = lij;
                let wij = lij * diag[j];
                // Update remaining entries in row i: columns m in (j, i].
                // L[m, j] is stored in row m at offset band + j - m.
                let m_end = (j + band).min(i);
                for m in (j + 1)..=m_end {
                    let lmj = if m == i { lij } else { lower[m * band + band + j - m] };
                    row[band + m - i] -= wij * lmj;
                }
            }
            let d = row[band];
            if d == 0.0 || !d.is_finite() {
                return Err(Error::Resonance {
                    smallest_pivot: d.abs(),
                    largest_pivot: max_pivot,
                    row: i,
                });
            }
            diag[i] = d;
            max_pivot = max_pivot.max(d.abs());
        }
        let (row_min, min_pivot) = diag
            .iter()
            .enumerate()
            .map(|(i, d)| (i, d.abs()))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        if min_pivot < PIVOT_TOL * max_pivot {
            return Err(Error::Resonance {
                smallest_pivot: min_pivot,
                largest_pivot: max_pivot,
                row: row_min,
            });
        }
        Ok(Self {
            dim: n,
            band,
            lower,
            diag,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pivots(&self) -> &[f64] {
        &self.diag
    }

    /// Number of negative pivots, equal to the number of negative eigenvalues.
    pub fn negative_count(&self) -> usize {
        self.diag.iter().filter(|&&d| d < 0.0).count()
    }

    pub fn smallest_pivot(&self) -> f64 {
        self.diag.iter().map(|d| d.abs()).fold(f64::INFINITY, f64::min)
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        let b = self.band;
        for i in 0..self.dim {
            let j0 = i.saturating_sub(b);
            let mut s = x[i];
            for j in j0..i {
                s -= self.lower[i * b + b + j - i] * x[j];
            }
            x[i] = s;
        }
        for i in 0..self.dim {
            x[i] /= self.diag[i];
        }
        for i in (0..self.dim).rev() {
            let xi = x[i];
            let j0 = i.saturating_sub(b);
            for j in j0..i {
                x[j] -= self.lower[i * b + b + j - i] * xi;
            }
        }
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tridiag(n: usize, d: f64, o: f64) -> SparseSym {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, d));
            if i + 1 < n {
                t.push((i, i + 1, o));
            }
        }
        SparseSym::from_triplets(n, &t)
    }

    #[test]
    fn triplets_fold_and_sum() {
        let a = SparseSym::from_triplets(3, &[(0, 1, 1.0), (1, 0, 2.0), (2, 2, 4.0), (2, 2, 1.0)]);
        assert_eq!(a.get(0, 1), 3.0);
        assert_eq!(a.get(1, 0), 3.0);
        assert_eq!(a.get(2, 2), 5.0);
        assert_eq!(a.get(0, 2), 0.0);
        assert_eq!(a.nnz_upper(), 2);
    }

    #[test]
    fn matvec_matches_dense() {
        let a = SparseSym::from_triplets(4, &[(0, 0, 2.0), (0, 3, -1.0), (1, 2, 0.5), (3, 3, 1.0), (2, 1, 0.25)]);
        let x = [1.0, 2.0, 3.0, 4.0];
        let dense = a.to_dense() * nalgebra::DVector::from_column_slice(&x);
        let y = a.matvec(&x);
        for i in 0..4 {
            assert!((dense[i] - y[i]).abs() < 1e-15);
        }
        assert!((a.bilinear(&x, &x) - nalgebra::DVector::from_column_slice(&x).dot(&dense)).abs() < 1e-13);
    }

    #[test]
    fn ldlt_inertia_of_shifted_laplacian() {
        // Eigenvalues of tridiag(2,-1) are 2 - 2cos(j pi/(n+1)); shift by 0.5.
        let n = 20;
        let a = tridiag(n, 2.0 - 0.5, -1.0);
        let f = a.factor().unwrap();
        let expected = (1..=n)
            .filter(|&j| 2.0 - 2.0 * (j as f64 * std::f64::consts::PI / (n + 1) as f64).cos() - 0.5 < 0.0)
            .count();
        assert_eq!(f.negative_count(), expected);
    }

    #[test]
    fn singular_matrix_reports_resonance() {
        // Graph Laplacian of a path has the constant vector in its kernel.
        let n = 6;
        let mut t = Vec::new();
        for i in 0..n - 1 {
            t.extend([(i, i, 1.0), (i + 1, i + 1, 1.0), (i, i + 1, -1.0)]);
        }
        let a = SparseSym::from_triplets(n, &t);
        match a.factor() {
            Err(Error::Resonance { smallest_pivot, .. }) => assert!(smallest_pivot < 1e-12),
            other => panic!("expected resonance, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn banded_solve_matches_dense(seed in 0u64..500, n in 2usize..30, band in 1usize..6) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut t = Vec::new();
            for i in 0..n {
                // Diagonally dominant with random signs: nonsingular, indefinite.
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                t.push((i, i, sign * (2.0 * band as f64 + 1.0 + rng.random::<f64>())));
                for j in (i + 1)..(i + 1 + band).min(n) {
                    t.push((i, j, rng.random::<f64>() * 2.0 - 1.0));
                }
            }
            let a = SparseSym::from_triplets(n, &t);
            let f = a.factor().unwrap();
            let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
            let x = f.solve(&rhs);
            let r = a.matvec(&x);
            let err: f64 = r.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(err < 1e-10);
            let eig = a.to_dense().symmetric_eigenvalues();
            prop_assert_eq!(f.negative_count(), eig.iter().filter(|&&l| l < 0.0).count());
        }
    }
}
