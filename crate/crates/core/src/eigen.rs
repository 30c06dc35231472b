//! Dense helpers and block subspace iteration for operators that are self-adjoint
//! in a `B`-inner product (`B` symmetric positive definite).
//!
//! Subspace iteration is used instead of single-vector Lanczos because the
//! reference domain is symmetric and its spectra have exact multiplicities.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted descending.
pub fn sym_eig_desc(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), a.nrows(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Relative symmetry defect `‖A − Aᵀ‖_F / ‖A‖_F` (zero for the zero matrix).
pub fn symmetry_defect(a: &DMatrix<f64>) -> f64 {
    let norm = a.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (a - a.transpose()).norm() / norm
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Applies `f` to every column of `x` in parallel.
pub fn map_columns<F>(x: &DMatrix<f64>, f: F) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let cols: Vec<Vec<f64>> = (0..x.ncols())
        .into_par_iter()
        .map(|c| f(x.column(c).as_slice()))
        .collect();
    let nrows = cols.first().map_or(x.nrows(), |c| c.len());
    DMatrix::from_fn(nrows, cols.len(), |r, c| cols[c][r])
}

#[derive(Debug, Clone)]
pub struct SubspaceOptions {
    /// Block size (number of simultaneous iterates).
    pub block: usize,
    /// Number of leading Ritz pairs that must converge.
    pub nev: usize,
    /// Residual tolerance relative to the largest Ritz value magnitude.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SubspaceOptions {
    fn default() -> Self {
        Self {
            block: 12,
            nev: 6,
            tol: 1e-11,
            max_iter: 3000,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RitzPairs {
    /// Ritz values ordered by decreasing magnitude.
    pub values: Vec<f64>,
    /// `B`-orthonormal Ritz vectors, one column per value.
    pub vectors: DMatrix<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

// B-orthonormalizes the columns of `y`. Returns (Q, BQ).
fn b_orthonormalize<B>(y: DMatrix<f64>, inner: &B, rng: &mut ChaCha8Rng) -> Result<(DMatrix<f64>, DMatrix<f64>)>
where
    B: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    let (n, p) = y.shape();
    let mut q = y;
    for _attempt in 0..4 {
        let mut ok = true;
        for _pass in 0..2 {
            let bq = inner(&q);
            let gram = symmetrize(&(q.transpose() * &bq));
            let eig = SymmetricEigen::new(gram);
            let lmax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
            if !(lmax > 0.0) {
                ok = false;
                break;
            }
            let keep: Vec<usize> = (0..p).filter(|&i| eig.eigenvalues[i] > 1e-13 * lmax).collect();
            let mut t = DMatrix::zeros(p, keep.len());
            for (c, &i) in keep.iter().enumerate() {
                let s = 1.0 / eig.eigenvalues[i].sqrt();
                for r in 0..p {
                    t[(r, c)] = eig.eigenvectors[(r, i)] * s;
                }
            }
            q = &q * t;
            if keep.len() < p {
                ok = false;
                break;
            }
        }
        if ok {
            let bq = inner(&q);
            return Ok((q, bq));
        }
        // Refill lost directions with fresh random vectors and retry.
        let have = q.ncols();
        let mut filled = DMatrix::zeros(n, p);
        filled.columns_mut(0, have).copy_from(&q);
        for c in have..p {
            for r in 0..n {
                filled[(r, c)] = rng.random::<f64>() - 0.5;
            }
        }
        q = filled;
    }
    Err(Error::RankDeficient)
}

/// Block subspace iteration with Rayleigh–Ritz for the `nev` eigenvalues of largest
/// magnitude of `op`, which must be self-adjoint with respect to `xᵀ B y`.
pub fn subspace_iteration<A, B>(n: usize, op: A, inner: B, opts: &SubspaceOptions) -> Result<RitzPairs>
where
    A: Fn(&DMatrix<f64>) -> DMatrix<f64>,
    B: Fn(&DMatrix<f64>) -> DMatrix<f64>,
{
    if n == 0 {
        return Err(Error::InvalidParameter("empty operator".into()));
    }
    let p = opts.block.clamp(1, n);
    let nev = opts.nev.clamp(1, p);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let x0 = DMatrix::from_fn(n, p, |_, _| rng.random::<f64>() - 0.5);
    let mut y = op(&x0);
    let mut worst = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let (q, bq) = b_orthonormalize(y, &inner, &mut rng)?;
        let z = op(&q);
        let h = symmetrize(&(bq.transpose() * &z));
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].abs().total_cmp(&eig.eigenvalues[i].abs()));
        let s = DMatrix::from_fn(p, p, |r, c| eig.eigenvectors[(r, order[c])]);
        let theta: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let x = &q * &s;
        let ox = &z * &s;

        let mut resid = ox.clone();
        for (c, &t) in theta.iter().enumerate() {
            resid.column_mut(c).axpy(-t, &x.column(c), 1.0);
        }
        let bres = inner(&resid);
        let residuals: Vec<f64> = (0..p)
            .map(|c| resid.column(c).dot(&bres.column(c)).max(0.0).sqrt())
            .collect();
        let scale = theta[0].abs().max(f64::MIN_POSITIVE);
        worst = residuals[..nev].iter().copied().fold(0.0, f64::max) / scale;
        // With a full block the Ritz pairs are exact eigenpairs.
        if worst <= opts.tol || p == n {
            return Ok(RitzPairs {
                values: theta,
                vectors: x,
                residuals,
                iterations: it,
            });
        }
        y = ox;
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual: worst,
    })
}

/// Solves the dense symmetric-definite pencil `A v = μ C v` (C positive definite) by
/// Cholesky reduction. Eigenvalues descending; eigenvectors are C-orthonormal.
pub fn generalized_sym_eig(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = c.clone().cholesky().ok_or_else(|| {
        Error::Precondition("right-hand matrix of the pencil is not positive definite".into())
    })?;
    let l = chol.l();
    let linv_a = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::Precondition("singular Cholesky factor".into()))?;
    let reduced = l
        .solve_lower_triangular(&linv_a.transpose())
        .ok_or_else(|| Error::Precondition("singular Cholesky factor".into()))?;
    let (vals, y) = sym_eig_desc(&symmetrize(&reduced));
    let v = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::Precondition("singular Cholesky factor".into()))?;
    Ok((vals, v))
}

pub fn dvec(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}
