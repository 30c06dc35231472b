//! Neumann eigenvalues of `Δ + k² q`, the count `d(q)`, resonance detection and
//! eigenvalue counting for dense symmetric matrices.
//!
//! Weak form of the Neumann eigenproblem: `(−S + k² M_q) v = λ M v`. Counts of
//! eigenvalues above a threshold `t` come from the inertia of `S − k² M_q + t M`
//! (Sylvester's law), so they are exact integers whenever the factorization succeeds.

use nalgebra::DMatrix;

use crate::eigen::{map_columns, subspace_iteration, sym_eig_desc, symmetry_defect, SubspaceOptions};
use crate::error::{Error, Result};
use crate::fem::{assemble_mass, assemble_stiffness, assemble_weighted_mass, Coefficient};
use crate::mesh::Mesh;
use crate::sparse::SparseSym;

/// Default relative tolerance for eigenvalue counts.
pub const DEFAULT_REL_TOL: f64 = 1e-8;

/// Threshold for eigenvalue classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tol {
    /// Absolute threshold.
    Abs(f64),
    /// Multiple of the largest eigenvalue magnitude of the matrix at hand.
    Rel(f64),
}

impl Default for Tol {
    fn default() -> Self {
        Tol::Rel(DEFAULT_REL_TOL)
    }
}

impl Tol {
    pub fn resolve(self, scale: f64) -> f64 {
        match self {
            Tol::Abs(t) => t,
            Tol::Rel(r) => r * scale,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    /// Sorted descending.
    pub eigenvalues: Vec<f64>,
    /// Mass-orthonormal eigenvectors (columns), when requested.
    pub eigenvectors: Option<DMatrix<f64>>,
    pub count_requested: usize,
    pub iterations: usize,
}

/// The Neumann eigenvalue pencil `(−S + k² M_q, M)` on a mesh.
#[derive(Debug, Clone)]
pub struct NeumannPencil {
    k: f64,
    stiffness: SparseSym,
    mass: SparseSym,
    mass_q: SparseSym,
    q_max: f64,
}

impl NeumannPencil {
    pub fn new(mesh: &Mesh, q: &Coefficient, k: f64) -> Result<Self> {
        if !(k >= 0.0 && k.is_finite()) {
            return Err(Error::InvalidParameter(format!("frequency must be non-negative, got {k}")));
        }
        Ok(Self {
            k,
            stiffness: assemble_stiffness(mesh)?,
            mass: assemble_mass(mesh)?,
            mass_q: assemble_weighted_mass(mesh, q)?,
            q_max: q.max(),
        })
    }

    pub fn dim(&self) -> usize {
        self.mass.dim()
    }

    pub fn stiffness(&self) -> &SparseSym {
        &self.stiffness
    }

    pub fn mass(&self) -> &SparseSym {
        &self.mass
    }

    pub fn mass_q(&self) -> &SparseSym {
        &self.mass_q
    }

    /// `S − k² M_q + shift · M`.
    pub fn shifted(&self, shift: f64) -> SparseSym {
        let a = self.stiffness.lin_comb(1.0, &self.mass_q, -self.k * self.k);
        if shift == 0.0 {
            a
        } else {
            a.lin_comb(1.0, &self.mass, shift)
        }
    }

    /// Spectral scale: the largest diagonal Rayleigh quotient `|A_ii| / M_ii`, a lower bound
    /// within a small factor of the largest eigenvalue magnitude.
    pub fn scale(&self) -> f64 {
        let a = self.shifted(0.0).diagonal();
        let m = self.mass.diagonal();
        a.iter().zip(&m).map(|(a, m)| a.abs() / m).fold(0.0, f64::max)
    }

    pub fn resolve_tol(&self, tol: Tol) -> f64 {
        tol.resolve(self.scale())
    }

    /// Number of eigenvalues strictly greater than `t`.
    pub fn count_above(&self, t: f64) -> Result<usize> {
        Ok(self.shifted(t).factor()?.negative_count())
    }

    /// The `m` largest eigenvalues, by shift-invert subspace iteration about a shift above the
    /// spectrum (`k² max q + 1`), where the shifted operator is positive definite.
    pub fn largest(&self, m: usize, with_vectors: bool) -> Result<EigenResult> {
        let n = self.dim();
        if m == 0 || m > n {
            return Err(Error::InvalidParameter(format!("eigenvalue count must be in 1..={n}, got {m}")));
        }
        let sigma = self.k * self.k * self.q_max.max(0.0) + 1.0;
        // σM − (−S + k² M_q) = S − k² M_q + σM.
        let fac = self.shifted(sigma).factor()?;
        if fac.negative_count() != 0 {
            return Err(Error::Precondition("shifted Neumann operator is not positive definite".into()));
        }
        let mass = &self.mass;
        let op = |x: &DMatrix<f64>| map_columns(x, |c| fac.solve(&mass.matvec(c)));
        let inner = |x: &DMatrix<f64>| mass.mul_dense(x);
        let opts = SubspaceOptions {
            block: (m + m.max(8)).min(n),
            nev: m,
            tol: 1e-11,
            ..Default::default()
        };
        let ritz = subspace_iteration(n, op, inner, &opts)?;
        // θ = 1/(σ − λ) > 0, so magnitude order is eigenvalue order.
        let eigenvalues: Vec<f64> = ritz.values[..m].iter().map(|&t| sigma - 1.0 / t).collect();
        let eigenvectors = with_vectors.then(|| ritz.vectors.columns(0, m).into_owned());
        Ok(EigenResult {
            eigenvalues,
            eigenvectors,
            count_requested: m,
            iterations: ritz.iterations,
        })
    }

    /// The `m` eigenvalues closest to zero (shift-invert about 0), sorted descending.
    pub fn nearest_zero(&self, m: usize) -> Result<EigenResult> {
        let n = self.dim();
        if m == 0 || m > n {
            return Err(Error::InvalidParameter(format!("eigenvalue count must be in 1..={n}, got {m}")));
        }
        let fac = self.shifted(0.0).factor()?;
        let mass = &self.mass;
        // A⁻¹ M has eigenvalues −1/λ.
        let op = |x: &DMatrix<f64>| map_columns(x, |c| fac.solve(&mass.matvec(c)));
        let inner = |x: &DMatrix<f64>| mass.mul_dense(x);
        let opts = SubspaceOptions {
            block: (m + m.max(8)).min(n),
            nev: m,
            tol: 1e-11,
            ..Default::default()
        };
        let ritz = subspace_iteration(n, op, inner, &opts)?;
        let mut eigenvalues: Vec<f64> = ritz.values[..m].iter().map(|&t| -1.0 / t).collect();
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        Ok(EigenResult {
            eigenvalues,
            eigenvectors: None,
            count_requested: m,
            iterations: ritz.iterations,
        })
    }

    /// Relative residual `‖(−S + k²M_q) v − λ M v‖ / (‖v‖ · scale)`.
    pub fn residual(&self, lambda: f64, v: &[f64]) -> f64 {
        let a = self.shifted(0.0);
        let av = a.matvec(v);
        let mv = self.mass.matvec(v);
        let r: f64 = av.iter().zip(&mv).map(|(a, m)| (-a - lambda * m).powi(2)).sum::<f64>().sqrt();
        let vn: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        r / (vn * self.scale().max(1.0))
    }
}

/// The `m` largest Neumann eigenvalues of `Δ + k² q`.
pub fn neumann_eigenvalues(mesh: &Mesh, q: &Coefficient, k: f64, m: usize) -> Result<EigenResult> {
    NeumannPencil::new(mesh, q, k)?.largest(m, false)
}

/// `d(q)`: the number of positive Neumann eigenvalues, counted by inertia.
///
/// Eigenvalues in `(−tol, tol]` make the count ambiguous and raise [`Error::Ambiguity`].
pub fn d_of_q(mesh: &Mesh, q: &Coefficient, k: f64, tol: Tol) -> Result<usize> {
    let pencil = NeumannPencil::new(mesh, q, k)?;
    let t = pencil.resolve_tol(tol);
    let ambiguous = |detail: String| Error::Ambiguity {
        threshold: 0.0,
        tol: t,
        detail,
    };
    let above = pencil.count_above(t).map_err(|e| match e {
        Error::Resonance { .. } => ambiguous("eigenvalue at +tol".into()),
        other => other,
    })?;
    let above_neg = pencil.count_above(-t).map_err(|e| match e {
        Error::Resonance { .. } => ambiguous("eigenvalue at -tol".into()),
        other => other,
    })?;
    if above != above_neg {
        return Err(ambiguous(format!("{} eigenvalue(s) within tolerance of zero", above_neg - above)));
    }
    Ok(above)
}

/// Eigenpairs with `μ > 1 + tol` of the pencil `M_{1+k²q} v = μ (S + M) v`, the discrete form
/// of `K + k² K_q` on `H¹`. Vectors are `(S + M)`-orthonormal. Computed from explicit
/// eigenvalues (subspace iteration), independently of the inertia route used by [`d_of_q`].
///
/// Eigenvalues within `tol` of one raise [`Error::Ambiguity`].
pub fn k_pencil_above_one(mesh: &Mesh, q: &Coefficient, k: f64, tol: Tol) -> Result<EigenResult> {
    let stiffness = assemble_stiffness(mesh)?;
    let mass = assemble_mass(mesh)?;
    let weighted = mass.lin_comb(1.0, &assemble_weighted_mass(mesh, q)?, k * k);
    let gram = stiffness.lin_comb(1.0, &mass, 1.0);
    let fac = gram.factor()?;
    let n = gram.dim();
    let op = |x: &DMatrix<f64>| map_columns(x, |c| fac.solve(&weighted.matvec(c)));
    let inner = |x: &DMatrix<f64>| gram.mul_dense(x);

    const GUARD: usize = 4;
    let mut block = 8.min(n);
    loop {
        let nev = if block == n { n } else { block - GUARD };
        let opts = SubspaceOptions {
            block,
            nev,
            tol: 1e-12,
            ..Default::default()
        };
        let ritz = subspace_iteration(n, op, inner, &opts)?;
        let mu = &ritz.values[..nev];
        let t = tol.resolve(mu[0].abs());
        if let Some(&bad) = mu.iter().find(|&&m| (m - 1.0).abs() <= t) {
            return Err(Error::Ambiguity {
                threshold: 1.0,
                tol: t,
                detail: format!("eigenvalue {bad} of the H1 pencil"),
            });
        }
        // Everything outside the converged block is smaller in magnitude than its last value.
        if nev == n || mu[nev - 1].abs() < 1.0 - t {
            let keep: Vec<usize> = (0..nev).filter(|&i| mu[i] > 1.0 + t).collect();
            let vectors = DMatrix::from_fn(n, keep.len(), |r, c| ritz.vectors[(r, keep[c])]);
            return Ok(EigenResult {
                eigenvalues: keep.iter().map(|&i| mu[i]).collect(),
                eigenvectors: Some(vectors),
                count_requested: keep.len(),
                iterations: ritz.iterations,
            });
        }
        block = (2 * block).min(n);
    }
}

/// Number of eigenvalues larger than one of the `H¹` pencil of [`k_pencil_above_one`].
pub fn count_k_eigs_above_one(mesh: &Mesh, q: &Coefficient, k: f64, tol: Tol) -> Result<usize> {
    Ok(k_pencil_above_one(mesh, q, k, tol)?.eigenvalues.len())
}

/// Whether some Neumann eigenvalue lies in `[−tol, tol]`, i.e. `k` is a discrete resonance.
pub fn is_resonance(mesh: &Mesh, q: &Coefficient, k: f64, tol: f64) -> Result<bool> {
    let pencil = NeumannPencil::new(mesh, q, k)?;
    let (above, above_neg) = match (pencil.count_above(tol), pencil.count_above(-tol)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(Error::Resonance { .. }), _) | (_, Err(Error::Resonance { .. })) => return Ok(true),
        (Err(e), _) | (_, Err(e)) => return Err(e),
    };
    Ok(above_neg > above)
}

/// Eigenvalue classification of a dense symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Inertia {
    /// Eigenvalues below `−tol`.
    pub negative: usize,
    /// Eigenvalues in `[−tol, tol]`.
    pub zero: usize,
    /// Eigenvalues above `tol`.
    pub positive: usize,
    /// Eigenvalues whose magnitude is within `tol/2` of `tol` (ties at either cutoff).
    pub indeterminate: usize,
    /// Ties at the negative cutoff only.
    pub indeterminate_negative: usize,
    pub tol: f64,
    /// Sorted descending.
    pub eigenvalues: Vec<f64>,
}

impl Inertia {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }
}

/// Width of the tie band around the cutoffs, relative to `tol`.
pub const TIE_BAND: f64 = 0.5;

/// Classifies the eigenvalues of a symmetric matrix by a full symmetric eigendecomposition.
pub fn count_negative(a: &DMatrix<f64>, tol: Tol) -> Result<Inertia> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    let defect = symmetry_defect(a);
    if defect > 1e-12 {
        return Err(Error::NotSymmetric { defect });
    }
    let (eigenvalues, _) = sym_eig_desc(a);
    let scale = eigenvalues.iter().map(|l| l.abs()).fold(0.0, f64::max);
    let t = tol.resolve(scale);
    let band = TIE_BAND * t;
    let negative = eigenvalues.iter().filter(|&&l| l < -t).count();
    let positive = eigenvalues.iter().filter(|&&l| l > t).count();
    let indeterminate_negative = eigenvalues.iter().filter(|&&l| (l + t).abs() <= band && l != 0.0).count();
    let indeterminate = indeterminate_negative
        + eigenvalues.iter().filter(|&&l| (l - t).abs() <= band && l != 0.0).count();
    Ok(Inertia {
        negative,
        zero: eigenvalues.len() - negative - positive,
        positive,
        indeterminate,
        indeterminate_negative,
        tol: t,
        eigenvalues,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn count_negative_basic() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 2.0, 3.0]));
        let r = count_negative(&a, Tol::Abs(1e-8)).unwrap();
        assert_eq!((r.negative, r.zero, r.positive), (1, 0, 2));

        let z = DMatrix::<f64>::zeros(4, 4);
        let r = count_negative(&z, Tol::default()).unwrap();
        assert_eq!((r.negative, r.zero, r.positive, r.indeterminate), (0, 4, 0, 0));
    }

    #[test]
    fn count_negative_rejects_asymmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(count_negative(&a, Tol::default()), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn ties_reported() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, 1.0, -1e-2 * 1.1]));
        let r = count_negative(&a, Tol::Abs(1e-2)).unwrap();
        assert_eq!(r.negative, 2);
        assert_eq!(r.indeterminate_negative, 1);
    }

    #[test]
    fn q_zero_top_eigenvalue_is_zero() {
        let m = Mesh::unit_square(8).unwrap();
        let q = Coefficient::constant(&m, 0.0);
        let r = neumann_eigenvalues(&m, &q, 1.0, 3).unwrap();
        assert!(r.eigenvalues[0].abs() < 1e-10);
        assert!(r.eigenvalues[1] < -9.0);
    }

    #[test]
    fn eigenpairs_have_small_residuals() {
        let m = Mesh::unit_square(12).unwrap();
        let q = Coefficient::from_fn(&m, |p| 1.0 + p[0]).unwrap();
        let pencil = NeumannPencil::new(&m, &q, 2.0).unwrap();
        let r = pencil.largest(5, true).unwrap();
        let v = r.eigenvectors.unwrap();
        for i in 0..5 {
            assert!(pencil.residual(r.eigenvalues[i], v.column(i).as_slice()) < 1e-8);
        }
        for w in r.eigenvalues.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn analytic_counts_on_coarse_mesh() {
        let m = Mesh::unit_square(16).unwrap();
        let one = Coefficient::constant(&m, 1.0);
        assert_eq!(d_of_q(&m, &one, 1.0, Tol::default()).unwrap(), 1);
        assert_eq!(d_of_q(&m, &one, 4.0, Tol::default()).unwrap(), 3);
        assert_eq!(count_k_eigs_above_one(&m, &one, 1.0, Tol::default()).unwrap(), 1);
        assert_eq!(count_k_eigs_above_one(&m, &one, 4.0, Tol::default()).unwrap(), 3);
        // k² q0 below the first nonzero Laplacian eigenvalue π².
        let q0 = Coefficient::constant(&m, 0.8);
        assert_eq!(d_of_q(&m, &q0, 3.0, Tol::default()).unwrap(), 1);
    }

    #[test]
    fn k_pencil_flags_unit_eigenvalue_for_zero_coefficient() {
        // q = 0: constants give μ = 1 exactly, which sits on the threshold.
        let m = Mesh::unit_square(8).unwrap();
        let q = Coefficient::constant(&m, 0.0);
        assert!(matches!(
            count_k_eigs_above_one(&m, &q, 3.0, Tol::default()),
            Err(Error::Ambiguity { .. })
        ));
        // Slightly negative q pushes every μ below one.
        let q = Coefficient::constant(&m, -0.01);
        assert_eq!(count_k_eigs_above_one(&m, &q, 3.0, Tol::default()).unwrap(), 0);
    }

    #[test]
    fn resonance_at_pi() {
        let m = Mesh::unit_square(32).unwrap();
        let one = Coefficient::constant(&m, 1.0);
        assert!(is_resonance(&m, &one, PI, 1e-1).unwrap());
        assert!(!is_resonance(&m, &one, 1.0, 1e-2).unwrap());
    }

    #[test]
    fn d_of_q_ambiguity_is_raised() {
        // q = 0: constants have eigenvalue exactly zero.
        let m = Mesh::unit_square(4).unwrap();
        let q = Coefficient::constant(&m, 0.0);
        assert!(matches!(d_of_q(&m, &q, 1.0, Tol::Abs(1e-6)), Err(Error::Ambiguity { .. })));
    }
}
