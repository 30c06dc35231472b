//! The order "≤ up to `d` negative eigenvalues", the quadratic monotonicity identity,
//! the inclusion test for test regions and pixelwise reconstruction.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{assemble_weighted_mass, Coefficient, HelmholtzSystem};
use crate::mesh::{Mesh, Rect, Region};
use crate::ntd::{BoundaryBasis, ForwardModel, SymOp};
use crate::spectral::{count_negative, d_of_q, Tol};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Accepted,
    Rejected,
    /// An eigenvalue sits so close to `−tol` that the count could go either way.
    Ambiguous,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Accepted => "accepted",
            Verdict::Rejected => "rejected",
            Verdict::Ambiguous => "ambiguous",
        }
    }
}

/// Outcome of testing `A ≤_d B`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonResult {
    /// Eigenvalues of `B − A` below `−tol`.
    pub negative_count: usize,
    /// Eigenvalues within half a tolerance of `−tol`.
    pub indeterminate_count: usize,
    pub d_allowed: usize,
    pub tol_used: f64,
    pub verdict: Verdict,
    pub basis_dim: usize,
}

impl ComparisonResult {
    pub fn accepted(&self) -> bool {
        self.verdict == Verdict::Accepted
    }
}

fn classify(diff: &DMatrix<f64>, d: usize, tol: Tol) -> Result<ComparisonResult> {
    let inertia = count_negative(diff, tol)?;
    let t = inertia.tol;
    let sure = inertia.eigenvalues.iter().filter(|&&l| l < -1.5 * t).count();
    let possible = inertia.eigenvalues.iter().filter(|&&l| l < -0.5 * t).count();
    let verdict = if possible <= d {
        Verdict::Accepted
    } else if sure > d {
        Verdict::Rejected
    } else {
        Verdict::Ambiguous
    };
    Ok(ComparisonResult {
        negative_count: inertia.negative,
        indeterminate_count: possible - sure,
        d_allowed: d,
        tol_used: t,
        verdict,
        basis_dim: diff.nrows(),
    })
}

/// Tests `A ≤_d B`, i.e. whether `B − A` has at most `d` negative eigenvalues.
pub fn leq_d(a: &SymOp, b: &SymOp, d: usize, tol: Tol) -> Result<ComparisonResult> {
    let diff = b.lin_comb(1.0, a, -1.0, "difference")?;
    classify(&diff.matrix, d, tol)
}

/// Both sides of the quadratic identity relating `Λ(q₂) − Λ(q₁)` to the two solutions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityReport {
    /// `gᵀ(Λ(q₂)−Λ(q₁))g + ∫ k²(q₁−q₂)|u₁|²`.
    pub lhs: f64,
    /// `∫ |∇(u₂−u₁)|² − k²q₂|u₂−u₁|²`.
    pub rhs: f64,
    /// `|lhs − rhs| / max(|lhs|, |rhs|, 1)`.
    pub residual: f64,
}

/// Evaluates both sides of the identity for boundary data `Σ_j g_j φ_j` of `basis`.
pub fn identity_residual(
    mesh: &Mesh,
    q1: &Coefficient,
    q2: &Coefficient,
    k: f64,
    basis: &BoundaryBasis,
    g: &[f64],
) -> Result<IdentityReport> {
    if g.len() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            got: g.len(),
        });
    }
    let edge_data = basis.edge_values(g);
    let s1 = HelmholtzSystem::new(mesh, q1, k)?;
    let s2 = HelmholtzSystem::new(mesh, q2, k)?;
    let u1 = s1.solve(mesh, &edge_data)?.0;
    let u2 = s2.solve(mesh, &edge_data)?.0;
    let load = crate::fem::assemble_boundary_load(mesh, &edge_data)?;
    let w: Vec<f64> = u2.iter().zip(&u1).map(|(a, b)| a - b).collect();

    let k2 = k * k;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let ntd_form = dot(&load, &w);
    let m_diff = assemble_weighted_mass(mesh, &q1.sub(q2))?;
    let lhs = ntd_form + k2 * m_diff.bilinear(&u1, &u1);
    let m_q2 = assemble_weighted_mass(mesh, q2)?;
    let rhs = s2.stiffness().bilinear(&w, &w) - k2 * m_q2.bilinear(&w, &w);
    let residual = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0);
    Ok(IdentityReport { lhs, rhs, residual })
}

/// Tests `Λ(q₁) ≤_{d(q₂)} Λ(q₂)`; requires `q₁ ≤ q₂` triangle-wise.
pub fn monotonicity_check(
    mesh: &Mesh,
    q1: &Coefficient,
    q2: &Coefficient,
    k: f64,
    basis: &BoundaryBasis,
    tol: Tol,
) -> Result<ComparisonResult> {
    if !q1.le(q2) {
        return Err(Error::Precondition("monotonicity check needs q1 <= q2 on every triangle".into()));
    }
    let l1 = ForwardModel::new(mesh, q1, k, basis)?.ntd("Lambda(q1)")?;
    let l2 = ForwardModel::new(mesh, q2, k, basis)?.ntd("Lambda(q2)")?;
    let d = d_of_q(mesh, q2, k, Tol::default())?;
    leq_d(&l1, &l2, d, tol)
}

/// Tests `α T_B ≤_{d_max} Λq − Λ1`.
pub fn inclusion_test(
    lambda_q: &SymOp,
    lambda_1: &SymOp,
    tb: &SymOp,
    alpha: f64,
    d_max: usize,
    tol: Tol,
) -> Result<ComparisonResult> {
    let diff = lambda_q.lin_comb(1.0, lambda_1, -1.0, "data")?;
    inclusion_against(&diff, tb, alpha, d_max, tol)
}

fn inclusion_against(data: &SymOp, tb: &SymOp, alpha: f64, d_max: usize, tol: Tol) -> Result<ComparisonResult> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    let m = data.lin_comb(1.0, tb, -alpha, "test")?;
    classify(&m.matrix, d_max, tol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Contrast {
    /// `q ≥ 1`, scatterer where `q > 1`.
    Positive,
    /// `q ≤ 1`, scatterer where `q < 1`.
    Negative,
}

impl Contrast {
    pub fn as_str(self) -> &'static str {
        match self {
            Contrast::Positive => "positive",
            Contrast::Negative => "negative",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaPolicy {
    /// `α = q_min − 1` (positive contrast only).
    MaxAdmissible,
    Fixed(f64),
    /// Scans `α = 2^-m`, `m = 0..=max_halvings`, and keeps the largest `α` whose mask is
    /// non-empty and unchanged at `α/2`.
    Sweep { max_halvings: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructOptions {
    pub contrast: Contrast,
    pub alpha: AlphaPolicy,
    pub tol: Tol,
    /// Lower and upper bound of `q` on the scatterer; taken from `q_true` when absent.
    pub bounds: Option<(f64, f64)>,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self {
            contrast: Contrast::Positive,
            alpha: AlphaPolicy::MaxAdmissible,
            tol: Tol::default(),
            bounds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    pub rects: Vec<Rect>,
    pub tests: Vec<ComparisonResult>,
    pub k: f64,
    pub alpha: f64,
    pub d_max: usize,
    pub basis_dim: usize,
    pub contrast: Contrast,
    /// `(α, accepted pixel count)` for every `α` that was evaluated.
    pub alpha_trace: Vec<(f64, usize)>,
}

impl ReconstructionResult {
    pub fn mask(&self) -> Vec<Verdict> {
        self.tests.iter().map(|t| t.verdict).collect()
    }

    pub fn negative_counts(&self) -> Vec<usize> {
        self.tests.iter().map(|t| t.negative_count).collect()
    }

    pub fn accepted_count(&self) -> usize {
        self.tests.iter().filter(|t| t.accepted()).count()
    }
}

// Bounds of q over the triangles that differ from the background value 1.
fn scatterer_bounds(q: &Coefficient) -> Option<(f64, f64)> {
    let inside: Vec<f64> = q.values().iter().copied().filter(|&v| v != 1.0).collect();
    if inside.is_empty() {
        return None;
    }
    Some((
        inside.iter().copied().fold(f64::INFINITY, f64::min),
        inside.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    ))
}

/// Runs the inclusion test for every pixel of `grid`.
pub fn reconstruct(
    mesh: &Mesh,
    q_true: &Coefficient,
    k: f64,
    basis: &BoundaryBasis,
    grid: &[(Rect, Region)],
    opts: &ReconstructOptions,
) -> Result<ReconstructionResult> {
    if grid.is_empty() {
        return Err(Error::EmptySelection("pixel grid is empty".into()));
    }
    let bounds = opts.bounds.or_else(|| scatterer_bounds(q_true));
    match opts.contrast {
        Contrast::Positive if q_true.min() < 1.0 => {
            return Err(Error::Precondition("positive contrast needs q >= 1 everywhere".into()))
        }
        Contrast::Negative if q_true.max() > 1.0 => {
            return Err(Error::Precondition("negative contrast needs q <= 1 everywhere".into()))
        }
        _ => {}
    }

    let background = ForwardModel::new(mesh, &Coefficient::constant(mesh, 1.0), k, basis)?;
    let lambda_1 = background.ntd("Lambda(1)")?;
    let lambda_q = ForwardModel::new(mesh, q_true, k, basis)?.ntd("Lambda(q)")?;
    let (data, d_max) = match opts.contrast {
        Contrast::Positive => {
            let q_max = bounds.map_or(1.0, |b| b.1);
            let d = d_of_q(mesh, &Coefficient::constant(mesh, q_max), k, Tol::default())?;
            (lambda_q.lin_comb(1.0, &lambda_1, -1.0, "Lambda(q)-Lambda(1)")?, d)
        }
        Contrast::Negative => {
            let d = d_of_q(mesh, &Coefficient::constant(mesh, 1.0), k, Tol::default())?;
            (lambda_1.lin_comb(1.0, &lambda_q, -1.0, "Lambda(1)-Lambda(q)")?, d)
        }
    };

    let tbs: Vec<SymOp> = grid
        .par_iter()
        .map(|(_, r)| background.tb(r))
        .collect::<Result<_>>()?;
    let run = |alpha: f64| -> Result<Vec<ComparisonResult>> {
        tbs.par_iter()
            .map(|tb| inclusion_against(&data, tb, alpha, d_max, opts.tol))
            .collect()
    };
    let accepted = |tests: &[ComparisonResult]| tests.iter().filter(|t| t.accepted()).count();

    let mut trace = Vec::new();
    let (alpha, tests) = match opts.alpha {
        AlphaPolicy::MaxAdmissible => {
            if opts.contrast == Contrast::Negative {
                return Err(Error::Precondition(
                    "no explicit admissible alpha for negative contrast; use a sweep or a fixed value".into(),
                ));
            }
            let q_min = bounds
                .map(|b| b.0)
                .ok_or_else(|| Error::Precondition("no scatterer: cannot derive alpha from q_min".into()))?;
            let alpha = q_min - 1.0;
            if !(alpha > 0.0) {
                return Err(Error::Precondition(format!("q_min - 1 = {alpha} is not positive")));
            }
            let tests = run(alpha)?;
            trace.push((alpha, accepted(&tests)));
            (alpha, tests)
        }
        AlphaPolicy::Fixed(alpha) => {
            let tests = run(alpha)?;
            trace.push((alpha, accepted(&tests)));
            (alpha, tests)
        }
        AlphaPolicy::Sweep { max_halvings } => {
            let mut prev: Option<(f64, Vec<ComparisonResult>)> = None;
            let mut chosen = None;
            for m in 0..=max_halvings {
                let alpha = 0.5f64.powi(m as i32);
                let tests = run(alpha)?;
                trace.push((alpha, accepted(&tests)));
                if let Some((pa, pt)) = prev.take() {
                    let same = pt.iter().zip(&tests).all(|(a, b)| a.verdict == b.verdict);
                    if same && accepted(&pt) > 0 {
                        chosen = Some((pa, pt));
                        break;
                    }
                }
                prev = Some((alpha, tests));
            }
            match chosen.or(prev) {
                Some(c) => c,
                None => unreachable!("sweep evaluates at least one alpha"),
            }
        }
    };

    Ok(ReconstructionResult {
        rects: grid.iter().map(|(r, _)| *r).collect(),
        tests,
        k,
        alpha,
        d_max,
        basis_dim: basis.dim(),
        contrast: opts.contrast,
        alpha_trace: trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantitativeReport {
    /// Smallest eigenvalue of `Λ(q₂) − Λ(q₁) − G` on `V^⊥`, where `G` is the Gram matrix of
    /// `∫ k²(q₂−q₁) |u₁|²`.
    pub gap: f64,
    /// `dim V`; at most `d(q₂)`.
    pub deflated: usize,
    /// Largest entry magnitude of `Λ(q₂) − Λ(q₁)`.
    pub scale: f64,
}

/// Checks `Λ(q₂) − Λ(q₁) ≥ k²(q₂−q₁)|u₁|²` on the complement of `V = (S₂−S₁)ᵀ V(q₂)`, where
/// `V(q₂)` spans the `H¹`-pencil eigenvectors above one and `S_j` maps boundary coefficients
/// to nodal solutions. On `V^⊥` the difference of both sides is `wᵀ A(q₂) w ≥ 0` with
/// `w = u₂ − u₁` `H¹`-orthogonal to `V(q₂)`.
pub fn quantitative_gap(
    mesh: &Mesh,
    q1: &Coefficient,
    q2: &Coefficient,
    k: f64,
    basis: &BoundaryBasis,
) -> Result<QuantitativeReport> {
    let m1 = ForwardModel::new(mesh, q1, k, basis)?;
    let m2 = ForwardModel::new(mesh, q2, k, basis)?;
    let l1 = m1.ntd("Lambda(q1)")?;
    let l2 = m2.ntd("Lambda(q2)")?;
    let diff = l2.lin_comb(1.0, &l1, -1.0, "difference")?;
    let gram = m1.weighted_gram(&q2.sub(q1).scale(k * k), "weighted gram")?;

    let top = crate::spectral::k_pencil_above_one(mesh, q2, k, Tol::default())?;
    let vq = top.eigenvectors.expect("vectors requested");
    let h1 = crate::fem::assemble_stiffness(mesh)?.lin_comb(1.0, &crate::fem::assemble_mass(mesh)?, 1.0);
    let w = m2.solutions() - m1.solutions();
    let v = w.transpose() * h1.mul_dense(&vq);

    // Eigenvectors of V Vᵀ with negligible eigenvalue span V^⊥.
    let dim = diff.dim();
    let (vals, vecs) = crate::eigen::sym_eig_desc(&(&v * v.transpose()));
    let cutoff = 1e-12 * vals[0].max(0.0);
    let keep: Vec<usize> = (0..dim).filter(|&i| vals[i] <= cutoff).collect();
    let complement = DMatrix::from_fn(dim, keep.len(), |r, c| vecs[(r, keep[c])]);
    let compressed = crate::eigen::symmetrize(&(complement.transpose() * (&diff.matrix - &gram.matrix) * &complement));
    let scale = diff.matrix.amax();
    let gap = compressed.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    Ok(QuantitativeReport {
        gap,
        deflated: dim - complement.ncols(),
        scale,
    })
}

/// Quadratic form `gᵀ A g`.
pub fn quad(a: &SymOp, g: &[f64]) -> f64 {
    a.quad(&DVector::from_column_slice(g))
}
