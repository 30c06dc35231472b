//! Discrete Neumann-to-Dirichlet operators on a piecewise-constant basis of `L²(Σ)`,
//! region Gram matrices `∫_R u^(g_i) u^(g_j)`, and localized potentials.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eigen::{generalized_sym_eig, map_columns, symmetrize, symmetry_defect};
use crate::error::{Error, Result};
use crate::fem::{assemble_boundary_load, Coefficient, HelmholtzSystem};
use crate::mesh::{Mesh, Region};

/// Largest relative asymmetry accepted before an operator is symmetrized.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// `L²(Σ)`-orthonormal basis of indicator functions on panels of Σ-edges.
///
/// Each basis function is `1/√|P|` on its panel `P` (a group of boundary edges) and zero
/// elsewhere; panels are disjoint, so the basis is orthonormal.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryBasis {
    n_boundary_edges: usize,
    panels: Vec<Vec<usize>>,
    lengths: Vec<f64>,
    id: u64,
}

impl BoundaryBasis {
    /// One basis function per Σ-edge.
    pub fn per_edge(mesh: &Mesh) -> Result<Self> {
        let edges = ordered_sigma_edges(mesh)?;
        Self::from_panels(mesh, edges.into_iter().map(|e| vec![e]).collect())
    }

    /// Splits the Σ-edges, in boundary order, into `count` contiguous panels of nearly equal
    /// edge count. With a fixed `count` the panels do not depend on mesh refinement as long as
    /// the number of Σ-edges is a multiple of `count`.
    pub fn panels(mesh: &Mesh, count: usize) -> Result<Self> {
        let edges = ordered_sigma_edges(mesh)?;
        if count == 0 || count > edges.len() {
            return Err(Error::InvalidParameter(format!(
                "panel count must be in 1..={}, got {count}",
                edges.len()
            )));
        }
        let mut panels = Vec::with_capacity(count);
        for p in 0..count {
            let (lo, hi) = (p * edges.len() / count, (p + 1) * edges.len() / count);
            panels.push(edges[lo..hi].to_vec());
        }
        Self::from_panels(mesh, panels)
    }

    fn from_panels(mesh: &Mesh, panels: Vec<Vec<usize>>) -> Result<Self> {
        let lengths: Vec<f64> = panels
            .iter()
            .map(|p| p.iter().map(|&e| mesh.edge_length(e)).sum())
            .collect();
        let mut h = DefaultHasher::new();
        mesh.n_vertices().hash(&mut h);
        mesh.boundary_edges().hash(&mut h);
        panels.hash(&mut h);
        Ok(Self {
            n_boundary_edges: mesh.boundary_edges().len(),
            panels,
            lengths,
            id: h.finish(),
        })
    }

    pub fn dim(&self) -> usize {
        self.panels.len()
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn panels_edges(&self) -> &[Vec<usize>] {
        &self.panels
    }

    /// Edge-wise values of `Σ_j c_j g_j`, indexed like [`Mesh::boundary_edges`].
    pub fn edge_values(&self, coeffs: &[f64]) -> Vec<f64> {
        assert_eq!(coeffs.len(), self.dim());
        let mut g = vec![0.0; self.n_boundary_edges];
        for ((panel, len), c) in self.panels.iter().zip(&self.lengths).zip(coeffs) {
            for &e in panel {
                g[e] = c / len.sqrt();
            }
        }
        g
    }

    /// `L²(Σ)` Gram matrix by edge-wise quadrature of the basis functions.
    pub fn gram(&self, mesh: &Mesh) -> DMatrix<f64> {
        let m = self.dim();
        let values: Vec<Vec<f64>> = (0..m)
            .map(|j| {
                let mut c = vec![0.0; m];
                c[j] = 1.0;
                self.edge_values(&c)
            })
            .collect();
        DMatrix::from_fn(m, m, |i, j| {
            (0..self.n_boundary_edges)
                .map(|e| values[i][e] * values[j][e] * mesh.edge_length(e))
                .sum()
        })
    }

    /// Load vectors `∫_Σ g_j φ_i`, one column per basis function.
    pub fn load_matrix(&self, mesh: &Mesh) -> Result<DMatrix<f64>> {
        let m = self.dim();
        let mut b = DMatrix::zeros(mesh.n_vertices(), m);
        for j in 0..m {
            let mut c = vec![0.0; m];
            c[j] = 1.0;
            let col = assemble_boundary_load(mesh, &self.edge_values(&c))?;
            b.column_mut(j).copy_from_slice(&col);
        }
        Ok(b)
    }
}

// Σ-edges in boundary-loop order, rotated to start at the beginning of a Σ run.
fn ordered_sigma_edges(mesh: &Mesh) -> Result<Vec<usize>> {
    let flags = mesh.sigma_flags();
    let ne = flags.len();
    if !flags.iter().any(|&f| f) {
        return Err(Error::EmptySelection("measurement boundary has no edges".into()));
    }
    let start = (0..ne).find(|&e| flags[e] && !flags[(e + ne - 1) % ne]).unwrap_or(0);
    Ok((0..ne).map(|i| (start + i) % ne).filter(|&e| flags[e]).collect())
}

/// Per-edge orthonormal basis of `L²(Σ)`.
pub fn boundary_basis(mesh: &Mesh) -> Result<BoundaryBasis> {
    BoundaryBasis::per_edge(mesh)
}

/// Dense symmetric operator on a boundary basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SymOp {
    pub label: String,
    pub k: f64,
    pub basis_id: u64,
    pub matrix: DMatrix<f64>,
}

impl SymOp {
    /// Checks the relative asymmetry against [`SYMMETRY_TOL`] and symmetrizes.
    pub fn new(label: impl Into<String>, k: f64, basis_id: u64, matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                got: matrix.ncols(),
            });
        }
        let defect = symmetry_defect(&matrix);
        if defect > SYMMETRY_TOL {
            return Err(Error::NotSymmetric { defect });
        }
        Ok(Self {
            label: label.into(),
            k,
            basis_id,
            matrix: symmetrize(&matrix),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn check_same_basis(&self, other: &SymOp) -> Result<()> {
        if self.basis_id != other.basis_id {
            return Err(Error::BasisMismatch {
                left: self.basis_id,
                right: other.basis_id,
            });
        }
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(())
    }

    /// `a·self + b·other`.
    pub fn lin_comb(&self, a: f64, other: &SymOp, b: f64, label: impl Into<String>) -> Result<SymOp> {
        self.check_same_basis(other)?;
        Ok(SymOp {
            label: label.into(),
            k: self.k,
            basis_id: self.basis_id,
            matrix: &self.matrix * a + &other.matrix * b,
        })
    }

    pub fn quad(&self, g: &DVector<f64>) -> f64 {
        g.dot(&(&self.matrix * g))
    }
}

/// Helmholtz solutions for every basis function of Σ, sharing one factorization.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    mesh: Mesh,
    k: f64,
    basis_id: u64,
    system: HelmholtzSystem,
    loads: DMatrix<f64>,
    solutions: DMatrix<f64>,
}

impl ForwardModel {
    pub fn new(mesh: &Mesh, q: &Coefficient, k: f64, basis: &BoundaryBasis) -> Result<Self> {
        let system = HelmholtzSystem::new(mesh, q, k)?;
        let loads = basis.load_matrix(mesh)?;
        let solved: Vec<Result<Vec<f64>>> = {
            use rayon::prelude::*;
            (0..loads.ncols())
                .into_par_iter()
                .map(|j| system.solve_load(loads.column(j).as_slice()).map(|u| u.0))
                .collect()
        };
        let mut solutions = DMatrix::zeros(mesh.n_vertices(), loads.ncols());
        for (j, col) in solved.into_iter().enumerate() {
            solutions.column_mut(j).copy_from_slice(&col?);
        }
        Ok(Self {
            mesh: mesh.clone(),
            k,
            basis_id: basis.id(),
            system,
            loads,
            solutions,
        })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn basis_id(&self) -> u64 {
        self.basis_id
    }

    pub fn dim(&self) -> usize {
        self.loads.ncols()
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn system(&self) -> &HelmholtzSystem {
        &self.system
    }

    /// Nodal solutions `u^(g_j)`, one column per basis function.
    pub fn solutions(&self) -> &DMatrix<f64> {
        &self.solutions
    }

    pub fn loads(&self) -> &DMatrix<f64> {
        &self.loads
    }

    /// Nodal solution for basis coefficients `g`.
    pub fn field(&self, g: &DVector<f64>) -> DVector<f64> {
        &self.solutions * g
    }

    /// `Λ_ij = ∫_Σ g_i u^(g_j) ds`, using exact edge quadrature of the P1 trace.
    pub fn ntd(&self, label: impl Into<String>) -> Result<SymOp> {
        SymOp::new(label, self.k, self.basis_id, self.loads.transpose() * &self.solutions)
    }

    /// `G_ij = ∫ w u^(g_i) u^(g_j)` for a piecewise-constant weight.
    pub fn weighted_gram(&self, weight: &Coefficient, label: impl Into<String>) -> Result<SymOp> {
        let tris = weight
            .values()
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(t, &w)| (t, w));
        let g = gram_on_triangles(&self.mesh, &self.solutions, tris);
        SymOp::new(label, self.k, self.basis_id, g)
    }

    /// `∫_R u^(g_i) u^(g_j) dx`.
    pub fn region_gram(&self, region: &Region) -> Result<SymOp> {
        if region.is_empty() {
            return Err(Error::EmptySelection("region has no triangles".into()));
        }
        let g = gram_on_triangles(&self.mesh, &self.solutions, region.triangles().map(|t| (t, 1.0)));
        SymOp::new("gram", self.k, self.basis_id, g)
    }

    /// `T_B = k² ∫_B u_1^(g_i) u_1^(g_j)`; meaningful when the model was built with `q ≡ 1`.
    pub fn tb(&self, region: &Region) -> Result<SymOp> {
        let mut g = self.region_gram(region)?;
        g.matrix *= self.k * self.k;
        g.label = "T_B".into();
        Ok(g)
    }
}

// Uᵀ W_R U with W_R the P1 mass matrix weighted on the given triangles.
fn gram_on_triangles<I>(mesh: &Mesh, u: &DMatrix<f64>, tris: I) -> DMatrix<f64>
where
    I: Iterator<Item = (usize, f64)>,
{
    let m = u.ncols();
    let mut local: HashMap<usize, usize> = HashMap::new();
    let mut nodes: Vec<usize> = Vec::new();
    let mut elems: Vec<([usize; 3], f64)> = Vec::new();
    for (t, w) in tris {
        let tri = mesh.triangles()[t];
        let mut loc = [0; 3];
        for (a, &v) in tri.iter().enumerate() {
            loc[a] = *local.entry(v).or_insert_with(|| {
                nodes.push(v);
                nodes.len() - 1
            });
        }
        elems.push((loc, w * mesh.triangle_area(t) / 12.0));
    }
    // Node-major layout: column r holds the solution values at node r.
    let ut = DMatrix::from_fn(m, nodes.len(), |c, r| u[(nodes[r], c)]);
    let mut y = DMatrix::zeros(m, nodes.len());
    for (loc, c) in &elems {
        for a in 0..3 {
            for b in 0..3 {
                let coef = if a == b { 2.0 * c } else { *c };
                for i in 0..m {
                    y[(i, loc[a])] += coef * ut[(i, loc[b])];
                }
            }
        }
    }
    ut * y.transpose()
}

/// Discrete `Λ(q)`.
pub fn ntd_matrix(mesh: &Mesh, q: &Coefficient, k: f64, basis: &BoundaryBasis) -> Result<SymOp> {
    ForwardModel::new(mesh, q, k, basis)?.ntd("Lambda(q)")
}

/// `T_B` with background `q ≡ 1`.
pub fn tb_matrix(mesh: &Mesh, region: &Region, k: f64, basis: &BoundaryBasis) -> Result<SymOp> {
    ForwardModel::new(mesh, &Coefficient::constant(mesh, 1.0), k, basis)?.tb(region)
}

/// Gram matrix of `g ↦ u^(g)|_R`.
pub fn region_gram(mesh: &Mesh, q: &Coefficient, k: f64, basis: &BoundaryBasis, region: &Region) -> Result<SymOp> {
    ForwardModel::new(mesh, q, k, basis)?.region_gram(region)
}

/// The first `m` coordinate vectors of a `dim`-dimensional basis.
pub fn first_basis_vectors(dim: usize, m: usize) -> Result<DMatrix<f64>> {
    if m > dim {
        return Err(Error::InvalidParameter(format!("subspace dimension {m} exceeds basis dimension {dim}")));
    }
    Ok(DMatrix::from_fn(dim, m, |r, c| if r == c { 1.0 } else { 0.0 }))
}

/// `m` orthonormal vectors drawn from a seeded Gaussian-like distribution.
pub fn random_orthonormal(dim: usize, m: usize, seed: u64) -> Result<DMatrix<f64>> {
    if m > dim {
        return Err(Error::InvalidParameter(format!("subspace dimension {m} exceeds basis dimension {dim}")));
    }
    if m == 0 {
        return Ok(DMatrix::zeros(dim, 0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(dim, m, |_, _| rng.random::<f64>() - 0.5);
    Ok(a.qr().q().columns(0, m).into_owned())
}

/// Orthonormal basis of `span(V)`; errors if `V` is rank deficient.
fn orthonormal_span(v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if v.ncols() == 0 {
        return Ok(DMatrix::zeros(v.nrows(), 0));
    }
    let svd = v.clone().svd(true, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax) {
        return Err(Error::RankDeficient);
    }
    Ok(svd.u.expect("requested"))
}

#[derive(Debug, Clone)]
pub struct LocalizedPotential {
    /// Unit-norm basis coefficients, orthogonal to `V`.
    pub g: DVector<f64>,
    /// Attained Rayleigh quotient `gᵀG_B g / gᵀ(G_D + βP_V + εI) g`.
    pub ratio: f64,
    /// `∫_B |u^(g)|²`.
    pub energy_b: f64,
    /// `∫_D |u^(g)|²`.
    pub energy_d: f64,
    pub beta: f64,
    pub epsilon: f64,
}

/// Boundary data in `V^⊥` maximizing the energy on `B` relative to the energy on `D`.
///
/// `d_region = None` stands for `D = ∅`.
pub fn localized_potential(
    model: &ForwardModel,
    b_region: &Region,
    d_region: Option<&Region>,
    v: &DMatrix<f64>,
) -> Result<LocalizedPotential> {
    let dim = model.dim();
    if v.nrows() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: v.nrows(),
        });
    }
    if v.ncols() >= dim {
        return Err(Error::Precondition("subspace V must have smaller dimension than the basis".into()));
    }
    let outside = match d_region {
        Some(d) => b_region.flags().iter().zip(d.flags()).any(|(b, d)| *b && !*d),
        None => !b_region.is_empty(),
    };
    if !outside {
        return Err(Error::Precondition("B \\ D must have positive area".into()));
    }
    let q = orthonormal_span(v)?;
    let gb = model.region_gram(b_region)?.matrix;
    let gd = match d_region {
        Some(d) if !d.is_empty() => model.region_gram(d)?.matrix,
        _ => DMatrix::zeros(dim, dim),
    };
    let pv = &q * q.transpose();
    let beta = if q.ncols() > 0 { gd.trace() / q.ncols() as f64 } else { 0.0 };
    let base = &gd + &pv * beta;
    let mut eps = 1e-10 * base.trace() / dim as f64;
    if !(eps > 0.0) {
        eps = 1e-10 * gb.trace() / dim as f64;
    }
    let rhs = &base + DMatrix::identity(dim, dim) * eps;
    let (_, vecs) = generalized_sym_eig(&gb, &rhs).map_err(|_| Error::Precondition("pencil breakdown".into()))?;
    let mut g = vecs.column(0).into_owned();
    g -= &pv * &g;
    g -= &pv * &g;
    let norm = g.norm();
    if !(norm > 0.0) {
        return Err(Error::Precondition("pencil breakdown: maximizer lies in V".into()));
    }
    g /= norm;
    let energy_b = g.dot(&(&gb * &g));
    let energy_d = g.dot(&(&gd * &g));
    let ratio = energy_b / g.dot(&(&rhs * &g));
    Ok(LocalizedPotential {
        g,
        ratio,
        energy_b,
        energy_d,
        beta,
        epsilon: eps,
    })
}

/// `∫_R |u|²` by element-wise quadrature of a nodal field (independent of the Gram route).
pub fn field_energy(mesh: &Mesh, u: &[f64], region: &Region) -> f64 {
    region
        .triangles()
        .map(|t| {
            let [a, b, c] = mesh.triangles()[t];
            let (ua, ub, uc) = (u[a], u[b], u[c]);
            mesh.triangle_area(t) / 6.0 * (ua * ua + ub * ub + uc * uc + ua * ub + ub * uc + uc * ua)
        })
        .sum()
}

/// Applies `Λ` to many coefficient vectors at once (columns of `g`).
pub fn apply_columns(op: &SymOp, g: &DMatrix<f64>) -> DMatrix<f64> {
    map_columns(g, |c| (&op.matrix * DVector::from_column_slice(c)).as_slice().to_vec())
}
