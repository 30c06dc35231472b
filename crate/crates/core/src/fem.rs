//! P1 finite elements for `(Δ + k² q) u = 0` with Neumann data on the measurement boundary.
//!
//! The weak form `∫ ∇u·∇v − k² q u v = ∫_Σ g v` is assembled as `(S − k² M_q) u = b`.

use crate::error::{Error, Result};
use crate::mesh::{Mesh, Point, Region};
use crate::sparse::{norm2, BandedLdlt, SparseSym};

/// Piecewise-constant coefficient, one value per triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    values: Vec<f64>,
}

impl Coefficient {
    pub fn new(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_triangles() {
            return Err(Error::DimensionMismatch {
                expected: mesh.n_triangles(),
                got: values.len(),
            });
        }
        if let Some(t) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("coefficient on triangle {t} is not finite")));
        }
        Ok(Self { values })
    }

    pub fn constant(mesh: &Mesh, value: f64) -> Self {
        Self {
            values: vec![value; mesh.n_triangles()],
        }
    }

    /// Evaluates `f` at every triangle barycenter.
    pub fn from_fn<F: Fn(Point) -> f64>(mesh: &Mesh, f: F) -> Result<Self> {
        Self::new(mesh, (0..mesh.n_triangles()).map(|t| f(mesh.barycenter(t))).collect())
    }

    pub fn indicator(region: &Region) -> Self {
        Self {
            values: region.flags().iter().map(|&f| if f { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Copy with `value` on the triangles of `region`.
    pub fn with_region(&self, region: &Region, value: f64) -> Self {
        let mut out = self.clone();
        for t in region.triangles() {
            out.values[t] = value;
        }
        out
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Triangle-wise `self <= other`.
    pub fn le(&self, other: &Coefficient) -> bool {
        self.values.len() == other.values.len() && self.values.iter().zip(&other.values).all(|(a, b)| a <= b)
    }

    pub fn sub(&self, other: &Coefficient) -> Coefficient {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &Coefficient) -> Coefficient {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, s: f64) -> Coefficient {
        Coefficient {
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Coefficient {
        Coefficient {
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    fn zip_with<F: Fn(f64, f64) -> f64>(&self, other: &Coefficient, f: F) -> Coefficient {
        assert_eq!(self.values.len(), other.values.len());
        Coefficient {
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

/// P1 solution, one value per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField(pub Vec<f64>);

impl NodalField {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

// Gradients of the three barycentric hat functions on a triangle, scaled by 2*area.
fn hat_gradients(p: [Point; 3]) -> [[f64; 2]; 3] {
    let mut g = [[0.0; 2]; 3];
    for a in 0..3 {
        let (b, c) = (p[(a + 1) % 3], p[(a + 2) % 3]);
        g[a] = [b[1] - c[1], c[0] - b[0]];
    }
    g
}

fn corners(mesh: &Mesh, t: usize) -> [Point; 3] {
    let tri = mesh.triangles()[t];
    let v = mesh.vertices();
    [v[tri[0]], v[tri[1]], v[tri[2]]]
}

/// `S_ij = ∫ ∇φ_i·∇φ_j`.
pub fn assemble_stiffness(mesh: &Mesh) -> Result<SparseSym> {
    let mut trip = Vec::with_capacity(9 * mesh.n_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let area = mesh.triangle_area(t);
        if area <= 0.0 {
            return Err(Error::DegenerateTriangle { index: t, area });
        }
        let g = hat_gradients(corners(mesh, t));
        for a in 0..3 {
            for b in a..3 {
                let v = (g[a][0] * g[b][0] + g[a][1] * g[b][1]) / (4.0 * area);
                trip.push((tri[a], tri[b], v));
            }
        }
    }
    Ok(SparseSym::from_triplets(mesh.n_vertices(), &trip))
}

/// `M_ij = ∫ w φ_i φ_j` with the exact P1 element matrix `area/12 · [2 1 1; 1 2 1; 1 1 2]`.
pub fn assemble_weighted_mass(mesh: &Mesh, w: &Coefficient) -> Result<SparseSym> {
    if w.len() != mesh.n_triangles() {
        return Err(Error::DimensionMismatch {
            expected: mesh.n_triangles(),
            got: w.len(),
        });
    }
    let mut trip = Vec::with_capacity(6 * mesh.n_triangles());
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let wt = w.values()[t];
        if wt == 0.0 {
            continue;
        }
        let c = wt * mesh.triangle_area(t) / 12.0;
        for a in 0..3 {
            for b in a..3 {
                trip.push((tri[a], tri[b], if a == b { 2.0 * c } else { c }));
            }
        }
    }
    if trip.is_empty() {
        return Ok(SparseSym::zeros(mesh.n_vertices()));
    }
    Ok(SparseSym::from_triplets(mesh.n_vertices(), &trip))
}

pub fn assemble_mass(mesh: &Mesh) -> Result<SparseSym> {
    assemble_weighted_mass(mesh, &Coefficient::constant(mesh, 1.0))
}

/// `b_i = ∫_Σ g φ_i ds` for `g` constant on each boundary edge (indexed like
/// [`Mesh::boundary_edges`]). Nonzero data on an edge outside Σ is an error.
pub fn assemble_boundary_load(mesh: &Mesh, g: &[f64]) -> Result<Vec<f64>> {
    let edges = mesh.boundary_edges();
    if g.len() != edges.len() {
        return Err(Error::DimensionMismatch {
            expected: edges.len(),
            got: g.len(),
        });
    }
    let mut b = vec![0.0; mesh.n_vertices()];
    for (e, (&[p, q], &ge)) in edges.iter().zip(g).enumerate() {
        if ge == 0.0 {
            continue;
        }
        if !mesh.sigma_flags()[e] {
            return Err(Error::Precondition(format!(
                "boundary data given on edge {e}, which is not part of the measurement boundary"
            )));
        }
        let half = 0.5 * ge * mesh.edge_length(e);
        b[p] += half;
        b[q] += half;
    }
    Ok(b)
}

/// Factored Helmholtz system `A = S − k² M_q`, reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct HelmholtzSystem {
    k: f64,
    stiffness: SparseSym,
    mass_q: SparseSym,
    matrix: SparseSym,
    factor: BandedLdlt,
}

impl HelmholtzSystem {
    pub fn new(mesh: &Mesh, q: &Coefficient, k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidParameter(format!("frequency must be positive, got {k}")));
        }
        let stiffness = assemble_stiffness(mesh)?;
        let mass_q = assemble_weighted_mass(mesh, q)?;
        let matrix = stiffness.lin_comb(1.0, &mass_q, -k * k);
        let factor = matrix.factor()?;
        Ok(Self {
            k,
            stiffness,
            mass_q,
            matrix,
            factor,
        })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn stiffness(&self) -> &SparseSym {
        &self.stiffness
    }

    pub fn mass_q(&self) -> &SparseSym {
        &self.mass_q
    }

    pub fn matrix(&self) -> &SparseSym {
        &self.matrix
    }

    pub fn factor(&self) -> &BandedLdlt {
        &self.factor
    }

    /// Solves `A u = load` with one step of iterative refinement and checks the residual.
    pub fn solve_load(&self, load: &[f64]) -> Result<NodalField> {
        let mut u = self.factor.solve(load);
        let ax = self.matrix.matvec(&u);
        let mut r: Vec<f64> = load.iter().zip(&ax).map(|(b, a)| b - a).collect();
        self.factor.solve_in_place(&mut r);
        u.iter_mut().zip(&r).for_each(|(x, d)| *x += d);

        let bnorm = norm2(load);
        if bnorm == 0.0 {
            return Ok(NodalField(u));
        }
        let ax = self.matrix.matvec(&u);
        let res = load.iter().zip(&ax).map(|(b, a)| (b - a) * (b - a)).sum::<f64>().sqrt() / bnorm;
        if !(res <= 1e-10) {
            return Err(Error::Resonance {
                smallest_pivot: self.factor.smallest_pivot(),
                largest_pivot: self.factor.pivots().iter().map(|d| d.abs()).fold(0.0, f64::max),
                row: 0,
            });
        }
        Ok(NodalField(u))
    }

    pub fn solve(&self, mesh: &Mesh, g: &[f64]) -> Result<NodalField> {
        self.solve_load(&assemble_boundary_load(mesh, g)?)
    }
}

/// Solves the Neumann problem for piecewise-constant edge data `g`.
pub fn solve_helmholtz(mesh: &Mesh, q: &Coefficient, k: f64, g: &[f64]) -> Result<NodalField> {
    HelmholtzSystem::new(mesh, q, k)?.solve(mesh, g)
}
