//! Conforming triangulations of rectangular domains, the measurement boundary
//! and triangle-level regions.
//!
//! Boundary edges are stored as one counterclockwise loop: the domain lies to
//! the left of every edge, so the outward normal points to its right.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Axis-aligned box `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn contains(&self, p: Point) -> bool {
        p[0] >= self.x0 && p[0] <= self.x1 && p[1] >= self.y0 && p[1] <= self.y1
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }

    /// Euclidean distance between two boxes (zero when they touch or overlap).
    pub fn distance(&self, other: &Rect) -> f64 {
        let dx = (other.x0 - self.x1).max(self.x0 - other.x1).max(0.0);
        let dy = (other.y0 - self.y1).max(self.y0 - other.y1).max(0.0);
        dx.hypot(dy)
    }

    /// True when `self` lies inside the closure of `other`.
    pub fn is_inside(&self, other: &Rect) -> bool {
        self.x0 >= other.x0 && self.x1 <= other.x1 && self.y0 >= other.y0 && self.y1 <= other.y1
    }
}

/// Sides of a rectangular domain, used to describe the measurement boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Bottom,
    Right,
    Top,
    Left,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];

    /// Does a boundary-edge midpoint lie on this side of `bbox`?
    pub fn holds(&self, mid: Point, bbox: &Rect) -> bool {
        let tol = 1e-9 * (bbox.x1 - bbox.x0).max(bbox.y1 - bbox.y0);
        match self {
            Side::Bottom => (mid[1] - bbox.y0).abs() < tol,
            Side::Top => (mid[1] - bbox.y1).abs() < tol,
            Side::Left => (mid[0] - bbox.x0).abs() < tol,
            Side::Right => (mid[0] - bbox.x1).abs() < tol,
        }
    }

    pub fn parse(s: &str) -> Option<Side> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bottom" => Some(Side::Bottom),
            "right" => Some(Side::Right),
            "top" => Some(Side::Top),
            "left" => Some(Side::Left),
            _ => None,
        }
    }
}

/// A triangulated 2D domain with a marked measurement boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<[usize; 2]>,
    sigma: Vec<bool>,
}

impl Mesh {
    /// Builds a mesh from raw vertices and counterclockwise triangles,
    /// checking orientation, manifoldness and connectivity.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::InvalidMesh("no triangles".into()));
        }
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            let area = signed_area(&vertices, tri);
            if area <= 0.0 || !area.is_finite() {
                return Err(Error::DegenerateTriangle { index: t, area });
            }
        }

        // Directed half-edges; an edge is on the boundary iff its twin is absent.
        let mut half: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in triangles.iter().enumerate() {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                if half.insert((a, b), t).is_some() {
                    return Err(Error::InvalidMesh(format!("edge ({a},{b}) used twice with the same orientation")));
                }
            }
        }
        let mut next: HashMap<usize, usize> = HashMap::new();
        for &(a, b) in half.keys() {
            if !half.contains_key(&(b, a)) && next.insert(a, b).is_some() {
                return Err(Error::InvalidMesh(format!("boundary is not a simple curve at vertex {a}")));
            }
        }
        if next.is_empty() {
            return Err(Error::InvalidMesh("mesh has no boundary".into()));
        }

        // Chain into a single loop starting at the smallest boundary vertex.
        let start = *next.keys().min().expect("non-empty");
        let mut boundary_edges = Vec::with_capacity(next.len());
        let mut a = start;
        loop {
            let b = next[&a];
            boundary_edges.push([a, b]);
            a = b;
            if a == start {
                break;
            }
            if boundary_edges.len() > next.len() {
                return Err(Error::InvalidMesh("boundary loop does not close".into()));
            }
        }
        if boundary_edges.len() != next.len() {
            return Err(Error::InvalidMesh("boundary has more than one component".into()));
        }

        let mesh = Self {
            sigma: vec![false; boundary_edges.len()],
            vertices,
            triangles,
            boundary_edges,
        };
        if !mesh.is_edge_connected() {
            return Err(Error::InvalidMesh("triangles are not edge-connected".into()));
        }
        Ok(mesh)
    }

    /// Structured mesh of `[x0,x1] x [y0,y1]` with `nx * ny` cells, each cut into two
    /// triangles; the diagonal direction alternates in a checkerboard pattern.
    pub fn rectangle(domain: Rect, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidParameter("subdivision count must be at least 1".into()));
        }
        if !(domain.x1 > domain.x0 && domain.y1 > domain.y0) {
            return Err(Error::InvalidParameter("rectangle has no interior".into()));
        }
        let hx = (domain.x1 - domain.x0) / nx as f64;
        let hy = (domain.y1 - domain.y0) / ny as f64;
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                let x = if i == nx { domain.x1 } else { domain.x0 + i as f64 * hx };
                let y = if j == ny { domain.y1 } else { domain.y0 + j as f64 * hy };
                vertices.push([x, y]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
                if (i + j) % 2 == 0 {
                    triangles.push([v00, v10, v11]);
                    triangles.push([v00, v11, v01]);
                } else {
                    triangles.push([v00, v10, v01]);
                    triangles.push([v10, v11, v01]);
                }
            }
        }
        Self::new(vertices, triangles)
    }

    /// Criss-cross triangulation of the unit square with `n x n` cells.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::rectangle(Rect::new(0.0, 1.0, 0.0, 1.0), n, n)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    pub fn sigma_flags(&self) -> &[bool] {
        &self.sigma
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Indices of boundary edges belonging to the measurement boundary, in loop order.
    pub fn sigma_edges(&self) -> Vec<usize> {
        (0..self.boundary_edges.len()).filter(|&e| self.sigma[e]).collect()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        signed_area(&self.vertices, &self.triangles[t])
    }

    pub fn barycenter(&self, t: usize) -> Point {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        [(pa[0] + pb[0] + pc[0]) / 3.0, (pa[1] + pb[1] + pc[1]) / 3.0]
    }

    pub fn edge_length(&self, e: usize) -> f64 {
        let [a, b] = self.boundary_edges[e];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        (pb[0] - pa[0]).hypot(pb[1] - pa[1])
    }

    pub fn edge_midpoint(&self, e: usize) -> Point {
        let [a, b] = self.boundary_edges[e];
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0]
    }

    pub fn bounding_box(&self) -> Rect {
        let mut r = Rect::new(f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            r.x0 = r.x0.min(p[0]);
            r.x1 = r.x1.max(p[0]);
            r.y0 = r.y0.min(p[1]);
            r.y1 = r.y1.max(p[1]);
        }
        r
    }

    pub fn area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.triangle_area(t)).sum()
    }

    /// Flags every boundary edge whose midpoint satisfies `select`. Flags already set stay set,
    /// so the operation is idempotent.
    pub fn mark_sigma<F: Fn(Point) -> bool>(&self, select: F) -> Result<Mesh> {
        let mut out = self.clone();
        let mut hit = false;
        for e in 0..self.boundary_edges.len() {
            if select(self.edge_midpoint(e)) {
                out.sigma[e] = true;
                hit = true;
            }
        }
        if !hit {
            return Err(Error::EmptySelection("no boundary edge matches the sigma selector".into()));
        }
        Ok(out)
    }

    /// Marks the given sides of the bounding box as measurement boundary.
    pub fn mark_sides(&self, sides: &[Side]) -> Result<Mesh> {
        let bbox = self.bounding_box();
        self.mark_sigma(|m| sides.iter().any(|s| s.holds(m, &bbox)))
    }

    pub fn mark_all(&self) -> Result<Mesh> {
        self.mark_sigma(|_| true)
    }

    /// Writes vertices, triangles and boundary edges (with sigma flag) as plain text.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "vertices {}", self.vertices.len())?;
        for p in &self.vertices {
            writeln!(w, "{:.16e} {:.16e}", p[0], p[1])?;
        }
        writeln!(w, "triangles {}", self.triangles.len())?;
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        writeln!(w, "boundary_edges {}", self.boundary_edges.len())?;
        for (e, s) in self.boundary_edges.iter().zip(&self.sigma) {
            writeln!(w, "{} {} {}", e[0], e[1], u8::from(*s))?;
        }
        Ok(())
    }

    fn is_edge_connected(&self) -> bool {
        let mut owners: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                owners.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
        let mut adj = vec![Vec::new(); self.triangles.len()];
        for ts in owners.values() {
            if let [s, t] = ts[..] {
                adj[s].push(t);
                adj[t].push(s);
            }
        }
        let mut seen = vec![false; self.triangles.len()];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(t) = stack.pop() {
            for &s in &adj[t] {
                if !seen[s] {
                    seen[s] = true;
                    count += 1;
                    stack.push(s);
                }
            }
        }
        count == self.triangles.len()
    }
}

fn signed_area(vertices: &[Point], tri: &[usize; 3]) -> f64 {
    let (a, b, c) = (vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

/// A set of triangles (test regions, scatterer support, pixels).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    flags: Vec<bool>,
}

impl Region {
    pub fn from_flags(mesh: &Mesh, flags: Vec<bool>) -> Result<Self> {
        if flags.len() != mesh.n_triangles() {
            return Err(Error::DimensionMismatch {
                expected: mesh.n_triangles(),
                got: flags.len(),
            });
        }
        Ok(Self { flags })
    }

    /// Triangles whose barycenter lies in `rect`.
    pub fn rect(mesh: &Mesh, rect: Rect) -> Result<Self> {
        let flags: Vec<bool> = (0..mesh.n_triangles()).map(|t| rect.contains(mesh.barycenter(t))).collect();
        if !flags.iter().any(|&f| f) {
            return Err(Error::EmptySelection(format!("no triangle barycenter inside {rect:?}")));
        }
        Ok(Self { flags })
    }

    pub fn whole(mesh: &Mesh) -> Self {
        Self {
            flags: vec![true; mesh.n_triangles()],
        }
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn contains(&self, t: usize) -> bool {
        self.flags[t]
    }

    pub fn is_empty(&self) -> bool {
        !self.flags.iter().any(|&f| f)
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    pub fn triangles(&self) -> impl Iterator<Item = usize> + '_ {
        self.flags.iter().enumerate().filter(|(_, &f)| f).map(|(t, _)| t)
    }

    pub fn area(&self, mesh: &Mesh) -> f64 {
        self.triangles().map(|t| mesh.triangle_area(t)).sum()
    }

    pub fn union(&self, other: &Region) -> Region {
        Region {
            flags: self.flags.iter().zip(&other.flags).map(|(a, b)| *a || *b).collect(),
        }
    }

    pub fn complement(&self) -> Region {
        Region {
            flags: self.flags.iter().map(|f| !f).collect(),
        }
    }

    pub fn is_disjoint(&self, other: &Region) -> bool {
        !self.flags.iter().zip(&other.flags).any(|(a, b)| *a && *b)
    }

    pub fn is_subset(&self, other: &Region) -> bool {
        self.flags.iter().zip(&other.flags).all(|(a, b)| !*a || *b)
    }
}

/// Same as [`Region::rect`].
pub fn rect_region(mesh: &Mesh, rect: Rect) -> Result<Region> {
    Region::rect(mesh, rect)
}

/// Splits the bounding box into `nx x ny` pixels and returns each pixel with its region.
pub fn pixel_grid(mesh: &Mesh, nx: usize, ny: usize) -> Result<Vec<(Rect, Region)>> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidParameter("pixel grid needs at least one pixel per axis".into()));
    }
    let bb = mesh.bounding_box();
    let (wx, wy) = ((bb.x1 - bb.x0) / nx as f64, (bb.y1 - bb.y0) / ny as f64);
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let r = Rect::new(
                bb.x0 + i as f64 * wx,
                if i + 1 == nx { bb.x1 } else { bb.x0 + (i + 1) as f64 * wx },
                bb.y0 + j as f64 * wy,
                if j + 1 == ny { bb.y1 } else { bb.y0 + (j + 1) as f64 * wy },
            );
            out.push((r, Region::rect(mesh, r)?));
        }
    }
    Ok(out)
}
