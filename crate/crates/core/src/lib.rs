//! Finite-element Helmholtz Neumann problems on the unit square, discrete
//! Neumann-to-Dirichlet operators, and monotonicity-based scatterer detection.
//!
//! ```
//! use helm_mono::{Coefficient, Mesh, Tol};
//!
//! let mesh = Mesh::unit_square(16).unwrap();
//! let q = Coefficient::constant(&mesh, 1.0);
//! assert_eq!(helm_mono::d_of_q(&mesh, &q, 1.0, Tol::default()).unwrap(), 1);
//! ```

pub mod eigen;
pub mod error;
pub mod fem;
pub mod io;
pub mod mesh;
pub mod monotone;
pub mod ntd;
pub mod sparse;
pub mod spectral;

pub use error::{Error, Result};
pub use fem::{
    assemble_boundary_load, assemble_mass, assemble_stiffness, assemble_weighted_mass, solve_helmholtz,
    Coefficient, HelmholtzSystem, NodalField,
};
pub use mesh::{pixel_grid, rect_region, Mesh, Point, Rect, Region, Side};
pub use monotone::{
    identity_residual, inclusion_test, leq_d, monotonicity_check, reconstruct, AlphaPolicy, ComparisonResult,
    Contrast, IdentityReport, ReconstructOptions, ReconstructionResult, Verdict,
};
pub use ntd::{
    boundary_basis, localized_potential, ntd_matrix, region_gram, tb_matrix, BoundaryBasis, ForwardModel,
    LocalizedPotential, SymOp,
};
pub use sparse::{BandedLdlt, SparseSym};
pub use spectral::{
    count_k_eigs_above_one, count_negative, d_of_q, is_resonance, neumann_eigenvalues, EigenResult, Inertia,
    NeumannPencil, Tol,
};
