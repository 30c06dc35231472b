use thiserror::Error;

/// Errors raised by mesh construction, assembly, solvers and the monotonicity tests.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty selection: {0}")]
    EmptySelection(String),

    #[error("degenerate triangle {index} (signed area {area:e})")]
    DegenerateTriangle { index: usize, area: f64 },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    /// The system matrix is (numerically) singular: `k` is a discrete resonance.
    #[error("resonance: smallest pivot {smallest_pivot:e} (largest {largest_pivot:e}) at row {row}")]
    Resonance {
        smallest_pivot: f64,
        largest_pivot: f64,
        row: usize,
    },

    /// An eigenvalue sits within tolerance of a counting threshold.
    #[error("spectral ambiguity: eigenvalue near threshold {threshold} (tol {tol:e}): {detail}")]
    Ambiguity {
        threshold: f64,
        tol: f64,
        detail: String,
    },

    #[error("matrix is not symmetric (relative defect {defect:e})")]
    NotSymmetric { defect: f64 },

    #[error("operators live on different boundary bases ({left:#x} vs {right:#x})")]
    BasisMismatch { left: u64, right: u64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("subspace matrix is rank deficient")]
    RankDeficient,

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
