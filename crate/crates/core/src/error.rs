//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violates a documented precondition.
    #[error("input domain: {0}")]
    InputDomain(String),

    /// Triangle data collapses below the degeneracy threshold.
    #[error("degenerate triangle: {0}")]
    DegenerateTriangle(String),

    /// A closed-form inversion has no solution in range.
    #[error("no solution: {0}")]
    NoSolution(String),

    /// Copy count and corner angle cannot close up to an integer genus.
    #[error("inconsistent configuration: {0}")]
    InconsistentConfiguration(String),

    /// An iterative solve exhausted its budget.
    #[error("solver failure: {message} (last residual {residual:.3e})")]
    SolverFailure { message: String, residual: f64 },

    /// The solved surface stopped being a vertical graph.
    #[error("graph violation: {0}")]
    GraphViolation(String),

    /// Mesh fails a quality or manifoldness requirement.
    #[error("mesh quality: {0}")]
    MeshQuality(String),

    /// The requested measurement does not apply to this input.
    #[error("not applicable: {0}")]
    NotApplicable(String),

    /// Reconstructed contour fails to close within tolerance.
    #[error("reconstruction inconsistency: {0}")]
    ReconstructionInconsistency(String),

    /// Height data too small to fix a sign.
    #[error("degenerate height: {0}")]
    DegenerateHeight(String),

    /// A free vertex left the prism during the constrained solve.
    #[error("embeddedness failure: {0}")]
    EmbeddednessFailure(String),

    /// Copies failed to sew into a watertight mesh.
    #[error("assembly: {0}")]
    Assembly(String),

    /// A winding or parity computation could not be resolved.
    #[error("indeterminate: {0}")]
    Indeterminate(String),

    /// No winding certificate on the outer parameter rectangle.
    #[error("no root certificate: {0}")]
    NoRootCertificate(String),

    /// Subdivision exhausted its depth budget.
    #[error("precision limit: {0}")]
    PrecisionLimit(String),

    /// Bracketing failed inside the admissible parameter range.
    #[error("no solution in range: {0}")]
    NoSolutionInRange(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// A file has the wrong header or malformed records.
    #[error("format: {0}")]
    Format(String),
}
