//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WgError {
    /// Ear clipping could not make progress; the cell polygon is degenerate
    /// or self-intersecting.
    #[error("cell polygon is degenerate or self-intersecting: {0}")]
    SelfIntersectingPolygon(String),

    /// An edge index was used with a cell it does not belong to.
    #[error("edge {edge} is not incident to cell {cell}")]
    EdgeNotIncident { cell: usize, edge: usize },

    /// Requested quadrature exactness exceeds the supported range.
    #[error("quadrature exactness {0} exceeds the supported maximum {1}")]
    UnsupportedDegree(usize, usize),

    /// A mass matrix failed its SPD factorization or its solve residual
    /// exceeded the 1e-12 relative contract.
    #[error("mass matrix is numerically singular ({0})")]
    SingularMass(String),

    /// Custom r below the k-2 floor required by the error equation.
    #[error("invalid r = {r}: the weak Laplacian degree must satisfy r >= k - 2 = {min}")]
    InvalidR { r: usize, min: usize },

    /// The assembled stiffness matrix is not positive definite on the free
    /// DOFs; signals an assembly or boundary-condition bug.
    #[error("global stiffness matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// The linear solve did not meet its residual contract.
    #[error(
        "linear solve failed to converge: residual {residual:.3e} after {iterations} iterations"
    )]
    NoConvergence { residual: f64, iterations: usize },

    /// A functional that requires v in V_h^0 received nonzero boundary DOFs.
    #[error("weak function has nonzero boundary DOFs (max |value| = {0:.3e})")]
    BoundaryNotZero(f64),

    /// Mesh construction or file parsing failed.
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    /// Study configuration rejected before execution.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, WgError>;
