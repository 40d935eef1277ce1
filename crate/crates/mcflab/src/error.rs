//! Error type shared by every module.

use crate::mesh::NodeId;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A finite-difference stencil reached a node flagged `outside`.
    #[error("stencil touches an outside node at ({0}, {1})")]
    Stencil(usize, usize),

    /// A domain or run specification violates its invariants.
    #[error("invalid specification: {0}")]
    Specification(String),

    /// The grid cannot resolve the domain (empty or too-thin interior).
    #[error("grid too coarse: {0}")]
    Resolution(String),

    /// A scalar parameter is out of range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Newton iteration stagnated. Carries the last iterate so callers can
    /// inspect or dump partial results.
    #[error("solve did not converge at lambda = {lambda}: scaled residual {residual:.3e} after {iterations} iterations")]
    NonConvergence {
        lambda: f64,
        residual: f64,
        iterations: usize,
        iterate: Box<crate::mesh::ScalarField>,
    },

    /// A member of a lambda ladder failed.
    #[error("ladder solve failed at lambda = {lambda}: {source}")]
    Ladder {
        lambda: f64,
        #[source]
        source: Box<Error>,
    },

    /// A diagnostic was requested on nodes that are not regular points.
    #[error("precondition violated: {count} non-regular node(s), first at ({first:?})")]
    NonRegular { count: usize, first: NodeId },

    /// Fields passed together live on different grids.
    #[error("inputs on mismatched grids")]
    GridMismatch,

    /// Tangent-type classification could not run.
    #[error("classification failed: {0}")]
    Classification(String),

    /// An extraction produced an empty or meaningless result.
    #[error("degenerate output: {0}")]
    Degenerate(String),

    /// ODE integration or another numeric kernel failed.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
