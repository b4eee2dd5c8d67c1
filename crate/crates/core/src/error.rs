use thiserror::Error;

/// Errors surfaced by geometry, controllers and the scenario engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("boundary gradient is numerically singular (norm {0:.3e})")]
    GradientSingular(f64),
    #[error("query point coincides with the obstacle reference point")]
    ReferenceCoincident,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state lies inside an obstacle (h = {0:.6})")]
    InsideObstacle(f64),
    #[error("constraint row is degenerate: the input cannot affect the barrier")]
    DegenerateRow,
    #[error("reference direction degenerate (n·r = {0:.3e})")]
    DegenerateReference(f64),
    #[error("obstacle approaches faster than the speed limit ({required:.3} > {cap:.3})")]
    InfeasibleSafety { required: f64, cap: f64 },
    #[error("tangential component too small to redistribute")]
    TangentDegenerate,
    #[error("tangent projection collapsed (candidate parallel to the normal)")]
    ProjectionCollapse,
    #[error("all geodesic candidates collapsed")]
    AllCollapsed,
    #[error("problem is infeasible")]
    Infeasible,
    #[error("nominal controller queried at the target")]
    AtTarget,
    #[error("trajectory too short for the requested metric")]
    TooShort,
    #[error("operation unsupported for this robot model")]
    UnsupportedModel,
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
