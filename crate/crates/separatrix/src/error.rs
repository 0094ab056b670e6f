//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("system is not bistable: {0}")]
    NotBistable(String),

    #[error("non-finite value encountered at node {node}: {context}")]
    NonFinite { node: usize, context: String },

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("regions overlap on the grid")]
    OverlappingRegions,

    #[error("region contains no grid nodes")]
    EmptyRegion,

    #[error("contour level {0} not attained by the field")]
    LevelNotAttained(f64),

    #[error("all contour branches were removed by the edge filter")]
    ContourFiltered,

    #[error("degenerate polyline: {0}")]
    DegeneratePolyline(String),

    #[error("no transitions observed; increase t_max or sigma")]
    NoTransitions,

    #[error("trajectory became non-finite at step {0}")]
    TrajectoryDiverged(usize),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
