use thiserror::Error;

use crate::geometry::Point2;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("could not place {count} trees after {attempts} attempts; density too high")]
    ForestTooDense { count: usize, attempts: usize },
    #[error("sensor pose ({}, {}) lies inside a tree", .0.x, .0.y)]
    PoseInsideTree(Point2),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),
    #[error("submap is already finalized")]
    ClosedSubmap,
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("descriptor dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("inconsistent sizes: {0}")]
    InconsistentSizes(String),
    #[error("normal equations singular beyond damping recovery")]
    SingularSystem,
    #[error("trajectory lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no path to goal")]
    NoPath,
    #[error("no frontiers left")]
    NoFrontiers,
    #[error("ground truth missing for submap {0}")]
    MissingGroundTruth(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable name used in CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::ForestTooDense { .. } => "ForestTooDense",
            Error::PoseInsideTree(_) => "PoseInsideTree",
            Error::DegenerateGeometry(_) => "DegenerateGeometry",
            Error::ClosedSubmap => "ClosedSubmap",
            Error::MalformedPayload(_) => "MalformedPayload",
            Error::DimensionMismatch(..) => "DimensionMismatch",
            Error::InconsistentSizes(_) => "InconsistentSizes",
            Error::SingularSystem => "SingularSystem",
            Error::LengthMismatch(..) => "LengthMismatch",
            Error::NoPath => "NoPath",
            Error::NoFrontiers => "NoFrontiers",
            Error::MissingGroundTruth(_) => "MissingGroundTruth",
            Error::Config(_) => "Config",
            Error::Parse(_) => "Parse",
            Error::Io(_) => "Io",
        }
    }
}
