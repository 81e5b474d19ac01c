//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid shape: {reason}")]
    InvalidShape { reason: String },

    #[error("state count overflows usize for dims {dims:?}")]
    StateCountOverflow { dims: Vec<usize> },

    #[error("coordinate {coord} out of range on axis {axis} (size {size})")]
    CoordOutOfBounds {
        axis: usize,
        coord: usize,
        size: usize,
    },

    #[error("multi-index has {got} coordinates, shape has {expected} axes")]
    RankMismatch { expected: usize, got: usize },

    #[error("state id {state} out of range (state count {count})")]
    StateOutOfBounds { state: usize, count: usize },

    #[error("invalid grid spec: {reason}")]
    InvalidSpec { reason: String },

    #[error("invalid solver config: {reason}")]
    InvalidConfig { reason: String },

    #[error("cannot place {requested} obstacles+terminals with only {available} placeable cells")]
    InfeasiblePlacement { requested: usize, available: usize },

    #[error("state {state} is an obstacle")]
    ObstacleState { state: usize },

    #[error("dense model needs {required_bytes} bytes, cap is {cap_bytes}")]
    DenseCapExceeded { required_bytes: u64, cap_bytes: u64 },

    #[error("model with {states} states exceeds the supported maximum of {max}")]
    ModelTooLarge { states: usize, max: usize },

    #[error("exact evaluation supports at most {cap} states, got {states}")]
    ExactEvalCapExceeded { states: usize, cap: usize },

    #[error("evaluation system is singular")]
    SingularSystem,

    #[error("spec file parse error: {0}")]
    SpecParse(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for errors caused by a problem being too large to represent
    /// (as opposed to bad input or I/O failures).
    pub fn is_capacity(&self) -> bool {
        matches!(
            self,
            Error::StateCountOverflow { .. }
                | Error::InfeasiblePlacement { .. }
                | Error::DenseCapExceeded { .. }
                | Error::ModelTooLarge { .. }
                | Error::ExactEvalCapExceeded { .. }
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::SpecParse(..))
    }
}
