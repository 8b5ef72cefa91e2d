use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("statistics of an empty segment have no model")]
    EmptySegment,

    #[error("scatter eigenvalue {value:e} is negative beyond rounding tolerance {tolerance:e}")]
    NumericalCorruption { value: f64, tolerance: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("homogeneous coordinate W = {0:e} is not positive")]
    DegenerateTransform(f64),

    #[error("image is empty")]
    EmptyImage,

    #[error("IoU of two empty pixel sets is undefined")]
    EmptySets,

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("dataset contains no ground-truth segments")]
    NoGroundTruth,
}
