use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinate {coord} = {value} lies outside the support")]
    OutOfSupport { coord: usize, value: f64 },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("operation not supported: {0}")]
    Unsupported(&'static str),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("cell {index} has zero measure")]
    ZeroMeasureCell { index: usize },
    #[error("cell {index} has measure {measure} < 1/n = {threshold}; partition is not permissible")]
    NotPermissible { index: usize, measure: f64, threshold: f64 },
    #[error("point is not contained in any cell of the partition")]
    Unlocated,
    #[error("malformed partition: {0}")]
    MalformedPartition(String),
    #[error("empty search interval [{lo}, {hi}]")]
    EmptyRange { lo: f64, hi: f64 },
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
