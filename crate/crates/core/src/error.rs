use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid geometry, scenario, grid or option values.
    #[error("configuration error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// A sub-array index outside `0..L`.
    #[error("sub-array index {index} out of range (array has {count} sub-arrays)")]
    SubarrayIndex { index: usize, count: usize },

    /// Vector or matrix sizes that do not agree with the geometry.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The recovered lifted matrix is identically zero.
    #[error("degenerate solution: recovered matrix is zero, no sources recoverable")]
    DegenerateSolution,

    /// A component of the leading right singular vector is too small to carry a phase.
    #[error("phase of sub-array {subarray} is undetermined (|alpha| = {magnitude:e})")]
    PhaseUndetermined { subarray: usize, magnitude: f64 },

    /// MUSIC smoothing requires identical uniform linear sub-arrays.
    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),

    /// Failure inside a dense factorization.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Estimated and true DOA lists of different lengths.
    #[error("length mismatch: {estimated} estimates vs {truth} true angles")]
    LengthMismatch { estimated: usize, truth: usize },

    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
