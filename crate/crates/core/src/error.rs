use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit can report.
///
/// Variant names are stable: the CLI emits them as the `kind` field of its
/// machine-readable error document.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("hidden pre-activation of layer {layer} has zero norm")]
    NormalizationSingularity { layer: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("invalid class split: {0}")]
    InvalidSplit(String),
    #[error("not a permutation: {0}")]
    InvalidPermutation(String),
    #[error("invalid size: requested {requested}, available {available}")]
    InvalidSize { requested: usize, available: usize },

    #[error("non-finite parameters after step {step}")]
    NumericalDivergence { step: usize },
    #[error("slope undefined: {0}")]
    SlopeUndefined(String),
    #[error("log of non-positive value {value} at epoch {epoch}")]
    LogDomain { epoch: usize, value: f64 },
    #[error("incompatible checkpoint: {0}")]
    IncompatibleCheckpoint(String),

    #[error("margin must be positive, got {0}")]
    MarginNotPositive(f64),
    #[error("layer {0} has zero spectral norm")]
    DegenerateLayer(usize),
    #[error("sigma search failed: accuracy drop {drop} at the smallest radius exceeds target {target}")]
    SigmaSearchFailed { drop: f64, target: f64 },

    #[error("interval endpoints are complex (discriminant {0} < 0)")]
    ComplexEndpoints(f64),
    #[error("alpha {alpha} is outside the admissible interval {interval}")]
    InadmissibleAlpha { alpha: f64, interval: String },

    #[error("no consistent hypothesis among {draws} prior draws")]
    ZeroHits { draws: u64 },
    #[error("bound undefined: {0}")]
    BoundUndefined(String),
    #[error("rejection sampler exhausted after {attempts} attempts")]
    RejectionExhausted { attempts: u64 },

    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable identifier for the error family.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::NormalizationSingularity { .. } => "NormalizationSingularity",
            Error::InvalidDataset(_) => "InvalidDataset",
            Error::Format { .. } => "FormatError",
            Error::InvalidSplit(_) => "InvalidSplit",
            Error::InvalidPermutation(_) => "InvalidPermutation",
            Error::InvalidSize { .. } => "InvalidSize",
            Error::NumericalDivergence { .. } => "NumericalDivergence",
            Error::SlopeUndefined(_) => "SlopeUndefined",
            Error::LogDomain { .. } => "LogDomainError",
            Error::IncompatibleCheckpoint(_) => "IncompatibleCheckpoint",
            Error::MarginNotPositive(_) => "MarginNotPositive",
            Error::DegenerateLayer(_) => "DegenerateLayer",
            Error::SigmaSearchFailed { .. } => "SigmaSearchFailed",
            Error::ComplexEndpoints(_) => "ComplexEndpoints",
            Error::InadmissibleAlpha { .. } => "InadmissibleAlpha",
            Error::ZeroHits { .. } => "ZeroHits",
            Error::BoundUndefined(_) => "BoundUndefined",
            Error::RejectionExhausted { .. } => "RejectionExhausted",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Io { .. } => "Io",
            Error::Json(_) => "Json",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }
}
