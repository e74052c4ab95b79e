use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("k = {k} out of range [1, {max}]")]
    KOutOfRange { k: usize, max: usize },

    #[error("empty sample: need n_P or n_Q >= 1")]
    EmptySample,

    #[error("pooled fit requires fully labeled target points; unlabeled targets go through the cover")]
    UnlabeledTarget,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("lower-bound family spec violates `{constraint}`")]
    LowerBoundConstraint { constraint: &'static str },

    #[error("labeled set too small: {have} points, adaptive classification needs at least n0 = {need}")]
    TooFewLabeled { have: usize, need: usize },

    #[error("label request failed at index {index}: {reason}")]
    Labeler { index: usize, reason: String },

    #[error("need at least {need} usable points, have {have}")]
    TooFewPoints { need: usize, have: usize },

    #[error("unknown family id `{id}`; available: {available}")]
    UnknownFamily { id: String, available: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("records file is missing required columns: {0}")]
    MissingColumns(String),

    #[error("csv parse error at line {line}: {reason}")]
    CsvParse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Whether the error reflects bad configuration rather than a runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::UnknownFamily { .. }
                | Error::Config(_)
                | Error::InvalidParam { .. }
                | Error::LowerBoundConstraint { .. }
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
