use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad or missing user-supplied configuration (paths, thresholds, schema).
    #[error("configuration error: {0}")]
    Config(String),

    #[error("configuration error at `{path}`: {message}")]
    ConfigField { path: String, message: String },

    #[error("no class has at least {min_count} annotations")]
    NoClassSurvives { min_count: usize },

    #[error("class `{class}` has {count} image(s); at least 2 are needed to stratify a split")]
    ClassTooSmall { class: String, count: usize },

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    Shape {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("attack objective became non-finite at epoch {epoch}")]
    NonFiniteObjective { epoch: usize },

    #[error("no eligible images: the classifier is wrong on every clean input")]
    NoEligibleImages,

    #[error("network has not been trained")]
    Untrained,

    #[error("missing prerequisite {artifact}; run `{producer}` first")]
    MissingPrerequisite {
        artifact: PathBuf,
        producer: &'static str,
    },

    #[error("unsupported artifact format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("plot error: {0}")]
    Plot(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the CLI's error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::ConfigField { .. } => "config",
            Error::NoClassSurvives { .. } => "no_class_survives",
            Error::ClassTooSmall { .. } => "class_too_small",
            Error::Shape { .. } => "shape_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Diverged { .. } => "diverged",
            Error::NonFiniteObjective { .. } => "non_finite_objective",
            Error::NoEligibleImages => "no_eligible_images",
            Error::Untrained => "untrained",
            Error::MissingPrerequisite { .. } => "missing_prerequisite",
            Error::Format { .. } => "format",
            Error::Io { .. } => "io",
            Error::Image { .. } => "image",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Plot(_) => "plot",
        }
    }
}
