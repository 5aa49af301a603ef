use thiserror::Error;

/// Errors produced by every stage of the acquisition and relighting pipeline.
#[derive(Debug, Error)]
pub enum RtiError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("synchronisation failed: {0}")]
    SyncFailure(String),

    #[error("degenerate image: {0}")]
    DegenerateImage(String),

    #[error("marker not found")]
    MarkerNotFound,

    #[error("ambiguous marker: {0}")]
    AmbiguousMarker(String),

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("degenerate homography: {0}")]
    DegenerateHomography(String),

    #[error("empty multi-light image collection: {0}")]
    EmptyMlic(String),

    #[error("light split failed: {0}")]
    SplitFailure(String),

    #[error("degenerate light configuration: {0}")]
    DegenerateLights(String),

    #[error("training diverged at epoch {epoch}, step {step}: {detail}")]
    Divergence {
        epoch: usize,
        step: usize,
        detail: String,
    },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("{context}: {source}")]
    Stage {
        context: String,
        #[source]
        source: Box<RtiError>,
    },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("WAV error: {0}")]
    Wav(#[from] hound::Error),
}

impl RtiError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        RtiError::InvalidArgument(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        RtiError::Format {
            offset,
            message: msg.into(),
        }
    }

    /// Wraps the error with a description of the stage (and optional frame or
    /// pixel context) that failed.
    pub fn context(self, context: impl Into<String>) -> Self {
        RtiError::Stage {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping any stage annotations.
    pub fn root(&self) -> &RtiError {
        match self {
            RtiError::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, RtiError>;
