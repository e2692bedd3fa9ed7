//! Error types shared by every stage.

use thiserror::Error;

/// Errors raised by the library.
///
/// `Input` covers malformed or inconsistent inputs (mapped to exit code 1 by
/// the command line tool); everything else is a stage failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("degenerate graph: {0}")]
    DegenerateGraph(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed edit site: {0}")]
    MalformedSite(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("stage {stage} failed: {message}")]
    Stage { stage: String, message: String },
}

impl Error {
    /// True when the failure stems from bad input rather than a stage.
    pub fn is_input(&self) -> bool {
        matches!(self, Error::Input(_) | Error::Config(_) | Error::Image(_) | Error::Json(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
