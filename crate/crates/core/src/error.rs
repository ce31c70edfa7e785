use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("shape mismatch: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("image too small: {width}x{height} is smaller than the {window}x{window} census window")]
    ImageTooSmall { width: usize, height: usize, window: usize },

    #[error("empty loss support")]
    EmptyLossSupport,

    #[error("empty evaluation support: {0}")]
    EmptySupport(&'static str),

    #[error("empty volume")]
    EmptyVolume,

    #[error("malformed {format} file {path}: {reason}")]
    Format {
        format: &'static str,
        path: PathBuf,
        reason: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {source}")]
    Codec {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn shape(left: impl std::fmt::Display, right: impl std::fmt::Display) -> Self {
        Error::ShapeMismatch {
            left: left.to_string(),
            right: right.to_string(),
        }
    }

    /// Short stable identifier, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidDimensions(_) => "invalid_dimensions",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::InvalidValue(_) => "invalid_value",
            Error::InvalidConfig(_) => "invalid_config",
            Error::ImageTooSmall { .. } => "image_too_small",
            Error::EmptyLossSupport => "empty_loss_support",
            Error::EmptySupport(_) => "empty_support",
            Error::EmptyVolume => "empty_volume",
            Error::Format { .. } => "format",
            Error::Io { .. } => "io",
            Error::Codec { .. } => "codec",
        }
    }
}
