use std::io;

use thiserror::Error;

/// Errors produced across the sensing, acquisition and reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid sampling ratio: {0}")]
    InvalidRatio(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("image of {width}x{height} cannot be tiled into {block}x{block} blocks")]
    Tiling {
        width: usize,
        height: usize,
        block: usize,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("provenance error: {0}")]
    Provenance(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
