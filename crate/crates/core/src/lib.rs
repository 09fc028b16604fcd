//! Block compressive sensing (BCS) for single-pixel imaging.
//!
//! The crate covers the measurement side of the pipeline: binary block
//! sensing matrices and their block-diagonal expansion, simulated
//! single-pixel acquisition with detector calibration, a total-variation
//! reconstruction baseline, image quality metrics and dataset handling.
//! The learned reconstructor lives in `bcs-unet`.

pub mod acquisition;
pub mod container;
pub mod data;
pub mod error;
pub mod image;
pub mod metrics;
pub mod sensing;
pub mod tv;

pub use error::{Error, Result};
pub use image::ImagePlane;
pub use sensing::{BlockMatrix, Fingerprint, MeasurementTensor, Ratio, SamplingConfig};
