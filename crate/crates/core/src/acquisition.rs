//! Simulated single-pixel acquisition and measurement calibration.
//!
//! The simulator projects each row of the block matrix onto its block of the
//! scene and integrates the transmitted light on one photodetector:
//!
//! ```text
//! v_m = gain * (φ_m · x) + dark_offset + ε_m,   ε_m ~ N(0, noise_sigma²)
//! ```
//!
//! Calibration maps dark-subtracted voltages onto the distribution the
//! reconstructors were trained on (images normalized to `[0, 1]`):
//!
//! ```text
//! ỹ_m = y_m / (b - a) - a / (b - a) * Σ_i φ_{m,i}
//! ```
//!
//! where `a` and `b` are the minimum and maximum per-pixel intensity. Since
//! `(x - a·1)/(b - a)` subtracts `a` from every pixel, the offset term uses
//! the all-ones vector, giving the row sum `Σ_i φ_{m,i}`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::sensing::{matrix_row_sums, sample_image, BlockMatrix, Fingerprint, MeasurementTensor};

/// Photodetector response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel {
    /// Volts per unit of integrated transmitted intensity.
    pub gain: f64,
    /// Constant reading with no light (volts).
    pub dark_offset: f64,
    /// Standard deviation of additive Gaussian read noise (volts).
    pub noise_sigma: f64,
}

impl DetectorModel {
    pub fn ideal() -> Self {
        Self { gain: 1.0, dark_offset: 0.0, noise_sigma: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain > 0.0 && self.gain.is_finite()) {
            return Err(Error::Argument(format!("detector gain must be positive, got {}", self.gain)));
        }
        if !(self.dark_offset >= 0.0 && self.dark_offset.is_finite()) {
            return Err(Error::Argument(format!("dark offset must be non-negative, got {}", self.dark_offset)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Argument(format!("noise sigma must be non-negative, got {}", self.noise_sigma)));
        }
        Ok(())
    }
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self::ideal()
    }
}

/// A transmissive target; values are transmittances in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetScene(pub ImagePlane);

impl TargetScene {
    pub fn new(transmittance: ImagePlane) -> Self {
        Self(transmittance)
    }

    pub fn image(&self) -> &ImagePlane {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.width()
    }

    pub fn height(&self) -> usize {
        self.0.height()
    }

    /// `(x - min x) / (max x - min x)`; a constant scene maps to all zeros.
    pub fn normalized(&self) -> ImagePlane {
        let (lo, hi) = self.0.min_max();
        let span = hi - lo;
        let pixels = self
            .0
            .pixels()
            .iter()
            .map(|&p| if span > 0.0 { ((p - lo) / span).clamp(0.0, 1.0) } else { 0.0 })
            .collect();
        ImagePlane::new(self.width(), self.height(), pixels).expect("normalized pixels are in range")
    }
}

/// Uncalibrated detector voltages in tensor order (block row, block column,
/// matrix row), plus the all-OFF and all-ON reference readings.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMeasurementSet {
    pub voltages: Vec<f64>,
    pub matrix_fingerprint: Fingerprint,
    pub dark_reading: f64,
    pub bright_reading: f64,
}

/// Minimum (`a`) and maximum (`b`) per-pixel intensity, in dark-subtracted
/// volts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationParams {
    pub a: f64,
    pub b: f64,
}

impl CalibrationParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let params = Self { a, b };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.b.is_finite()) {
            return Err(Error::Calibration(format!("non-finite range a={} b={}", self.a, self.b)));
        }
        if self.b <= self.a {
            return Err(Error::Calibration(format!("need b > a, got a={} b={}", self.a, self.b)));
        }
        Ok(())
    }
}

/// How the lower intensity bound `a` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DarkMode {
    /// Per-pixel share of the all-OFF reading.
    #[default]
    Measured,
    /// Complete darkness assumed: `a = 0`.
    AssumeZero,
}

/// Simulates a full acquisition of `scene` through `matrix`.
///
/// Noise draws come from a ChaCha8 stream seeded with `seed`, one per
/// voltage in tensor order, then the dark and bright readings.
pub fn acquire(
    scene: &TargetScene,
    matrix: &BlockMatrix,
    detector: &DetectorModel,
    seed: u64,
) -> Result<RawMeasurementSet> {
    detector.validate()?;
    let ideal = sample_image(matrix, scene.image())?;
    let mut noise = NoiseSource::new(detector.noise_sigma, seed)?;
    let voltages = ideal
        .values()
        .iter()
        .map(|&y| detector.gain * y + detector.dark_offset + noise.draw())
        .collect();
    let dark_reading = detector.dark_offset + noise.draw();
    let total: f64 = scene.image().pixels().iter().sum();
    let bright_reading = detector.gain * total + detector.dark_offset + noise.draw();
    Ok(RawMeasurementSet { voltages, matrix_fingerprint: matrix.fingerprint(), dark_reading, bright_reading })
}

/// `n` all-OFF frames from the simulator's detector.
pub fn simulate_dark_frames(detector: &DetectorModel, n: usize, seed: u64) -> Result<Vec<f64>> {
    detector.validate()?;
    let mut noise = NoiseSource::new(detector.noise_sigma, seed)?;
    Ok((0..n).map(|_| detector.dark_offset + noise.draw()).collect())
}

struct NoiseSource {
    dist: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl NoiseSource {
    fn new(sigma: f64, seed: u64) -> Result<Self> {
        let dist = if sigma > 0.0 {
            Some(Normal::new(0.0, sigma).map_err(|e| Error::Argument(e.to_string()))?)
        } else {
            None
        };
        Ok(Self { dist, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    fn draw(&mut self) -> f64 {
        match &self.dist {
            Some(d) => d.sample(&mut self.rng),
            None => 0.0,
        }
    }
}

/// Mean of all-OFF readings.
pub fn estimate_dark(readings: &[f64]) -> Result<f64> {
    if readings.is_empty() {
        return Err(Error::Argument("no dark readings supplied".into()));
    }
    Ok(readings.iter().sum::<f64>() / readings.len() as f64)
}

/// Per-pixel maximum intensity from an all-ON reading over an `m x n` image:
/// `b = a + (all_on - dark) / (m n)` with `a = dark / (m n)`.
pub fn estimate_bright(all_on_reading: f64, dark: f64, m: usize, n: usize) -> Result<f64> {
    let pixels = pixel_count(m, n)?;
    if !(all_on_reading > dark) {
        return Err(Error::Calibration(format!(
            "all-ON reading {all_on_reading} does not exceed dark level {dark}: no light"
        )));
    }
    Ok(dark / pixels + (all_on_reading - dark) / pixels)
}

fn pixel_count(m: usize, n: usize) -> Result<f64> {
    if m == 0 || n == 0 {
        return Err(Error::Argument(format!("image size {m}x{n} has no pixels")));
    }
    Ok((m * n) as f64)
}

/// `(a, b)` from the reference readings embedded in `raw`.
pub fn estimate_params(raw: &RawMeasurementSet, m: usize, n: usize, mode: DarkMode) -> Result<CalibrationParams> {
    let pixels = pixel_count(m, n)?;
    let b = estimate_bright(raw.bright_reading, raw.dark_reading, m, n)?;
    let params = match mode {
        DarkMode::Measured => CalibrationParams { a: raw.dark_reading / pixels, b },
        DarkMode::AssumeZero => CalibrationParams { a: 0.0, b: b - raw.dark_reading / pixels },
    };
    params.validate()?;
    Ok(params)
}

/// The closed-form transform on already dark-subtracted measurements.
pub fn calibrate_values(measurements: &[f64], params: &CalibrationParams, row_sums: &[f64]) -> Result<Vec<f64>> {
    params.validate()?;
    if measurements.len() != row_sums.len() {
        return Err(Error::Dimension(format!(
            "{} measurements but {} row sums",
            measurements.len(),
            row_sums.len()
        )));
    }
    let span = params.b - params.a;
    let scale = 1.0 / span;
    let offset = params.a / span;
    Ok(measurements.iter().zip(row_sums).map(|(&y, &s)| scale * y - offset * s).collect())
}

/// Dark-subtracts `raw`, applies the calibration transform and packs the
/// result into a `grid_h x grid_w x M_B` tensor bound to `matrix`.
pub fn calibrate(
    raw: &RawMeasurementSet,
    params: &CalibrationParams,
    matrix: &BlockMatrix,
    grid_h: usize,
    grid_w: usize,
) -> Result<MeasurementTensor> {
    params.validate()?;
    if raw.matrix_fingerprint != matrix.fingerprint() {
        return Err(Error::Provenance(format!(
            "raw measurements were acquired with matrix {} but calibration was given {}",
            raw.matrix_fingerprint,
            matrix.fingerprint()
        )));
    }
    let channels = matrix.rows();
    let expected = grid_h * grid_w * channels;
    if raw.voltages.len() != expected {
        return Err(Error::Dimension(format!(
            "{} voltages cannot fill a {grid_h}x{grid_w}x{channels} grid",
            raw.voltages.len()
        )));
    }
    let per_block: Vec<f64> = matrix_row_sums(matrix).into_iter().map(f64::from).collect();
    let row_sums: Vec<f64> = per_block.iter().copied().cycle().take(expected).collect();
    let measurements: Vec<f64> = raw.voltages.iter().map(|v| v - raw.dark_reading).collect();
    let values = calibrate_values(&measurements, params, &row_sums)?;
    MeasurementTensor::new(grid_h, grid_w, channels, values, matrix.fingerprint())
}

/// Side length of a square block grid holding `count` measurements of
/// `channels` each.
pub fn infer_square_grid(count: usize, channels: usize) -> Result<usize> {
    if channels == 0 || count % channels != 0 {
        return Err(Error::Dimension(format!("{count} values are not a whole number of {channels}-channel cells")));
    }
    let cells = count / channels;
    let side = (cells as f64).sqrt().round() as usize;
    if side * side != cells || side == 0 {
        return Err(Error::Dimension(format!("{cells} cells do not form a square grid")));
    }
    Ok(side)
}
