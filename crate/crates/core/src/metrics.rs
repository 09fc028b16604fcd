//! PSNR and SSIM, and per-dataset evaluation reports.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::image::ImagePlane;

/// Reported PSNR ceiling; an exact match would otherwise be infinite.
pub const PSNR_CAP_DB: f64 = 100.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_same_shape(reference: &ImagePlane, test: &ImagePlane) -> Result<()> {
    if reference.width() != test.width() || reference.height() != test.height() {
        return Err(Error::Shape(format!(
            "image shapes differ: {}x{} vs {}x{}",
            reference.width(),
            reference.height(),
            test.width(),
            test.height()
        )));
    }
    Ok(())
}

pub fn mse(reference: &ImagePlane, test: &ImagePlane) -> Result<f64> {
    check_same_shape(reference, test)?;
    let sum: f64 = reference
        .pixels()
        .iter()
        .zip(test.pixels())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sum / reference.len() as f64)
}

/// `10 log10(1 / MSE)` for unit peak value. Returns `+inf` for identical
/// images; use [`cap_psnr`] before averaging.
pub fn psnr(reference: &ImagePlane, test: &ImagePlane) -> Result<f64> {
    let mse = mse(reference, test)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

pub fn cap_psnr(db: f64) -> f64 {
    db.min(PSNR_CAP_DB)
}

/// Normalized 1-D Gaussian taps for the SSIM window.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let center = (SSIM_WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - center;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    taps
}

/// Separable "valid" filtering with the Gaussian window.
fn filter_valid(src: &[f64], width: usize, height: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = width - SSIM_WINDOW + 1;
    let oh = height - SSIM_WINDOW + 1;
    let mut rows = vec![0.0; height * ow];
    for r in 0..height {
        let line = &src[r * width..(r + 1) * width];
        for c in 0..ow {
            rows[r * ow + c] = taps.iter().zip(&line[c..c + SSIM_WINDOW]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = taps.iter().enumerate().map(|(k, t)| t * rows[(r + k) * ow + c]).sum();
        }
    }
    out
}

/// Mean SSIM over all fully-contained 11x11 Gaussian windows (σ = 1.5,
/// K1 = 0.01, K2 = 0.03, L = 1).
pub fn ssim(reference: &ImagePlane, test: &ImagePlane) -> Result<f64> {
    check_same_shape(reference, test)?;
    let (w, h) = (reference.width(), reference.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::Shape(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}"
        )));
    }
    let taps = gaussian_window();
    let x = reference.pixels();
    let y = test.pixels();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mu_x = filter_valid(x, w, h, &taps);
    let mu_y = filter_valid(y, w, h, &taps);
    let e_xx = filter_valid(&xx, w, h, &taps);
    let e_yy = filter_valid(&yy, w, h, &taps);
    let e_xy = filter_valid(&xy, w, h, &taps);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let total: f64 = (0..mu_x.len())
        .map(|i| ssim_from_moments(mu_x[i], mu_y[i], e_xx[i], e_yy[i], e_xy[i], c1, c2))
        .sum();
    Ok(total / mu_x.len() as f64)
}

#[inline]
fn ssim_from_moments(mu_x: f64, mu_y: f64, e_xx: f64, e_yy: f64, e_xy: f64, c1: f64, c2: f64) -> f64 {
    let var_x = e_xx - mu_x * mu_x;
    let var_y = e_yy - mu_y * mu_y;
    let cov = e_xy - mu_x * mu_y;
    let num = (2.0 * (mu_x * mu_y) + c1) * (2.0 * cov + c2);
    let den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2);
    num / den
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageScore {
    pub image: String,
    /// Capped at [`PSNR_CAP_DB`].
    pub psnr_db: f64,
    pub ssim: f64,
}

/// Per-image scores and their arithmetic means for one method, dataset and
/// sampling ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub dataset: String,
    pub ratio: f64,
    pub scores: Vec<ImageScore>,
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
}

/// Scores every `(name, reference, reconstruction)` triple.
pub fn evaluate_set<'a, I>(pairs: I, method: &str, dataset: &str, ratio: f64) -> Result<EvalReport>
where
    I: IntoIterator<Item = (String, &'a ImagePlane, &'a ImagePlane)>,
{
    let scores = pairs
        .into_iter()
        .map(|(image, reference, recon)| {
            Ok(ImageScore {
                image,
                psnr_db: cap_psnr(psnr(reference, recon)?),
                ssim: ssim(reference, recon)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_scores(method, dataset, ratio, scores)
}

impl EvalReport {
    pub fn from_scores(method: &str, dataset: &str, ratio: f64, scores: Vec<ImageScore>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Argument("cannot evaluate an empty set".into()));
        }
        let n = scores.len() as f64;
        let mean_psnr_db = scores.iter().map(|s| s.psnr_db).sum::<f64>() / n;
        let mean_ssim = scores.iter().map(|s| s.ssim).sum::<f64>() / n;
        Ok(Self {
            method: method.to_string(),
            dataset: dataset.to_string(),
            ratio,
            scores,
            mean_psnr_db,
            mean_ssim,
        })
    }

    /// CSV with header `method,dataset,ratio,image,psnr_db,ssim`, one row per
    /// image and a final `mean` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,dataset,ratio,image,psnr_db,ssim\n");
        for s in &self.scores {
            let _ = writeln!(
                out,
                "{},{},{},{},{:.6},{:.6}",
                csv_field(&self.method),
                csv_field(&self.dataset),
                self.ratio,
                csv_field(&s.image),
                s.psnr_db,
                s.ssim
            );
        }
        let _ = writeln!(
            out,
            "{},{},{},mean,{:.6},{:.6}",
            csv_field(&self.method),
            csv_field(&self.dataset),
            self.ratio,
            self.mean_psnr_db,
            self.mean_ssim
        );
        out
    }

    /// Aligned summary with ratio (percent), PSNR and SSIM columns.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<12} {:<10} {:>8} {:>10} {:>8}", "Dataset", "Method", "Ratio", "PSNR", "SSIM");
        let _ = writeln!(
            out,
            "{:<12} {:<10} {:>8.2} {:>10.2} {:>8.4}",
            self.dataset,
            self.method,
            self.ratio * 100.0,
            self.mean_psnr_db,
            self.mean_ssim
        );
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
