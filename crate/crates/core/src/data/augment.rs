use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::ImagePlane;

/// Ranges for random training-time augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    /// Brightness shift drawn uniformly from `[-delta, delta]`.
    pub brightness_delta: f64,
    /// Contrast factor range, applied about the image mean.
    pub contrast_range: (f64, f64),
    pub hflip_prob: f64,
    /// Rotation angle drawn uniformly from `[-deg, deg]`.
    pub rotation_degrees: f64,
    pub enabled: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            brightness_delta: 0.2,
            contrast_range: (0.8, 1.2),
            hflip_prob: 0.5,
            rotation_degrees: 10.0,
            enabled: true,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::default() }
    }
}

/// One concrete draw of augmentation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub brightness: f64,
    pub contrast: f64,
    pub hflip: bool,
    pub rotation_degrees: f64,
}

impl AugmentParams {
    pub fn identity() -> Self {
        Self { brightness: 0.0, contrast: 1.0, hflip: false, rotation_degrees: 0.0 }
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

pub fn sample_augment_params(config: &AugmentConfig, seed: u64) -> AugmentParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let brightness = uniform(&mut rng, -config.brightness_delta, config.brightness_delta);
    let contrast = uniform(&mut rng, config.contrast_range.0, config.contrast_range.1);
    let hflip = config.hflip_prob > 0.0 && rng.random_bool(config.hflip_prob.min(1.0));
    let rotation_degrees = uniform(&mut rng, -config.rotation_degrees, config.rotation_degrees);
    AugmentParams { brightness, contrast, hflip, rotation_degrees }
}

/// Random brightness, contrast, horizontal flip and small rotation; a pure
/// function of `(image, config, seed)`. Returns the input unchanged when
/// augmentation is disabled.
pub fn augment(image: &ImagePlane, config: &AugmentConfig, seed: u64) -> ImagePlane {
    if !config.enabled {
        return image.clone();
    }
    apply_augment(image, &sample_augment_params(config, seed))
}

/// Applies brightness, contrast about the mean, flip, then rotation with
/// edge-replicated bilinear sampling; clamps the result into `[0, 1]`.
/// Identity parameters leave the image bit-for-bit unchanged.
pub fn apply_augment(image: &ImagePlane, params: &AugmentParams) -> ImagePlane {
    let (w, h) = (image.width(), image.height());
    let mut px = image.pixels().to_vec();
    if params.brightness != 0.0 {
        px.iter_mut().for_each(|p| *p += params.brightness);
    }
    if params.contrast != 1.0 {
        let mean = px.iter().sum::<f64>() / px.len() as f64;
        px.iter_mut().for_each(|p| *p = (*p - mean) * params.contrast + mean);
    }
    if params.hflip {
        for row in px.chunks_exact_mut(w) {
            row.reverse();
        }
    }
    if params.rotation_degrees != 0.0 {
        px = rotate(&px, w, h, params.rotation_degrees.to_radians());
    }
    ImagePlane::from_clamped(w, h, px).expect("augmentation preserves dimensions")
}

/// Rotates about the image center by `angle` radians (counter-clockwise in
/// display coordinates).
fn rotate(src: &[f64], w: usize, h: usize, angle: f64) -> Vec<f64> {
    let (sin, cos) = angle.sin_cos();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let at = |r: isize, c: isize| {
        let r = r.clamp(0, h as isize - 1) as usize;
        let c = c.clamp(0, w as isize - 1) as usize;
        src[r * w + c]
    };
    let mut out = vec![0.0; w * h];
    for r in 0..h {
        for c in 0..w {
            let dx = c as f64 - cx;
            let dy = r as f64 - cy;
            // inverse mapping from output to source coordinates
            let sx = cos * dx - sin * dy + cx;
            let sy = sin * dx + cos * dy + cy;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let (x0, y0) = (x0 as isize, y0 as isize);
            let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
            let bottom = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
            out[r * w + c] = top * (1.0 - fy) + bottom * fy;
        }
    }
    out
}
