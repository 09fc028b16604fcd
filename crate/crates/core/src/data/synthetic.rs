//! Procedural grayscale scenes for training and testing without external
//! datasets: sparse bright strokes on a dark field (handwriting-like), and
//! overlapping flat shapes on a smooth background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mix_seed;
use crate::image::ImagePlane;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    Strokes,
    Shapes,
}

impl SceneKind {
    pub fn name(self) -> &'static str {
        match self {
            SceneKind::Strokes => "strokes",
            SceneKind::Shapes => "shapes",
        }
    }
}

pub fn scene(kind: SceneKind, size: usize, seed: u64) -> ImagePlane {
    match kind {
        SceneKind::Strokes => stroke_scene(size, seed),
        SceneKind::Shapes => shape_scene(size, seed),
    }
}

/// `count` scenes with per-item seeds derived from `seed`.
pub fn corpus(kind: SceneKind, count: usize, size: usize, seed: u64) -> Vec<ImagePlane> {
    (0..count as u64).map(|i| scene(kind, size, mix_seed(seed ^ mix_seed(i)))).collect()
}

fn segment_distance(px: f64, py: f64, a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len_sq = dx * dx + dy * dy;
    let t = if len_sq > 0.0 { (((px - a.0) * dx + (py - a.1) * dy) / len_sq).clamp(0.0, 1.0) } else { 0.0 };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((px - qx).powi(2) + (py - qy).powi(2)).sqrt()
}

/// Two to four thick anti-aliased polyline strokes, intensity 0.75..1, on a
/// background below 0.08.
pub fn stroke_scene(size: usize, seed: u64) -> ImagePlane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64;
    let background = rng.random_range(0.0..0.08);
    let mut px = vec![background; size * size];
    let strokes = rng.random_range(2..=4);
    for _ in 0..strokes {
        let width = rng.random_range(s / 20.0..s / 9.0);
        let level = rng.random_range(0.75..1.0);
        let points = rng.random_range(2..=4);
        let margin = 0.15 * s;
        let pts: Vec<(f64, f64)> = (0..points)
            .map(|_| (rng.random_range(margin..s - margin), rng.random_range(margin..s - margin)))
            .collect();
        for r in 0..size {
            for c in 0..size {
                let (x, y) = (c as f64 + 0.5, r as f64 + 0.5);
                let d = pts
                    .windows(2)
                    .map(|w| segment_distance(x, y, w[0], w[1]))
                    .fold(f64::INFINITY, f64::min);
                let coverage = (width / 2.0 - d + 0.5).clamp(0.0, 1.0);
                let v = background + (level - background) * coverage;
                let p = &mut px[r * size + c];
                *p = p.max(v);
            }
        }
    }
    ImagePlane::from_clamped(size, size, px).expect("square scene")
}

/// Three to six rectangles and ellipses with random flat intensities over a
/// linear gradient.
pub fn shape_scene(size: usize, seed: u64) -> ImagePlane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64;
    let base = rng.random_range(0.1..0.5);
    let gx = rng.random_range(-0.3..0.3) / s;
    let gy = rng.random_range(-0.3..0.3) / s;
    let mut px: Vec<f64> = (0..size * size)
        .map(|i| base + gx * (i % size) as f64 + gy * (i / size) as f64)
        .collect();
    let shapes = rng.random_range(3..=6);
    for _ in 0..shapes {
        let level = rng.random_range(0.0..1.0);
        let cx = rng.random_range(0.0..s);
        let cy = rng.random_range(0.0..s);
        let rx = rng.random_range(s / 12.0..s / 3.0);
        let ry = rng.random_range(s / 12.0..s / 3.0);
        let ellipse = rng.random_bool(0.5);
        for r in 0..size {
            for c in 0..size {
                let dx = (c as f64 + 0.5 - cx) / rx;
                let dy = (r as f64 + 0.5 - cy) / ry;
                let inside = if ellipse { dx * dx + dy * dy <= 1.0 } else { dx.abs() <= 1.0 && dy.abs() <= 1.0 };
                if inside {
                    px[r * size + c] = level;
                }
            }
        }
    }
    ImagePlane::from_clamped(size, size, px).expect("square scene")
}
