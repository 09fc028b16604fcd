//! Grayscale image planes and PGM exchange.
//!
//! Pixels are stored row-major as `f64` in `[0, 1]`. PGM files map linearly
//! onto that range: a sample `v` with maximum value `maxval` becomes
//! `v / maxval`, and writing quantizes with `round(p * 255)`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A grayscale image with pixel values normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePlane {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl ImagePlane {
    /// Builds a plane from row-major pixels, rejecting values outside `[0, 1]`.
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension("image dimensions must be positive".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::Dimension(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Validation(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Self { width, height, pixels })
    }

    /// Builds a plane by clamping every value into `[0, 1]`.
    ///
    /// NaN is mapped to 0.
    pub fn from_clamped(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        let pixels = pixels
            .into_iter()
            .map(|p| if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) })
            .collect();
        Self::new(width, height, pixels)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                pixels.push(f(row, col));
            }
        }
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.pixels
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)))
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// Center crop to `width x height`. Odd margins leave the extra pixel on
    /// the bottom/right.
    pub fn crop_center(&self, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || width > self.width || height > self.height {
            return Err(Error::Dimension(format!(
                "cannot crop {}x{} to {width}x{height}",
                self.width, self.height
            )));
        }
        let top = (self.height - height) / 2;
        let left = (self.width - width) / 2;
        let mut pixels = Vec::with_capacity(width * height);
        for row in top..top + height {
            let start = row * self.width + left;
            pixels.extend_from_slice(&self.pixels[start..start + width]);
        }
        Ok(Self { width, height, pixels })
    }

    /// Reads a binary (P5) or ASCII (P2) PGM file.
    pub fn read_pgm(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        decode_pgm(&bytes)
    }

    /// Writes a binary P5 PGM with maxval 255.
    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        out.write_all(&encode_pgm(self))?;
        out.flush()?;
        Ok(())
    }

    /// Loads PGM directly and any other supported raster format (PNG)
    /// through the `image` crate, converting color to luminance with
    /// weights 0.299/0.587/0.114.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let is_pgm = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.eq_ignore_ascii_case("pgm"))
            .unwrap_or(false);
        if is_pgm {
            return Self::read_pgm(path);
        }
        let decoded = ::image::open(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
            .into_rgb32f();
        let (w, h) = decoded.dimensions();
        let pixels = decoded
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0;
                0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b)
            })
            .collect();
        Self::from_clamped(w as usize, h as usize, pixels)
    }
}

/// Serializes to P5 bytes with maxval 255.
pub fn encode_pgm(image: &ImagePlane) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.pixels.iter().map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8));
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<ImagePlane> {
    let mut cursor = HeaderCursor { bytes, pos: 0 };
    let magic = cursor.token()?;
    let ascii = match magic.as_str() {
        "P5" => false,
        "P2" => true,
        other => return Err(Error::Format(format!("not a PGM file (magic {other:?})"))),
    };
    let width = cursor.number()?;
    let height = cursor.number()?;
    let maxval = cursor.number()?;
    if width == 0 || height == 0 {
        return Err(Error::Format("PGM dimensions must be positive".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    let count = width * height;
    let samples: Vec<usize> = if ascii {
        (0..count).map(|_| cursor.number()).collect::<Result<_>>()?
    } else {
        // exactly one whitespace byte separates maxval from the raster
        let start = cursor.pos + 1;
        let width_bytes = if maxval < 256 { 1 } else { 2 };
        let raster = bytes
            .get(start..start + count * width_bytes)
            .ok_or_else(|| Error::Format("truncated PGM raster".into()))?;
        if width_bytes == 1 {
            raster.iter().map(|&b| b as usize).collect()
        } else {
            raster
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]) as usize)
                .collect()
        }
    };
    if let Some(&bad) = samples.iter().find(|&&s| s > maxval) {
        return Err(Error::Format(format!("PGM sample {bad} exceeds maxval {maxval}")));
    }
    ImagePlane::new(width, height, samples.into_iter().map(|s| s as f64 / maxval as f64).collect())
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    if c == b'\n' {
                        break;
                    }
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<String> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&self.bytes[start..self.pos]).into_owned())
    }

    fn number(&mut self) -> Result<usize> {
        let token = self.token()?;
        token
            .parse()
            .map_err(|_| Error::Format(format!("bad PGM header field {token:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(matches!(ImagePlane::new(1, 1, vec![1.5]), Err(Error::Validation(_))));
        assert!(matches!(ImagePlane::new(2, 1, vec![0.5]), Err(Error::Dimension(_))));
    }

    #[test]
    fn pgm_maxval_maps_to_one() {
        let bytes = b"P5\n2 1\n255\n\x00\xff";
        let img = decode_pgm(bytes).unwrap();
        assert_eq!(img.pixels(), &[0.0, 1.0]);
    }

    #[test]
    fn pgm_ascii_with_comment() {
        let bytes = b"P2\n# hello\n2 2\n4\n0 1\n2 4\n";
        let img = decode_pgm(bytes).unwrap();
        assert_eq!(img.pixels(), &[0.0, 0.25, 0.5, 1.0]);
    }

    #[test]
    fn pgm_sixteen_bit() {
        let bytes = b"P5 1 1 65535\n\xff\xff";
        assert_eq!(decode_pgm(bytes).unwrap().pixels(), &[1.0]);
    }

    #[test]
    fn pgm_truncated_raster() {
        assert!(matches!(decode_pgm(b"P5\n4 4\n255\n\x00"), Err(Error::Format(_))));
    }

    #[test]
    fn pgm_roundtrip_of_quantized_values() {
        let img = ImagePlane::from_fn(5, 3, |r, c| ((r * 5 + c) as f64 * 17.0) / 255.0).unwrap();
        let back = decode_pgm(&encode_pgm(&img)).unwrap();
        for (a, b) in img.pixels().iter().zip(back.pixels()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn center_crop_100_to_96() {
        let img = ImagePlane::from_fn(100, 100, |r, c| if r == 2 && c == 2 { 1.0 } else { 0.0 }).unwrap();
        let cropped = img.crop_center(96, 96).unwrap();
        assert_eq!((cropped.width(), cropped.height()), (96, 96));
        assert_eq!(cropped.get(0, 0), 1.0);
    }
}
