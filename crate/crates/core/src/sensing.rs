//! Binary block sensing matrices and block compressive sensing.
//!
//! An image of `k_h x k_w` pixels is cut into non-overlapping `B x B` tiles in
//! row-major order. Every tile is flattened in raster order and multiplied by
//! the same `M_B x B²` binary matrix `A`, where `M_B = floor(S * B²)`. The
//! `M_B` results of tile `(i, j)` become the channels of cell `(i, j)` in a
//! `(k_h/B) x (k_w/B) x M_B` measurement tensor.
//!
//! Applying `A` per tile is the same linear map as multiplying the
//! block-ordered flattened image by the block-diagonal matrix
//! `diag(A, A, ..., A)`; [`assemble_block_diagonal`] materializes it for
//! verification.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::ImagePlane;

/// Slack when turning a floating-point ratio into a measurement count, so that
/// e.g. `0.1875 * 16` lands on 3 even if the product rounds down slightly.
const RATIO_EPS: f64 = 1e-9;

/// SHA-256 content hash binding measurements and models to a matrix.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Fingerprint(pub [u8; 32]);

impl Fingerprint {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        self.0.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(hex: &str) -> Result<Self> {
        if hex.len() != 64 || !hex.is_ascii() {
            return Err(Error::Format(format!("fingerprint must be 64 hex digits, got {hex:?}")));
        }
        let mut out = [0u8; 32];
        for (i, byte) in out.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16)
                .map_err(|_| Error::Format(format!("bad fingerprint hex {hex:?}")))?;
        }
        Ok(Self(out))
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({})", &self.to_hex()[..16])
    }
}

/// A sampling ratio `num / den`, with `den = B²` for realizable ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    pub num: u32,
    pub den: u32,
}

impl Ratio {
    pub fn as_f64(self) -> f64 {
        f64::from(self.num) / f64::from(self.den)
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_f64())
    }
}

/// Block size, sampling ratio and generator seed for a block matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    pub block_size: usize,
    pub ratio: f64,
    pub seed: u64,
}

impl SamplingConfig {
    pub const DEFAULT_BLOCK_SIZE: usize = 4;

    pub fn new(block_size: usize, ratio: f64, seed: u64) -> Self {
        Self { block_size, ratio, seed }
    }

    /// `floor(S * B²)`, after checking the config invariants.
    pub fn measurements_per_block(&self) -> Result<usize> {
        if self.block_size < 2 {
            return Err(Error::Argument(format!("block size must be at least 2, got {}", self.block_size)));
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::InvalidRatio(format!("ratio {} is outside (0, 1]", self.ratio)));
        }
        let n = (self.block_size * self.block_size) as f64;
        let rows = (self.ratio * n + RATIO_EPS).floor() as usize;
        if rows == 0 {
            return Err(Error::InvalidRatio(format!(
                "ratio {} gives no measurements for {}x{} blocks (minimum is {})",
                self.ratio,
                self.block_size,
                self.block_size,
                1.0 / n
            )));
        }
        Ok(rows)
    }

    /// Whether the ratio is exactly one of [`valid_ratios`] for this block size.
    pub fn is_realizable(&self) -> bool {
        let n = (self.block_size * self.block_size) as f64;
        let p = self.ratio * n;
        p >= 1.0 - RATIO_EPS && p <= n + RATIO_EPS && (p - p.round()).abs() < 1e-6
    }
}

/// Realizable sampling ratios `p / B²` for `p = 1..=B²`.
pub fn valid_ratios(block_size: usize) -> Vec<Ratio> {
    let den = (block_size * block_size) as u32;
    (1..=den).map(|num| Ratio { num, den }).collect()
}

/// The binary `M_B x B²` block measurement matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockMatrix {
    block_size: usize,
    rows: usize,
    bits: Vec<u8>,
    seed: u64,
    fingerprint: Fingerprint,
}

impl BlockMatrix {
    /// Builds a matrix from explicit row-major bits, which must all be 0 or 1.
    pub fn from_bits(block_size: usize, rows: usize, bits: Vec<u8>, seed: u64) -> Result<Self> {
        if block_size == 0 || rows == 0 {
            return Err(Error::Dimension("block matrix must have at least one row and column".into()));
        }
        let cols = block_size * block_size;
        if bits.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "expected {} matrix entries, got {}",
                rows * cols,
                bits.len()
            )));
        }
        if let Some(bad) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::Validation(format!("matrix entry {bad} is not binary")));
        }
        if block_size > u16::MAX as usize || rows > u16::MAX as usize {
            return Err(Error::Dimension("block matrix dimensions exceed 16 bits".into()));
        }
        let fingerprint = fingerprint_of(block_size, rows, &bits);
        Ok(Self { block_size, rows, bits, seed, fingerprint })
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// `M_B`, the number of measurements taken per block.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// `B²`, the number of pixels per block.
    pub fn cols(&self) -> usize {
        self.block_size * self.block_size
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn row(&self, m: usize) -> &[u8] {
        let cols = self.cols();
        &self.bits[m * cols..(m + 1) * cols]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    /// The sampling ratio `M_B / B²` this matrix realizes.
    pub fn ratio(&self) -> Ratio {
        Ratio { num: self.rows as u32, den: self.cols() as u32 }
    }

    /// Indices of rows with no 1-bit; such rows always measure zero.
    pub fn zero_rows(&self) -> Vec<usize> {
        (0..self.rows).filter(|&m| self.row(m).iter().all(|&b| b == 0)).collect()
    }
}

/// SHA-256 over `BCSM | 0x01 | B (u16 LE) | M_B (u16 LE) | payload`.
///
/// The seed is not hashed: two matrices with identical bits are the same
/// operator regardless of how they were drawn.
fn fingerprint_of(block_size: usize, rows: usize, bits: &[u8]) -> Fingerprint {
    let mut hasher = Sha256::new();
    hasher.update(crate::container::MATRIX_MAGIC);
    hasher.update([crate::container::VERSION]);
    hasher.update((block_size as u16).to_le_bytes());
    hasher.update((rows as u16).to_le_bytes());
    hasher.update(bits);
    let digest = hasher.finalize();
    let mut out = [0u8; 32];
    out.copy_from_slice(&digest);
    Fingerprint(out)
}

/// Draws `floor(S * B²)` rows of `B²` independent Bernoulli(0.5) bits from a
/// ChaCha8 generator seeded with `config.seed`.
pub fn generate_block_matrix(config: &SamplingConfig) -> Result<BlockMatrix> {
    let rows = config.measurements_per_block()?;
    let cols = config.block_size * config.block_size;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let bits = (0..rows * cols).map(|_| u8::from(rng.random_bool(0.5))).collect();
    BlockMatrix::from_bits(config.block_size, rows, bits, config.seed)
}

/// Number of 1-bits in each row (`Σ_i φ_{m,i}`).
pub fn matrix_row_sums(matrix: &BlockMatrix) -> Vec<u32> {
    (0..matrix.rows())
        .map(|m| matrix.row(m).iter().map(|&b| u32::from(b)).sum())
        .collect()
}

/// `y = A x` for one raster-flattened block, summing left to right.
pub fn sample_block(matrix: &BlockMatrix, block: &[f64]) -> Result<Vec<f64>> {
    if block.len() != matrix.cols() {
        return Err(Error::Dimension(format!(
            "block has {} elements, matrix expects {}",
            block.len(),
            matrix.cols()
        )));
    }
    let mut out = vec![0.0; matrix.rows()];
    sample_block_into(matrix, block, &mut out);
    Ok(out)
}

#[inline]
fn sample_block_into(matrix: &BlockMatrix, block: &[f64], out: &mut [f64]) {
    for (m, y) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (&bit, &x) in matrix.row(m).iter().zip(block) {
            if bit == 1 {
                acc += x;
            }
        }
        *y = acc;
    }
}

/// Measurements laid out on the block grid, channel fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementTensor {
    grid_h: usize,
    grid_w: usize,
    channels: usize,
    values: Vec<f64>,
    matrix_fingerprint: Fingerprint,
}

impl MeasurementTensor {
    pub fn new(
        grid_h: usize,
        grid_w: usize,
        channels: usize,
        values: Vec<f64>,
        matrix_fingerprint: Fingerprint,
    ) -> Result<Self> {
        if grid_h == 0 || grid_w == 0 || channels == 0 {
            return Err(Error::Dimension("measurement tensor dimensions must be positive".into()));
        }
        if values.len() != grid_h * grid_w * channels {
            return Err(Error::Dimension(format!(
                "tensor {grid_h}x{grid_w}x{channels} needs {} values, got {}",
                grid_h * grid_w * channels,
                values.len()
            )));
        }
        Ok(Self { grid_h, grid_w, channels, values, matrix_fingerprint })
    }

    pub fn zeros(grid_h: usize, grid_w: usize, channels: usize, matrix_fingerprint: Fingerprint) -> Result<Self> {
        Self::new(grid_h, grid_w, channels, vec![0.0; grid_h * grid_w * channels], matrix_fingerprint)
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.grid_h, self.grid_w, self.channels)
    }

    /// Total measurement count `M`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values in (row, col, channel) order.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.values[(row * self.grid_w + col) * self.channels + channel]
    }

    /// The `channels` measurements of block `(row, col)`.
    pub fn cell(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.grid_w + col) * self.channels;
        &self.values[start..start + self.channels]
    }

    pub fn matrix_fingerprint(&self) -> Fingerprint {
        self.matrix_fingerprint
    }

    /// Fails with a provenance error unless this tensor came from `matrix`.
    pub fn check_provenance(&self, expected: Fingerprint) -> Result<()> {
        if self.matrix_fingerprint != expected {
            return Err(Error::Provenance(format!(
                "tensor was measured with matrix {} but {} was expected",
                self.matrix_fingerprint, expected
            )));
        }
        Ok(())
    }
}

fn check_tiling(block: usize, width: usize, height: usize) -> Result<()> {
    if width % block != 0 || height % block != 0 {
        return Err(Error::Tiling { width, height, block });
    }
    Ok(())
}

/// Copies block `(bi, bj)` of `image` into `buf` in raster order.
#[inline]
fn extract_block(image: &ImagePlane, block: usize, bi: usize, bj: usize, buf: &mut [f64]) {
    let width = image.width();
    let pixels = image.pixels();
    for r in 0..block {
        let start = (bi * block + r) * width + bj * block;
        buf[r * block..(r + 1) * block].copy_from_slice(&pixels[start..start + block]);
    }
}

/// Block compressive sensing of a whole image into the grid tensor layout.
pub fn sample_image(matrix: &BlockMatrix, image: &ImagePlane) -> Result<MeasurementTensor> {
    let block = matrix.block_size();
    check_tiling(block, image.width(), image.height())?;
    let grid_h = image.height() / block;
    let grid_w = image.width() / block;
    let channels = matrix.rows();
    let mut values = vec![0.0; grid_h * grid_w * channels];
    let mut buf = vec![0.0; block * block];
    for bi in 0..grid_h {
        for bj in 0..grid_w {
            extract_block(image, block, bi, bj, &mut buf);
            let start = (bi * grid_w + bj) * channels;
            sample_block_into(matrix, &buf, &mut values[start..start + channels]);
        }
    }
    MeasurementTensor::new(grid_h, grid_w, channels, values, matrix.fingerprint())
}

/// Flattens an image block by block (blocks row-major, pixels raster within
/// each block), the ordering the block-diagonal matrix acts on.
pub fn flatten_by_blocks(image: &ImagePlane, block: usize) -> Result<Vec<f64>> {
    check_tiling(block, image.width(), image.height())?;
    let mut out = vec![0.0; image.len()];
    let block_len = block * block;
    let grid_w = image.width() / block;
    for bi in 0..image.height() / block {
        for bj in 0..grid_w {
            let start = (bi * grid_w + bj) * block_len;
            extract_block(image, block, bi, bj, &mut out[start..start + block_len]);
        }
    }
    Ok(out)
}

/// Inverse of [`flatten_by_blocks`].
pub fn unflatten_blocks(values: &[f64], block: usize, width: usize, height: usize) -> Result<Vec<f64>> {
    check_tiling(block, width, height)?;
    if values.len() != width * height {
        return Err(Error::Dimension(format!(
            "{} values cannot fill a {width}x{height} image",
            values.len()
        )));
    }
    let mut out = vec![0.0; values.len()];
    let block_len = block * block;
    let grid_w = width / block;
    for bi in 0..height / block {
        for bj in 0..grid_w {
            let base = (bi * grid_w + bj) * block_len;
            for r in 0..block {
                let dst = (bi * block + r) * width + bj * block;
                out[dst..dst + block].copy_from_slice(&values[base + r * block..base + (r + 1) * block]);
            }
        }
    }
    Ok(out)
}

/// A dense row-major binary matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseBinaryMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<u8>,
}

impl DenseBinaryMatrix {
    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.data[row * self.cols + col]
    }

    /// Dense product `Φ x`, summing every column left to right.
    pub fn multiply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::Dimension(format!("vector has {} elements, matrix has {} columns", x.len(), self.cols)));
        }
        Ok((0..self.rows)
            .map(|r| {
                let row = &self.data[r * self.cols..(r + 1) * self.cols];
                row.iter().zip(x).fold(0.0, |acc, (&b, &v)| if b == 1 { acc + v } else { acc })
            })
            .collect())
    }
}

/// `Φ = diag(A, ..., A)` with `num_blocks` copies of `A`.
pub fn assemble_block_diagonal(matrix: &BlockMatrix, num_blocks: usize) -> Result<DenseBinaryMatrix> {
    if num_blocks == 0 {
        return Err(Error::Argument("num_blocks must be at least 1".into()));
    }
    let (mb, n) = (matrix.rows(), matrix.cols());
    let rows = num_blocks * mb;
    let cols = num_blocks * n;
    let mut data = vec![0u8; rows * cols];
    for blk in 0..num_blocks {
        for m in 0..mb {
            let start = (blk * mb + m) * cols + blk * n;
            data[start..start + n].copy_from_slice(matrix.row(m));
        }
    }
    Ok(DenseBinaryMatrix { rows, cols, data })
}
