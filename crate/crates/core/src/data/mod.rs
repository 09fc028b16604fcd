//! Training data: corpus ingestion, 8:1:1 splitting, augmentation and
//! simulated (measurement, image) pairs.

mod augment;
pub mod synthetic;

use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use augment::{apply_augment, augment, sample_augment_params, AugmentConfig, AugmentParams};

use crate::error::{Error, Result};
use crate::image::ImagePlane;
use crate::sensing::{sample_image, BlockMatrix, MeasurementTensor};

/// Side lengths of training images must be multiples of this (five 2x
/// halvings in the reconstruction network).
pub const SIZE_MULTIPLE: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedImage {
    /// Path relative to the corpus root, with `/` separators.
    pub name: String,
    pub image: ImagePlane,
}

fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "png"))
        .unwrap_or(false)
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else if is_image_file(&path) {
            out.push(path);
        }
    }
    Ok(())
}

/// Center-crops to the largest size whose sides are multiples of
/// [`SIZE_MULTIPLE`]; `None` when a side is shorter than that.
pub fn crop_to_multiple(image: &ImagePlane) -> Option<ImagePlane> {
    let w = image.width() / SIZE_MULTIPLE * SIZE_MULTIPLE;
    let h = image.height() / SIZE_MULTIPLE * SIZE_MULTIPLE;
    if w == 0 || h == 0 {
        return None;
    }
    if w == image.width() && h == image.height() {
        return Some(image.clone());
    }
    image.crop_center(w, h).ok()
}

/// Loads every PGM/PNG under `dir` (recursively, sorted by path) as a
/// grayscale plane, center-cropped to multiples of 32. Unreadable or too
/// small files are skipped with a warning.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<NamedImage>> {
    let dir = dir.as_ref();
    let mut files = Vec::new();
    collect_files(dir, &mut files)?;
    files.sort();
    let mut corpus = Vec::with_capacity(files.len());
    for path in files {
        let name = path
            .strip_prefix(dir)
            .unwrap_or(&path)
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        match ImagePlane::load(&path) {
            Ok(image) => match crop_to_multiple(&image) {
                Some(image) => corpus.push(NamedImage { name, image }),
                None => warn!(
                    "skipping {}: {}x{} is smaller than {SIZE_MULTIPLE}x{SIZE_MULTIPLE}",
                    path.display(),
                    image.width(),
                    image.height()
                ),
            },
            Err(e) => warn!("skipping {}: {e}", path.display()),
        }
    }
    if corpus.is_empty() {
        return Err(Error::Argument(format!("no usable images found under {}", dir.display())));
    }
    Ok(corpus)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
    pub split_seed: u64,
}

/// Shuffles with `seed` and cuts 8:1:1; validation and test each get
/// `round(n / 10)` items.
pub fn split_corpus<T: Clone>(corpus: &[T], seed: u64) -> Result<DatasetSplit<T>> {
    let n = corpus.len();
    if n < 10 {
        return Err(Error::Argument(format!("need at least 10 items to split 8:1:1, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = (n as f64 / 10.0).round() as usize;
    let n_test = n_val;
    let n_train = n - n_val - n_test;
    let pick = |idx: &[usize]| idx.iter().map(|&i| corpus[i].clone()).collect::<Vec<_>>();
    Ok(DatasetSplit {
        train: pick(&order[..n_train]),
        validation: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
        split_seed: seed,
    })
}

/// SplitMix64 finalizer, used to derive independent per-item seeds.
pub fn mix_seed(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for augmenting item `index` in `epoch`.
pub fn item_seed(base: u64, epoch: u64, index: u64) -> u64 {
    mix_seed(mix_seed(base ^ mix_seed(epoch)) ^ index)
}

/// Checks that `image` can feed the reconstruction network with block size `block`.
pub fn check_trainable(image: &ImagePlane, block: usize) -> Result<()> {
    for side in [image.width(), image.height()] {
        if side % block != 0 || side % SIZE_MULTIPLE != 0 {
            return Err(Error::Dimension(format!(
                "image {}x{} must have sides divisible by {block} and {SIZE_MULTIPLE}",
                image.width(),
                image.height()
            )));
        }
    }
    Ok(())
}

/// Lazily simulates `(tensor, target)` pairs for one pass over `images`.
pub struct PairStream<'a> {
    images: &'a [ImagePlane],
    matrix: &'a BlockMatrix,
    augment: AugmentConfig,
    seed: u64,
    epoch: u64,
    next: usize,
}

impl Iterator for PairStream<'_> {
    type Item = Result<(MeasurementTensor, ImagePlane)>;

    fn next(&mut self) -> Option<Self::Item> {
        let image = self.images.get(self.next)?;
        let index = self.next as u64;
        self.next += 1;
        Some(make_pair(image, self.matrix, &self.augment, item_seed(self.seed, self.epoch, index)))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.images.len() - self.next;
        (left, Some(left))
    }
}

/// One simulated pair: the (possibly augmented) image and its measurements.
pub fn make_pair(
    image: &ImagePlane,
    matrix: &BlockMatrix,
    augment_config: &AugmentConfig,
    seed: u64,
) -> Result<(MeasurementTensor, ImagePlane)> {
    check_trainable(image, matrix.block_size())?;
    let target = if augment_config.enabled {
        augment(image, augment_config, seed)
    } else {
        image.clone()
    };
    let tensor = sample_image(matrix, &target)?;
    Ok((tensor, target))
}

/// Pairs for `images` in order. Augmentation draws depend only on
/// `(seed, epoch, position)`, so a given epoch always yields the same stream.
pub fn make_pairs<'a>(
    images: &'a [ImagePlane],
    matrix: &'a BlockMatrix,
    augment_config: &AugmentConfig,
    seed: u64,
    epoch: u64,
) -> PairStream<'a> {
    PairStream { images, matrix, augment: augment_config.clone(), seed, epoch, next: 0 }
}
