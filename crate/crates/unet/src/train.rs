//! Training loop: simulated pairs, Adam on the MAE loss, plateau schedule,
//! early stopping and best-validation weight restore.

use bcs_core::data::{check_trainable, item_seed, make_pair, mix_seed, AugmentConfig};
use bcs_core::{BlockMatrix, Error, ImagePlane, MeasurementTensor, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::artifact::{ModelArtifact, TrainingMetadata};
use crate::loss::{mae, mae_with_grad};
use crate::model::Network;
use crate::optim::{Adam, EarlyStopping, PlateauScheduler};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub initial_lr: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            initial_lr: 2e-4,
            plateau_factor: 0.5,
            plateau_patience: 5,
            max_epochs: 200,
            early_stop_patience: 15,
            weight_decay: 0.0,
            seed: 0,
            augment: AugmentConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Argument("batch size and epoch count must be positive".into()));
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::Argument(format!("learning rate must be positive, got {}", self.initial_lr)));
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return Err(Error::Argument(format!("plateau factor must be in (0, 1), got {}", self.plateau_factor)));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Argument("weight decay must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub artifact: ModelArtifact,
    pub history: Vec<EpochRecord>,
}

impl TrainOutcome {
    /// Per-epoch losses as CSV with header `epoch,train_loss,val_loss,lr`.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,lr\n");
        for r in &self.history {
            out.push_str(&format!("{},{:.8},{:.8},{:e}\n", r.epoch, r.train_loss, r.val_loss, r.lr));
        }
        out
    }
}

/// Stacks `(h, w, c)` channel-fastest measurement tensors into an NCHW batch.
pub fn measurement_batch(tensors: &[&MeasurementTensor]) -> Result<Tensor> {
    let first = tensors.first().ok_or_else(|| Error::Shape("empty batch".into()))?;
    let (h, w, c) = first.shape();
    let mut out = Tensor::zeros(tensors.len(), c, h, w);
    for (k, t) in tensors.iter().enumerate() {
        if t.shape() != (h, w, c) {
            return Err(Error::Shape(format!("batch mixes tensor shapes {:?} and {:?}", (h, w, c), t.shape())));
        }
        let dst = out.sample_mut(k);
        for (cell, values) in t.values().chunks_exact(c).enumerate() {
            for (ch, v) in values.iter().enumerate() {
                dst[ch * h * w + cell] = *v;
            }
        }
    }
    Ok(out)
}

/// Stacks images into an `(n, 1, h, w)` batch.
pub fn image_batch(images: &[&ImagePlane]) -> Result<Tensor> {
    let first = images.first().ok_or_else(|| Error::Shape("empty batch".into()))?;
    let (h, w) = (first.height(), first.width());
    let mut data = Vec::with_capacity(images.len() * h * w);
    for img in images {
        if (img.height(), img.width()) != (h, w) {
            return Err(Error::Shape("batch mixes image sizes".into()));
        }
        data.extend_from_slice(img.pixels());
    }
    Tensor::from_vec(images.len(), 1, h, w, data)
}

/// Splits an `(n, 1, h, w)` batch back into images.
pub fn batch_images(batch: &Tensor) -> Result<Vec<ImagePlane>> {
    (0..batch.n).map(|k| ImagePlane::from_clamped(batch.w, batch.h, batch.sample(k).to_vec())).collect()
}

/// Mean inference-mode loss over `pairs`, weighting every image equally.
pub fn evaluate_loss(net: &Network, pairs: &[(MeasurementTensor, ImagePlane)], batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    for chunk in pairs.chunks(batch_size) {
        let x = measurement_batch(&chunk.iter().map(|p| &p.0).collect::<Vec<_>>())?;
        let y = image_batch(&chunk.iter().map(|p| &p.1).collect::<Vec<_>>())?;
        total += mae(&net.forward(&x)?, &y)? * chunk.len() as f64;
    }
    Ok(total / pairs.len() as f64)
}

/// Trains `net` on pairs simulated from `train_images` with `matrix`.
///
/// Training pairs are re-augmented every epoch with seeds derived from
/// `(config.seed, epoch, image index)`; validation pairs are never
/// augmented. Batch order is a seeded shuffle, so repeated runs produce
/// identical artifacts. The returned artifact holds the weights of the epoch
/// with the lowest validation loss.
pub fn train(
    mut net: Network,
    train_images: &[ImagePlane],
    val_images: &[ImagePlane],
    matrix: &BlockMatrix,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_images.is_empty() || val_images.is_empty() {
        return Err(Error::Argument("training and validation sets must be non-empty".into()));
    }
    if net.config().in_channels != matrix.rows() {
        return Err(Error::Shape(format!(
            "model takes {} channels but the matrix has {} rows",
            net.config().in_channels,
            matrix.rows()
        )));
    }
    if net.config().block_size != matrix.block_size() {
        return Err(Error::Shape(format!(
            "model upsamples by {} but the matrix block size is {}",
            net.config().block_size,
            matrix.block_size()
        )));
    }
    for img in train_images.iter().chain(val_images) {
        check_trainable(img, matrix.block_size())?;
    }
    let no_augment = AugmentConfig::disabled();
    let val_pairs = val_images
        .iter()
        .map(|img| make_pair(img, matrix, &no_augment, 0))
        .collect::<Result<Vec<_>>>()?;

    let mut adam = Adam::new(config.initial_lr, config.weight_decay);
    let mut plateau = PlateauScheduler::new(config.plateau_factor, config.plateau_patience);
    let mut stopper = EarlyStopping::new(config.early_stop_patience);
    let mut best_state = net.state();
    let mut best_epoch = 0;
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train_images.len()).collect();

    for epoch in 0..config.max_epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed ^ mix_seed(epoch as u64 + 1)));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let pairs = batch
                .iter()
                .map(|&i| make_pair(&train_images[i], matrix, &config.augment, item_seed(config.seed, epoch as u64, i as u64)))
                .collect::<Result<Vec<_>>>()?;
            let x = measurement_batch(&pairs.iter().map(|p| &p.0).collect::<Vec<_>>())?;
            let y = image_batch(&pairs.iter().map(|p| &p.1).collect::<Vec<_>>())?;
            net.zero_grad();
            let out = net.forward_train(&x)?;
            let (loss, grad) = mae_with_grad(&out, &y)?;
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("training loss became {loss} in epoch {epoch}")));
            }
            net.backward(&grad);
            adam.step(net.params_mut());
            loss_sum += loss * batch.len() as f64;
        }
        let train_loss = loss_sum / train_images.len() as f64;
        let val_loss = evaluate_loss(&net, &val_pairs, config.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::Numerical(format!("validation loss became {val_loss} in epoch {epoch}")));
        }
        history.push(EpochRecord { epoch, train_loss, val_loss, lr: adam.lr });
        log::info!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6} lr {:e}", adam.lr);
        if stopper.observe(val_loss) {
            best_state = net.state();
            best_epoch = epoch;
        }
        if let Some(lr) = plateau.observe(val_loss, &mut adam.lr) {
            log::info!("validation loss plateaued; learning rate now {lr:e}");
        }
        if stopper.should_stop() {
            log::info!("stopping early after epoch {epoch}");
            break;
        }
    }
    net.load_state(&best_state)?;
    let metadata = TrainingMetadata {
        epochs: history.len(),
        best_epoch: Some(best_epoch),
        val_loss: Some(stopper.best()),
    };
    let artifact = ModelArtifact::new(net, matrix, metadata)?;
    Ok(TrainOutcome { artifact, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use bcs_core::sensing::{generate_block_matrix, sample_image};
    use bcs_core::SamplingConfig;

    fn images(count: usize) -> Vec<ImagePlane> {
        bcs_core::data::synthetic::corpus(bcs_core::data::synthetic::SceneKind::Shapes, count, 32, 4)
    }

    #[test]
    fn batch_layout_is_channel_planar() {
        let a = generate_block_matrix(&SamplingConfig::new(4, 0.125, 1)).unwrap();
        let img = ImagePlane::from_fn(8, 8, |r, c| (r * 8 + c) as f64 / 63.0).unwrap();
        let t = sample_image(&a, &img).unwrap();
        let b = measurement_batch(&[&t, &t]).unwrap();
        assert_eq!(b.shape(), [2, 2, 2, 2]);
        for row in 0..2 {
            for col in 0..2 {
                for ch in 0..2 {
                    assert_eq!(b.data[8 + ch * 4 + row * 2 + col], t.get(row, col, ch));
                }
            }
        }
    }

    #[test]
    fn one_epoch_smoke() {
        let a = generate_block_matrix(&SamplingConfig::new(4, 0.25, 2)).unwrap();
        let mut net = Network::new(ModelConfig::uniform(4, 2), 0).unwrap();
        let before = net.state();
        let config = TrainConfig { batch_size: 4, max_epochs: 1, ..TrainConfig::default() };
        let data = images(4);
        let mut out = train(net.clone(), &data, &data[..1], &a, &config).unwrap();
        assert_eq!(out.history.len(), 1);
        assert!(out.history[0].train_loss.is_finite());
        assert_ne!(out.artifact.network_mut().state(), before);
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = generate_block_matrix(&SamplingConfig::new(4, 0.25, 2)).unwrap();
        let data = images(2);
        let cfg = TrainConfig { max_epochs: 1, ..TrainConfig::default() };
        let net = Network::new(ModelConfig::uniform(2, 2), 0).unwrap();
        assert!(matches!(train(net, &data, &data, &a, &cfg), Err(Error::Shape(_))));
        let net = Network::new(ModelConfig::uniform(4, 2), 0).unwrap();
        assert!(train(net, &[], &data, &a, &cfg).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let a = generate_block_matrix(&SamplingConfig::new(4, 0.25, 2)).unwrap();
        let data = images(6);
        let cfg = TrainConfig { batch_size: 3, max_epochs: 2, seed: 5, ..TrainConfig::default() };
        let net = Network::new(ModelConfig::uniform(4, 2), 1).unwrap();
        let mut x = train(net.clone(), &data[..4], &data[4..], &a, &cfg).unwrap();
        let mut y = train(net, &data[..4], &data[4..], &a, &cfg).unwrap();
        assert_eq!(x.history, y.history);
        assert_eq!(x.artifact.network_mut().state(), y.artifact.network_mut().state());
    }
}
