//! Trained-model artifacts: weights bound to the measurement matrix they
//! were trained with, and their on-disk container.
//!
//! Layout (integers little-endian):
//!
//! ```text
//! "BCSA" | version u8 | manifest_len u32 | manifest (UTF-8 key=value lines)
//! | blob_count u32 | blob_count × (name_len u16 | name | count u64 | count × f64)
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use bcs_core::container::ByteReader;
use bcs_core::{BlockMatrix, Error, Fingerprint, ImagePlane, MeasurementTensor, Result};

use crate::model::{ModelConfig, Network};
use crate::train::measurement_batch;

pub const ARTIFACT_MAGIC: &[u8; 4] = b"BCSA";
pub const ARTIFACT_VERSION: u8 = 0x01;
const FORMAT_NAME: &str = "bcs-unet";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingMetadata {
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    /// Validation loss of the stored weights.
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ModelArtifact {
    network: Network,
    matrix_fingerprint: Fingerprint,
    block_size: usize,
    measurements: usize,
    pub metadata: TrainingMetadata,
}

impl ModelArtifact {
    /// Binds `network` to `matrix`; the network must take one channel per
    /// matrix row.
    pub fn new(network: Network, matrix: &BlockMatrix, metadata: TrainingMetadata) -> Result<Self> {
        if network.config().in_channels != matrix.rows() {
            return Err(Error::Shape(format!(
                "model takes {} channels but the matrix has {} rows",
                network.config().in_channels,
                matrix.rows()
            )));
        }
        Ok(Self {
            network,
            matrix_fingerprint: matrix.fingerprint(),
            block_size: matrix.block_size(),
            measurements: matrix.rows(),
            metadata,
        })
    }

    /// A freshly initialized, untrained model for `matrix`.
    pub fn untrained(config: ModelConfig, matrix: &BlockMatrix, seed: u64) -> Result<Self> {
        Self::new(Network::new(config, seed)?, matrix, TrainingMetadata::default())
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.network
    }

    pub fn into_network(self) -> Network {
        self.network
    }

    pub fn config(&self) -> &ModelConfig {
        self.network.config()
    }

    pub fn matrix_fingerprint(&self) -> Fingerprint {
        self.matrix_fingerprint
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Sampling ratio `M_B / B²` of the bound matrix.
    pub fn ratio(&self) -> f64 {
        self.measurements as f64 / (self.block_size * self.block_size) as f64
    }

    /// Inference-mode reconstruction of one measurement tensor.
    pub fn reconstruct(&self, tensor: &MeasurementTensor) -> Result<ImagePlane> {
        Ok(self.reconstruct_batch(&[tensor])?.remove(0))
    }

    /// Reconstructs several equally-shaped tensors in one pass. Inference
    /// uses stored batch-norm statistics, so results match one-at-a-time
    /// reconstruction.
    pub fn reconstruct_batch(&self, tensors: &[&MeasurementTensor]) -> Result<Vec<ImagePlane>> {
        for t in tensors {
            t.check_provenance(self.matrix_fingerprint)?;
        }
        let x = measurement_batch(tensors)?;
        let out = self.network.forward(&x)?;
        crate::train::batch_images(&out)
    }

    fn manifest(&self) -> String {
        let cfg = self.config();
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let encoder: Vec<String> = cfg.encoder_channels.iter().map(usize::to_string).collect();
        [
            ("format", FORMAT_NAME.to_string()),
            ("in_channels", cfg.in_channels.to_string()),
            ("upsample_channels", cfg.upsample_channels.to_string()),
            ("encoder_channels", encoder.join(",")),
            ("block_size", cfg.block_size.to_string()),
            ("leaky_slope", cfg.leaky_slope.to_string()),
            ("matrix_fingerprint", self.matrix_fingerprint.to_hex()),
            ("matrix_block_size", self.block_size.to_string()),
            ("measurements_per_block", self.measurements.to_string()),
            ("ratio", self.ratio().to_string()),
            ("epochs", self.metadata.epochs.to_string()),
            ("best_epoch", opt(self.metadata.best_epoch.map(|e| e.to_string()))),
            ("val_loss", opt(self.metadata.val_loss.map(|v| v.to_string()))),
        ]
        .iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect()
    }

    pub fn encode(&self) -> Vec<u8> {
        let manifest = self.manifest();
        let mut out = Vec::new();
        out.extend_from_slice(ARTIFACT_MAGIC);
        out.push(ARTIFACT_VERSION);
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(manifest.as_bytes());
        let state = self.network.clone().state();
        out.extend_from_slice(&(state.len() as u32).to_le_bytes());
        for (name, values) in &state {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(values.len() as u64).to_le_bytes());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.header(ARTIFACT_MAGIC, ARTIFACT_VERSION)?;
        let len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(len)?).map_err(|e| Error::Format(format!("manifest is not UTF-8: {e}")))?;
        let manifest = Manifest::parse(text)?;
        if manifest.get("format")? != FORMAT_NAME {
            return Err(Error::Format(format!("unknown artifact format {:?}", manifest.get("format")?)));
        }
        let encoder_channels = manifest
            .get("encoder_channels")?
            .split(',')
            .map(|s| s.parse().map_err(|_| Error::Format(format!("bad encoder width {s:?}"))))
            .collect::<Result<Vec<usize>>>()?;
        let config = ModelConfig {
            in_channels: manifest.number("in_channels")?,
            upsample_channels: manifest.number("upsample_channels")?,
            encoder_channels,
            block_size: manifest.number("block_size")?,
            leaky_slope: manifest.number("leaky_slope")?,
        };
        config.validate().map_err(|e| Error::Format(format!("invalid model configuration: {e}")))?;
        let metadata = TrainingMetadata {
            epochs: manifest.number("epochs")?,
            best_epoch: manifest.optional("best_epoch")?,
            val_loss: manifest.optional("val_loss")?,
        };
        let matrix_fingerprint = Fingerprint::from_hex(manifest.get("matrix_fingerprint")?)
            .map_err(|e| Error::Format(format!("bad fingerprint: {e}")))?;
        let block_size = manifest.number("matrix_block_size")?;
        let measurements = manifest.number("measurements_per_block")?;
        if measurements != config.in_channels {
            return Err(Error::Format("measurement count disagrees with model input channels".into()));
        }

        let count = r.u32()? as usize;
        let mut state = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Format("blob name is not UTF-8".into()))?
                .to_string();
            let n = usize::try_from(r.u64()?).map_err(|_| Error::Format("blob too large".into()))?;
            state.push((name, r.f64s(n)?));
        }
        r.finish()?;
        let mut network = Network::new(config, 0)?;
        network.load_state(&state)?;
        Ok(Self { network, matrix_fingerprint, block_size, measurements, metadata })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

struct Manifest<'a>(BTreeMap<&'a str, &'a str>);

impl<'a> Manifest<'a> {
    fn parse(text: &'a str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Format(format!("manifest line {line:?} lacks '='")))?;
            map.insert(k, v);
        }
        Ok(Self(map))
    }

    fn get(&self, key: &str) -> Result<&'a str> {
        self.0.get(key).copied().ok_or_else(|| Error::Format(format!("manifest lacks {key}")))
    }

    fn number<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.parse().map_err(|_| Error::Format(format!("manifest {key}={v} is not a number")))
    }

    fn optional<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key)? {
            "none" => Ok(None),
            _ => self.number(key).map(Some),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bcs_core::sensing::{generate_block_matrix, sample_image};
    use bcs_core::SamplingConfig;

    fn setup() -> (BlockMatrix, ModelArtifact) {
        let a = generate_block_matrix(&SamplingConfig::new(4, 0.25, 3)).unwrap();
        let mut art = ModelArtifact::untrained(ModelConfig::uniform(4, 2), &a, 8).unwrap();
        art.metadata = TrainingMetadata { epochs: 3, best_epoch: Some(1), val_loss: Some(0.123456789) };
        (a, art)
    }

    fn tensor(a: &BlockMatrix, side: usize) -> MeasurementTensor {
        let img = ImagePlane::from_fn(side, side, |r, c| ((r * 3 + c * 5) % 11) as f64 / 10.0).unwrap();
        sample_image(a, &img).unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical_and_bitwise_equal() {
        let (a, art) = setup();
        let bytes = art.encode();
        let back = ModelArtifact::decode(&bytes).unwrap();
        assert_eq!(back.encode(), bytes);
        assert_eq!(back.metadata, art.metadata);
        assert_eq!(back.matrix_fingerprint(), a.fingerprint());
        let t = tensor(&a, 32);
        assert_eq!(back.reconstruct(&t).unwrap(), art.reconstruct(&t).unwrap());
    }

    #[test]
    fn truncation_and_corruption_are_format_errors() {
        let (_, art) = setup();
        let bytes = art.encode();
        for cut in [0, 3, 5, 9, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(ModelArtifact::decode(&bytes[..cut]), Err(Error::Format(_))), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(ModelArtifact::decode(&bad), Err(Error::Format(_))));
        let mut extra = bytes;
        extra.push(0);
        assert!(matches!(ModelArtifact::decode(&extra), Err(Error::Format(_))));
    }

    #[test]
    fn reconstruct_checks_provenance_and_channels() {
        let (a, art) = setup();
        let other = generate_block_matrix(&SamplingConfig::new(4, 0.25, 4)).unwrap();
        assert!(matches!(art.reconstruct(&tensor(&other, 32)), Err(Error::Provenance(_))));
        let narrow = generate_block_matrix(&SamplingConfig::new(4, 0.125, 3)).unwrap();
        let t = tensor(&narrow, 32);
        // same fingerprint but fewer channels cannot occur from a real
        // matrix, so forge one to reach the shape check
        let forged = MeasurementTensor::new(8, 8, 2, t.values().to_vec(), a.fingerprint()).unwrap();
        assert!(matches!(art.reconstruct(&forged), Err(Error::Shape(_))));
    }

    #[test]
    fn reconstruct_is_deterministic_and_size_flexible() {
        let (a, art) = setup();
        let t = tensor(&a, 96);
        let x = art.reconstruct(&t).unwrap();
        assert_eq!((x.width(), x.height()), (96, 96));
        assert_eq!(x, art.reconstruct(&t).unwrap());
        let small = art.reconstruct(&tensor(&a, 32)).unwrap();
        assert_eq!((small.width(), small.height()), (32, 32));
    }

    #[test]
    fn batch_matches_single() {
        let (a, art) = setup();
        let t1 = tensor(&a, 32);
        let img = ImagePlane::filled(32, 32, 0.3).unwrap();
        let t2 = sample_image(&a, &img).unwrap();
        let both = art.reconstruct_batch(&[&t1, &t2]).unwrap();
        assert_eq!(both[0], art.reconstruct(&t1).unwrap());
        assert_eq!(both[1], art.reconstruct(&t2).unwrap());
    }

    #[test]
    fn file_round_trip() {
        let (_, art) = setup();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bcsa");
        art.save(&path).unwrap();
        assert_eq!(ModelArtifact::load(&path).unwrap().encode(), art.encode());
    }
}
