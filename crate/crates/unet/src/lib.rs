//! BCS-UNet: learned reconstruction from block measurement tensors.

pub mod artifact;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod train;

pub use artifact::{ModelArtifact, TrainingMetadata};
pub use model::{ModelConfig, Network};
pub use tensor::Tensor;
pub use train::{train, EpochRecord, TrainConfig, TrainOutcome};
