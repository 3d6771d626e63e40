//! From-scratch neural networks: GRU sequence autoencoder and MLP classifier.

mod autoencoder;
mod gradcheck;
mod layers;
mod mlp;
mod optim;
mod serialize;
mod tensor;
mod train;

pub use autoencoder::{AeOutput, Autoencoder, AutoencoderConfig};
pub use gradcheck::{gradient_check, relative_error, Differentiable, GradCheckReport};
pub use layers::{dropout_mask, Activation, BiGru, Dense, Gru, GruTrace, Parameters};
pub use mlp::{InputScaling, Mlp, MlpConfig};
pub use optim::{Optimizer, OptimizerKind};
pub use serialize::{
    load_autoencoder, load_classifier, read_model, save_autoencoder, save_classifier,
    write_autoencoder, write_classifier, ModelFile, FORMAT_VERSION,
};
pub use tensor::{softmax, Matrix};
pub use train::{
    fit, train_autoencoder, train_classifier, train_classifier_standardized, Trainable,
    TrainingConfig, TrainingHistory,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnetError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite loss or weights at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("model file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnetError>;

/// Latent feature vector from the autoencoder's encoder; values in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentEncoding(pub Vec<f64>);

impl LatentEncoding {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}
