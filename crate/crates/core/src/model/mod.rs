//! Win/lose classifier: the MLP, its training loop, metrics and checkpoints.

mod checkpoint;
mod metrics;
mod mlp;
mod optim;
mod train;

use ndarray::Array2;
use thiserror::Error;

use crate::dataset::Standardizer;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_VERSION};
pub use metrics::Metrics;
pub use mlp::{
    cross_entropy, cross_entropy_with_grad, forward, init_model, init_model_with, predict_logits, softmax, BatchNorm,
    Dense, Dropout, ForwardPass, HiddenLayer, Mode, ModelParams, BN_EPS, BN_MOMENTUM, DEFAULT_LEAKY_SLOPE,
    DROPOUT_LAYERS, HIDDEN_SIZES, N_CLASSES,
};
pub use optim::{Adam, AdamConfig, StepLr};
pub use train::{evaluate, train, EpochRecord, History, TrainConfig};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("training-mode batch needs at least 2 rows, got {0}")]
    BatchTooSmall(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("empty data set")]
    EmptyData,
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("cannot parse checkpoint {path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Network plus the feature standardization fitted on its training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub standardizer: Standardizer,
    pub params: ModelParams,
}

impl Classifier {
    pub fn new(standardizer: Standardizer, params: ModelParams) -> Result<Self, ModelError> {
        params.check()?;
        if standardizer.dim() != params.input_dim {
            return Err(ModelError::Shape(format!(
                "standardizer has {} dimensions, model expects {}",
                standardizer.dim(),
                params.input_dim
            )));
        }
        Ok(Self { standardizer, params })
    }

    pub fn input_dim(&self) -> usize {
        self.params.input_dim
    }

    pub fn check_input_dim(&self, d: usize) -> Result<(), ModelError> {
        if d != self.params.input_dim {
            return Err(ModelError::Shape(format!(
                "data has {d} features, checkpoint expects {}",
                self.params.input_dim
            )));
        }
        Ok(())
    }

    /// Eval-mode logits for raw (unstandardized) rows.
    pub fn logits(&self, raw: &Array2<f64>) -> Result<Array2<f64>, ModelError> {
        self.check_input_dim(raw.ncols())?;
        predict_logits(&self.params, &self.standardizer.transform(raw))
    }

    /// Probability of class 1 ("win") per raw row.
    pub fn win_probability(&self, raw: &Array2<f64>) -> Result<Vec<f64>, ModelError> {
        Ok(softmax(&self.logits(raw)?).column(1).to_vec())
    }
}
