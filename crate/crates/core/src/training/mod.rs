//! Teacher-forced training with Adam, gradient clipping, validation-driven
//! model selection and resumable checkpoints.

mod optim;
mod trainer;

pub use optim::{adam_step, clip_gradients, AdamState};
pub use trainer::{BestRecord, HistoryRecord, StepReport, TrainSummary, Trainer};

use serde::{Deserialize, Serialize};

use crate::eval::EvalError;
use crate::model::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("non-finite loss at step {step}")]
    Divergence { step: u64 },
    #[error("non-finite gradient for {param} at step {step}")]
    NonFiniteGradient { param: String, step: u64 },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub seed: u64,
    pub clip_norm: f64,
    /// Validate after every this many epochs.
    pub validate_every: usize,
    /// Stop after this many validations without improvement; 0 disables.
    pub patience: usize,
    /// Hard cap on optimizer steps.
    pub max_steps: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            epochs: 50,
            seed: 0,
            clip_norm: 1.0,
            validate_every: 1,
            patience: 5,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.batch_size == 0 || self.epochs == 0 || self.validate_every == 0 {
            return bad("batch_size, epochs and validate_every must be positive");
        }
        let positive = |x: f64| x > 0.0;
        if !positive(self.learning_rate) || !positive(self.epsilon) || !positive(self.clip_norm) {
            return bad("learning_rate, epsilon and clip_norm must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.max_steps == Some(0) {
            return bad("max_steps must be positive");
        }
        Ok(())
    }
}
