//! Minimal sequence-learning framework: dense and LSTM layers arranged in a
//! small DAG with concatenation merges, backpropagation through time, two
//! optimizers (SGD with Nesterov lookahead, Adam), inverted dropout, and
//! near-miss undersampling. Just enough to instantiate and train the three
//! prediction subnets.

mod graph;
mod optim;
mod train;

pub mod balance;
pub mod io;
pub mod nets;


pub use balance::near_miss_undersample;
pub use graph::{Activation, DenseLayer, Gate, LayerInfo, LstmLayer, Mat, Model, Node, NodeKind};
pub use nets::{build_breakage_net, build_contour_net, build_gradient_net, NetKind};
pub use optim::{Adam, OptimizerState, SgdNesterov};
pub use train::{train, TrainItem, TrainReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("shape mismatch: expected {expected} parameters, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("undersampling requires at least one positive sample")]
    NoPositives,
    #[error("corrupt model file: {0}")]
    CorruptFile(String),
    #[error("model format version mismatch: found '{found}'")]
    VersionMismatch { found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Power-of-two factor mapping features with the given peak magnitude into
/// roughly [0.5, 1]; stored on models as `io_scale` so inference applies the
/// same scale. Returns 1 for degenerate inputs.
pub fn feature_scale(max_abs: f64) -> f64 {
    if !(max_abs > 0.0) || !max_abs.is_finite() {
        return 1.0;
    }
    2f64.powi(-max_abs.log2().ceil() as i32)
}

/// Loss functions used by the subnets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Mse,
    Bce,
}

impl Loss {
    /// Loss value and gradient with respect to the prediction.
    pub fn eval(&self, pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
        assert_eq!(pred.len(), target.len());
        let n = pred.len() as f64;
        match self {
            Loss::Mse => {
                let mut loss = 0.0;
                let mut grad = Vec::with_capacity(pred.len());
                for (p, t) in pred.iter().zip(target) {
                    let d = p - t;
                    loss += d * d;
                    grad.push(2.0 * d / n);
                }
                (loss / n, grad)
            }
            Loss::Bce => {
                let mut loss = 0.0;
                let mut grad = Vec::with_capacity(pred.len());
                for (p, t) in pred.iter().zip(target) {
                    let p = p.clamp(1e-7, 1.0 - 1e-7);
                    loss -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
                    grad.push((p - t) / (p * (1.0 - p)) / n);
                }
                (loss / n, grad)
            }
        }
    }
}

/// Optimizer selection plus hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdNesterov { momentum: f64 },
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub fn sgd_default() -> Self {
        OptimizerKind::SgdNesterov { momentum: 0.9 }
    }

    pub fn adam_default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Training hyperparameters.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub optimizer: OptimizerKind,
    pub loss: Loss,
    pub seed: u64,
    /// Stop once the epoch loss drops below this value.
    pub target_loss: Option<f64>,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.batch_size < 1 {
            return Err(NeuralError::DimMismatch("batch_size must be >= 1".into()));
        }
        if self.lr < 0.0 || !self.lr.is_finite() {
            return Err(NeuralError::DimMismatch("lr must be non-negative".into()));
        }
        Ok(())
    }
}
