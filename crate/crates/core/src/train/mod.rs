//! Optimisation, evaluation and persistence.

pub mod checkpoint;
mod fit;
mod metrics;
mod optim;

pub use fit::{argmax, evaluate, fit, train_epoch, EpochStats, Evaluation, FitOutcome, TrainConfig};
pub use metrics::{ConfusionMatrix, Metrics, MetricsRow};
pub use optim::{AdamConfig, AdamState};
