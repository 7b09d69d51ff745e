//! Synthetic self-supervised training for comparing decorrelation losses.
//!
//! A Gaussian-cluster task produces twin views of the same inputs, a small
//! ReLU network maps them to embeddings, and one of the `fastdecor` losses
//! drives plain SGD with momentum. The backbone is then scored with a linear
//! probe.

pub mod ablation;
pub mod data;
pub mod error;
pub mod mlp;
pub mod probe;
pub mod train;

pub use data::{generate_twin_batch, SyntheticTask, SyntheticTaskSpec, TwinBatch};
pub use error::{Result, TrainError};
pub use mlp::{Mlp, MlpSpec, Sgd};
pub use probe::linear_probe;
pub use train::{mean_feature_std, train, EpochRecord, LossKind, TrainConfig, TrainLog, TrainOutcome};
