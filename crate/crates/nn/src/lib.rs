//! Neural Kemeny aggregation on a small reverse-mode autodiff engine.
//!
//! - [`autodiff`]: tape, differentiable 2-D ops and their backward rules.
//! - [`optim`]: Adam.
//! - [`transformer`]: tokenization, encoder, pointer-style decoder, rollouts.
//! - [`checkpoint`]: versioned JSON model files.
//! - [`ttest`]: one-sided paired t-test for baseline replacement.
//! - [`training`]: REINFORCE with a greedy rollout baseline.

pub mod autodiff;
pub mod checkpoint;
pub mod error;
pub mod optim;
pub mod params;
pub mod scalar;
pub mod tensor;
pub mod training;
pub mod transformer;
pub mod ttest;

pub use autodiff::{concat_cols, concat_rows, Gradients, Tape, Var};
pub use checkpoint::{load_checkpoint, load_checkpoint_for, save_checkpoint, Checkpoint, CheckpointMetadata};
pub use error::{AutodiffError, Error, Result};
pub use optim::{adam_step, AdamState};
pub use params::{Init, ParamGrads, ParamStore};
pub use scalar::Scalar;
pub use tensor::Tensor;
pub use training::{evaluate, reinforce_step, train, TrainConfig, TrainReport, TrainState, Trainer};
pub use transformer::{positional_encoding, tokenize, KemenyTransformer, ModelConfig, Policy, RolloutMode, Trajectory};
pub use ttest::{paired_t_test_one_sided, BaselineDecision, TTest};

/// Training precision.
pub type Tensor32 = Tensor<f32>;
/// Gradient-check precision.
pub type Tensor64 = Tensor<f64>;
pub type Model32 = KemenyTransformer<f32>;
pub type Model64 = KemenyTransformer<f64>;
pub type Checkpoint32 = Checkpoint<f32>;
pub type Trainer32 = Trainer<f32>;
