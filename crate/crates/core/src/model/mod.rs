//! Convolutional reward regressor `f(X, a) ∈ (0, 1)`.
//!
//! Layout: two 1-D convolutions over the column axis (each kernel spans every
//! input channel, width 3, zero padding keeps the width), ReLU after each,
//! average pooling over real columns (those with a nonzero mask row), then the
//! pooled vector is concatenated with a one-hot arm vector and fed through a
//! ReLU hidden layer and a sigmoid output unit.
//!
//! Training minimises mean squared error in reward space with plain SGD.

mod checkpoint;
mod gradcheck;
mod network;
mod train;

pub use checkpoint::Checkpoint;
pub use gradcheck::{gradient_check, gradient_check_with, GradientReport};
pub use network::{Architecture, RewardModel};
pub use train::{mse, train, Sample, TrainConfig, TrainOutcome};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("input is {rows}x{cols}, model expects {want_rows}x{want_cols}")]
    Shape {
        rows: usize,
        cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error("arm {arm} out of range for {arms} arms")]
    ArmOutOfRange { arm: usize, arms: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("target reward {0} outside [0, 1]")]
    TargetOutOfRange(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Scaler(#[from] crate::scaler::ScalerError),
}
