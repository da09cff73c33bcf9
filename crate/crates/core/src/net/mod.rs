//! Two-branch convolutional estimator with hand-written backpropagation.

pub mod layers;
pub mod loss;
pub mod model;
mod scalar;
pub mod train;

pub use layers::PoolKind;
pub use loss::{consistency_weights, loss, LossBreakdown, LossWeights};
pub use model::{init_network, ForwardCache, NetworkConfig, NetworkParams, Outputs};
pub use scalar::Scalar;
pub use train::{
    ablate_consistency, sgd_step, train, AblationReport, AblationRun, Checkpoint, EpochLog, Improvement,
    Prediction, TrainConfig, TrainOutputs, TrainResult,
};
