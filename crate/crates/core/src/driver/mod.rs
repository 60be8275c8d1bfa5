//! Problem definitions, run configuration, training and studies.

pub mod config;
pub mod problems;
pub mod studies;
pub mod train;

pub use config::{LossKind, RunConfig};
pub use problems::Problem;
pub use studies::{
    fem_verify, lambda_sweep, mc_estimator_rate, mc_loss_rate, reference, reference_value, FemRow, LambdaRow, McStudy,
    Reference,
};
pub use train::{estimate_checkpoint, train, train_with, Certifier, LogRow, StopReason, TrainingLog};
