//! Losses, optimizers, the mini-batch loop and fine-tuning onto a new domain.

mod finetune;
mod loss;
mod optim;
mod trainer;

pub use finetune::{finetune, FINETUNE_GROUPS};
pub use loss::{bce_loss, bce_with_logits_loss, mse_loss, P_EPS};
pub use optim::{optimizer_step, AdamParams, Optimizer, OptimizerKind};
pub use trainer::{
    apply_freeze, train, train_objective, BridgeFit, LossKind, Objective, Supervised,
    TrainConfig, TrainReport,
};

use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("training configuration: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("non-finite gradient in parameter group `{group}`")]
    NonFinite { group: String },
    #[error("training diverged in epoch {epoch}: {reason}")]
    Divergence {
        epoch: usize,
        reason: String,
        report: Box<TrainReport>,
    },
}
