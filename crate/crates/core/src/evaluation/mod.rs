//! Ranking and rating metrics and the evaluation report.

mod metrics;
mod report;

pub use metrics::{auc, clamp_rating, mae_rmse};
pub use report::{evaluate, EvalReport, EvalRow, Metrics, SplitInfo};

use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}
