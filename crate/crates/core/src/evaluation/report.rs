use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::Sample;
use crate::model::{Network, OutputMode};

use super::metrics::{auc, clamp_rating, mae_rmse};
use super::MetricError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub auc: Option<f64>,
    pub mae: Option<f64>,
    pub rmse: Option<f64>,
    /// Why a metric is missing, e.g. a single-class slice.
    pub undefined: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub target: String,
    pub beta: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub variant: String,
    pub split: SplitInfo,
    pub metrics: Metrics,
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub variant: String,
    pub mode: OutputMode,
    pub split: SplitInfo,
    pub metrics: Metrics,
    pub samples: usize,
    /// One row per variant or β when run as a sweep.
    pub table: Vec<EvalRow>,
    /// Effective configuration, including seeds.
    pub config: BTreeMap<String, String>,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"))
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields are serializable")
    }

    /// Aligned columns: one line per table row, or the headline metrics.
    pub fn to_table(&self) -> String {
        let rows: Vec<EvalRow> = if self.table.is_empty() {
            vec![EvalRow {
                variant: self.variant.clone(),
                split: self.split.clone(),
                metrics: self.metrics.clone(),
                samples: self.samples,
            }]
        } else {
            self.table.clone()
        };
        let mut out = String::new();
        let metric_cols: &[&str] = match self.mode {
            OutputMode::Logit => &["auc"],
            OutputMode::Rating => &["mae", "rmse"],
        };
        write!(out, "{:<12} {:>6} {:>8}", "variant", "beta", "samples").unwrap();
        for c in metric_cols {
            write!(out, " {c:>10}").unwrap();
        }
        out.push('\n');
        for r in rows {
            write!(out, "{:<12} {:>6.2} {:>8}", r.variant, r.split.beta, r.samples).unwrap();
            for c in metric_cols {
                let v = match *c {
                    "auc" => r.metrics.auc,
                    "mae" => r.metrics.mae,
                    _ => r.metrics.rmse,
                };
                write!(out, " {:>10}", cell(v)).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Scores every sample and computes AUC (logit mode) or MAE/RMSE on
/// predictions clamped to [1, 5] (rating mode).
pub fn evaluate<N: Network + ?Sized>(net: &N, samples: &[Sample]) -> Result<Metrics, MetricError> {
    let mut preds = Vec::with_capacity(samples.len());
    for s in samples {
        preds.push(net.predict(s)?);
    }
    let truth: Vec<f64> = samples.iter().map(|s| s.signal).collect();
    let mut m = Metrics::default();
    match net.output_mode() {
        OutputMode::Logit => match auc(&preds, &truth) {
            Ok(a) => m.auc = Some(a),
            Err(MetricError::Undefined(why)) => m.undefined = Some(why),
            Err(e) => return Err(e),
        },
        OutputMode::Rating => {
            let clamped: Vec<f64> = preds.into_iter().map(clamp_rating).collect();
            match mae_rmse(&clamped, &truth) {
                Ok((mae, rmse)) => {
                    m.mae = Some(mae);
                    m.rmse = Some(rmse);
                }
                Err(MetricError::Undefined(why)) => m.undefined = Some(why),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(m)
}
