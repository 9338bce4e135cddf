use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{AutogradError, Graph, Var};
use crate::data::Sample;
use crate::model::{sample_loss, Binder, Emcdr, ModelError, Network, OutputMode, ParamStore};

use super::optim::{AdamParams, Optimizer, OptimizerKind};
use super::TrainingError;

named_enum!(LossKind { Bce => "bce", Mse => "mse" });

impl LossKind {
    pub fn for_mode(mode: OutputMode) -> Self {
        match mode {
            OutputMode::Logit => LossKind::Bce,
            OutputMode::Rating => LossKind::Mse,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub adam: AdamParams,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Group names (or `prefix*` patterns) held fixed.
    pub freeze_groups: Vec<String>,
    pub grad_diag: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Bce,
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            adam: AdamParams::default(),
            batch_size: 256,
            epochs: 10,
            seed: 0,
            freeze_groups: Vec::new(),
            grad_diag: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(TrainingError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(TrainingError::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn check_mode(&self, mode: OutputMode) -> Result<(), TrainingError> {
        if LossKind::for_mode(mode) != self.loss {
            return Err(TrainingError::Config(format!(
                "loss={} does not pair with output_mode={mode}",
                self.loss
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: Option<TrainConfig>,
    /// Mean training loss of each epoch, measured before each batch's update.
    pub epoch_losses: Vec<f64>,
    pub epochs: usize,
    pub samples: usize,
    pub steps: usize,
    pub wall_time_secs: f64,
    pub checkpoint: Option<String>,
    /// Per-epoch group gradient norms of the final batch, when requested.
    pub grad_norms: Vec<BTreeMap<String, f64>>,
    /// Reports of sub-stages for multi-stage models.
    pub stages: Vec<(String, TrainReport)>,
}

impl TrainReport {
    /// The report with wall-clock time zeroed, for reproducibility comparisons.
    pub fn without_timing(&self) -> TrainReport {
        let mut r = self.clone();
        r.wall_time_secs = 0.0;
        for (_, s) in &mut r.stages {
            *s = s.without_timing();
        }
        r
    }
}

/// A differentiable per-item loss over a parameter store.
pub trait Objective {
    type Item;
    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    fn loss<'p>(
        &'p self,
        g: &mut Graph<'p>,
        bind: &mut Binder<'p>,
        item: &Self::Item,
    ) -> Result<Var, ModelError>;
}

/// Supervised loss of a network on labelled samples.
pub struct Supervised<'n, N: Network + ?Sized>(pub &'n mut N);

impl<N: Network + ?Sized> Objective for Supervised<'_, N> {
    type Item = Sample;

    fn store(&self) -> &ParamStore {
        self.0.params()
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        self.0.params_mut()
    }

    fn loss<'p>(
        &'p self,
        g: &mut Graph<'p>,
        bind: &mut Binder<'p>,
        item: &Sample,
    ) -> Result<Var, ModelError> {
        let out = self.0.output(g, bind, item)?;
        sample_loss(g, out, item.signal, self.0.output_mode())
    }
}

/// User-factor regression of the embedding-and-mapping bridge.
pub struct BridgeFit<'n>(pub &'n mut Emcdr);

impl Objective for BridgeFit<'_> {
    type Item = usize;

    fn store(&self) -> &ParamStore {
        self.0.params()
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        self.0.params_mut()
    }

    fn loss<'p>(
        &'p self,
        g: &mut Graph<'p>,
        bind: &mut Binder<'p>,
        user: &usize,
    ) -> Result<Var, ModelError> {
        self.0.bridge_loss(g, bind, *user)
    }
}

fn is_divergence(e: &ModelError) -> bool {
    matches!(e, ModelError::Autograd(AutogradError::NonFinite { .. }))
}

/// Forward + backward of one item, gradients added into the store with
/// weight `w`. Returns the unscaled loss.
fn accumulate<O: Objective>(obj: &mut O, item: &O::Item, w: f64) -> Result<f64, ModelError> {
    let (loss, grads) = {
        let mut g = Graph::new();
        let mut bind = Binder::new(obj.store());
        let l = obj.loss(&mut g, &mut bind, item)?;
        let value = g.value(l).scalar();
        let scaled = g.scale(l, w)?;
        g.backward(scaled)?;
        (value, bind.collect(&mut g))
    };
    let store = obj.store_mut();
    store.mark_backward();
    for (id, buf) in grads {
        store.accumulate(id, &buf);
    }
    Ok(loss)
}

/// Mini-batch training of any objective: seeded shuffle per epoch, mean loss
/// per batch, one optimizer step per batch.
pub fn train_objective<O: Objective>(
    obj: &mut O,
    items: &[O::Item],
    cfg: &TrainConfig,
) -> Result<TrainReport, TrainingError> {
    cfg.validate()?;
    let start = Instant::now();
    let mut report = TrainReport {
        config: Some(cfg.clone()),
        samples: items.len(),
        ..TrainReport::default()
    };
    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, cfg.adam)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..items.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            obj.store_mut().clear_grads();
            let w = 1.0 / batch.len() as f64;
            for &i in batch {
                let l = match accumulate(obj, &items[i], w) {
                    Ok(l) => l,
                    Err(e) if is_divergence(&e) => {
                        return Err(diverged(report, epoch, start, e.to_string()));
                    }
                    Err(e) => return Err(e.into()),
                };
                if !l.is_finite() {
                    return Err(diverged(report, epoch, start, format!("loss {l}")));
                }
                total += l;
            }
            match opt.step(obj.store_mut()) {
                Err(TrainingError::NonFinite { group }) => {
                    return Err(diverged(report, epoch, start, format!("non-finite gradient in `{group}`")));
                }
                r => r?,
            }
            report.steps += 1;
        }
        report.epoch_losses.push(if items.is_empty() { 0.0 } else { total / items.len() as f64 });
        if cfg.grad_diag && !items.is_empty() {
            report.grad_norms.push(obj.store().grad_norms()?);
        }
        log::info!(
            "epoch {}/{}: loss {:.6}",
            epoch + 1,
            cfg.epochs,
            report.epoch_losses.last().unwrap()
        );
    }
    report.epochs = cfg.epochs;
    report.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(report)
}

fn diverged(mut report: TrainReport, epoch: usize, start: Instant, reason: String) -> TrainingError {
    report.epochs = epoch;
    report.wall_time_secs = start.elapsed().as_secs_f64();
    TrainingError::Divergence {
        epoch,
        reason,
        report: Box::new(report),
    }
}

/// Applies `cfg.freeze_groups` on top of the current trainable mask.
pub fn apply_freeze(store: &mut ParamStore, patterns: &[String]) -> Result<(), TrainingError> {
    for p in patterns {
        let ids = store.matching(p);
        if ids.is_empty() {
            return Err(TrainingError::Config(format!("freeze group `{p}` matches no parameters")));
        }
        for id in ids {
            store.set_trainable(id, false);
        }
    }
    Ok(())
}

/// Supervised training of a network on labelled samples.
pub fn train<N: Network + ?Sized>(
    net: &mut N,
    samples: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainReport, TrainingError> {
    cfg.check_mode(net.output_mode())?;
    apply_freeze(net.params_mut(), &cfg.freeze_groups)?;
    train_objective(&mut Supervised(net), samples, cfg)
}
