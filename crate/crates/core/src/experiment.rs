//! End-to-end glue: variants, cold-start sample preparation, fitting and
//! scoring.

use std::collections::BTreeMap;

use crate::autograd::{Graph, Var};
use crate::data::{
    assemble_samples, cold_start_split, source_samples, ColdStartSplit, DataError, Dataset,
    Sample, SampleSets, Schema, SourceHistory,
};
use crate::evaluation::{evaluate, EvalRow, MetricError, Metrics, SplitInfo};
use crate::model::{
    Ablation, Binder, Cmf, Dacdr, Dnn, Emcdr, EmcdrStage, ModelConfig, ModelError, Network,
    OutputMode, ParamStore, Sizes,
};
use crate::training::{
    train, train_objective, BridgeFit, TrainConfig, TrainReport, TrainingError,
};

named_enum!(
    Variant {
        Dacdr => "dacdr",
        NoDa => "no_da",
        NoIa => "no_ia",
        NoDaIa => "no_da_ia",
        DnnSingle => "dnn_single",
        DnnMulti => "dnn_multi",
        CmfLite => "cmf_lite",
        EmcdrLite => "emcdr_lite",
    }
);

impl Variant {
    pub const ABLATIONS: [Variant; 4] = [Variant::Dacdr, Variant::NoDa, Variant::NoIa, Variant::NoDaIa];

    /// The attention ablation of the DACDR family, `None` for baselines.
    pub fn ablation(self) -> Option<Ablation> {
        match self {
            Variant::Dacdr => Some(Ablation::Full),
            Variant::NoDa => Some(Ablation::NoDa),
            Variant::NoIa => Some(Ablation::NoIa),
            Variant::NoDaIa => Some(Ablation::NoDaIa),
            _ => None,
        }
    }
}

/// Any trained variant behind one interface.
#[derive(Clone, Debug)]
pub enum AnyModel {
    Dacdr(Dacdr),
    Dnn(Dnn),
    Cmf(Cmf),
    Emcdr(Emcdr),
}

macro_rules! each_model {
    ($self:expr, $m:ident => $body:expr) => {
        match $self {
            AnyModel::Dacdr($m) => $body,
            AnyModel::Dnn($m) => $body,
            AnyModel::Cmf($m) => $body,
            AnyModel::Emcdr($m) => $body,
        }
    };
}

impl Network for AnyModel {
    fn params(&self) -> &ParamStore {
        each_model!(self, m => m.params())
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        each_model!(self, m => m.params_mut())
    }

    fn output_mode(&self) -> OutputMode {
        each_model!(self, m => m.output_mode())
    }

    fn output<'p>(
        &'p self,
        g: &mut Graph<'p>,
        bind: &mut Binder<'p>,
        sample: &Sample,
    ) -> Result<Var, ModelError> {
        each_model!(self, m => m.output(g, bind, sample))
    }

    fn set_output_bias(&mut self, value: f64) {
        each_model!(self, m => m.set_output_bias(value))
    }
}

impl AnyModel {
    pub fn new(variant: Variant, cfg: &ModelConfig, sizes: &Sizes, seed: u64) -> Result<Self, ModelError> {
        let k = cfg.embed_dim;
        let mode = cfg.output_mode;
        Ok(match variant {
            v if v.ablation().is_some() => {
                let cfg = ModelConfig {
                    ablation: v.ablation().unwrap(),
                    ..cfg.clone()
                };
                AnyModel::Dacdr(Dacdr::new(cfg, sizes, seed)?)
            }
            Variant::DnnSingle => AnyModel::Dnn(Dnn::new(false, k, &cfg.head_hidden, mode, sizes, seed)?),
            Variant::DnnMulti => AnyModel::Dnn(Dnn::new(true, k, &cfg.head_hidden, mode, sizes, seed)?),
            Variant::CmfLite => AnyModel::Cmf(Cmf::new(k, mode, sizes, seed)?),
            _ => AnyModel::Emcdr(Emcdr::new(k, mode, sizes, seed)?),
        })
    }

    /// Rebuilds a variant around stored parameters.
    pub fn from_params(variant: Variant, cfg: &ModelConfig, params: ParamStore) -> Result<Self, ModelError> {
        let mode = cfg.output_mode;
        Ok(match variant {
            v if v.ablation().is_some() => {
                let cfg = ModelConfig {
                    ablation: v.ablation().unwrap(),
                    ..cfg.clone()
                };
                AnyModel::Dacdr(Dacdr::from_params(cfg, params)?)
            }
            Variant::DnnSingle => AnyModel::Dnn(Dnn::from_params(false, mode, params)?),
            Variant::DnnMulti => AnyModel::Dnn(Dnn::from_params(true, mode, params)?),
            Variant::CmfLite => AnyModel::Cmf(Cmf::from_params(mode, params)?),
            _ => AnyModel::Emcdr(Emcdr::from_params(mode, params)?),
        })
    }

    pub fn as_dacdr_mut(&mut self) -> Option<&mut Dacdr> {
        match self {
            AnyModel::Dacdr(m) => Some(m),
            _ => None,
        }
    }

    pub fn as_dacdr(&self) -> Option<&Dacdr> {
        match self {
            AnyModel::Dacdr(m) => Some(m),
            _ => None,
        }
    }
}

/// A dataset after the cold-start split of one target domain.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub data: Dataset,
    pub target: usize,
    pub split: ColdStartSplit,
    pub sets: SampleSets,
    /// Source-domain interactions, for baselines that also fit the source.
    pub source: Vec<Sample>,
}

impl Prepared {
    pub fn split_info(&self) -> SplitInfo {
        SplitInfo {
            target: self.data.vocab.domains.id(self.target).to_string(),
            beta: self.split.beta,
            seed: self.split.seed,
        }
    }

    pub fn sizes(&self) -> Sizes {
        Sizes::of(&self.data.vocab)
    }
}

pub fn prepare(
    data: Dataset,
    target: usize,
    beta: f64,
    seed: u64,
    max_len: usize,
    causal: bool,
) -> Result<Prepared, DataError> {
    if target >= data.vocab.domains.len() {
        return Err(DataError::Argument(format!("no target domain with index {target}")));
    }
    let split = cold_start_split(&data, target, beta, seed)?;
    let history = SourceHistory::new(&data);
    let sets = assemble_samples(&data, &split, &history, max_len, causal);
    let source = source_samples(&data);
    Ok(Prepared {
        data,
        target,
        split,
        sets,
        source,
    })
}

pub fn schema_for(mode: OutputMode) -> Schema {
    match mode {
        OutputMode::Logit => Schema::Logit,
        OutputMode::Rating => Schema::Rating,
    }
}

fn mean_signal(samples: &[Sample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|s| s.signal).sum::<f64>() / samples.len() as f64
}

/// Trains `model` on the prepared split. Rating models start from the mean
/// training rating as output offset.
pub fn fit(model: &mut AnyModel, prep: &Prepared, cfg: &TrainConfig) -> Result<TrainReport, TrainingError> {
    cfg.check_mode(model.output_mode())?;
    if model.output_mode() == OutputMode::Rating {
        model.set_output_bias(mean_signal(&prep.sets.train));
    }
    let with_source = || {
        let mut all = prep.source.clone();
        all.extend(prep.sets.train.iter().cloned());
        all
    };
    match model {
        AnyModel::Dacdr(m) => train(m, &prep.sets.train, cfg),
        AnyModel::Dnn(m) if !m.is_multi() => train(m, &prep.sets.train, cfg),
        AnyModel::Dnn(m) => train(m, &with_source(), cfg),
        AnyModel::Cmf(m) => train(m, &with_source(), cfg),
        AnyModel::Emcdr(m) => {
            let mut stages = Vec::new();
            m.set_stage(EmcdrStage::SourceMf)?;
            stages.push(("source_mf".to_string(), train(m, &prep.source, cfg)?));
            m.set_stage(EmcdrStage::TargetMf)?;
            let target = train(m, &prep.sets.train, cfg)?;
            stages.push(("target_mf".to_string(), target.clone()));
            m.set_stage(EmcdrStage::Bridge)?;
            let users: Vec<usize> = prep.split.train_users.iter().copied().collect();
            stages.push(("bridge".to_string(), train_objective(&mut BridgeFit(m), &users, cfg)?));
            m.params_mut().set_all_trainable(true);
            let mut report = target;
            report.steps = stages.iter().map(|(_, r)| r.steps).sum();
            report.wall_time_secs = stages.iter().map(|(_, r)| r.wall_time_secs).sum();
            report.stages = stages;
            Ok(report)
        }
    }
}

/// Outcome of training and scoring one variant.
#[derive(Clone, Debug)]
pub struct VariantRun {
    pub variant: Variant,
    pub model: AnyModel,
    pub report: TrainReport,
    pub train_metrics: Metrics,
    pub test_metrics: Metrics,
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

pub fn run_variant(
    prep: &Prepared,
    variant: Variant,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    model_seed: u64,
) -> Result<VariantRun, ExperimentError> {
    let mut model = AnyModel::new(variant, model_cfg, &prep.sizes(), model_seed)?;
    let report = fit(&mut model, prep, train_cfg)?;
    let train_metrics = evaluate(&model, &prep.sets.train)?;
    let test_metrics = evaluate(&model, &prep.sets.test)?;
    Ok(VariantRun {
        variant,
        model,
        report,
        train_metrics,
        test_metrics,
    })
}

/// Trains every listed variant on the same split; one table row each.
pub fn sweep_variants(
    prep: &Prepared,
    variants: &[Variant],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    model_seed: u64,
) -> Result<Vec<EvalRow>, ExperimentError> {
    variants
        .iter()
        .map(|&v| {
            let run = run_variant(prep, v, model_cfg, train_cfg, model_seed)?;
            Ok(EvalRow {
                variant: v.name().to_string(),
                split: prep.split_info(),
                metrics: run.test_metrics,
                samples: prep.sets.test.len(),
            })
        })
        .collect()
}

/// Mean over seeds of each variant's headline test metric (AUC or MAE).
pub fn headline(m: &Metrics) -> Option<f64> {
    m.auc.or(m.mae)
}

pub fn mean_by_variant(rows: &[EvalRow]) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in rows {
        if let Some(v) = headline(&r.metrics) {
            let e = acc.entry(r.variant.clone()).or_default();
            e.0 += v;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}
