//! The domain-aware cross-attention network, its ablations, the user-bridge
//! variant, comparison baselines and the checkpoint container.

mod baselines;
mod bridge;
mod checkpoint;
mod config;
mod gradcheck;
mod layers;
mod network;
mod params;

pub use baselines::{Cmf, Dnn, Emcdr, EmcdrStage};
pub use bridge::{identity_w1, identity_w2, meta_bridge_predict, Bridge, BridgeVars};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{Ablation, AttentionSemantics, ModelConfig, OutputMode, UserTransfer};
pub use gradcheck::{
    composed_suite, fixture_samples, fixture_sizes, mean_loss, network_grad_check, randomize_params,
    GroupCheck, NetworkCheck,
};
pub use layers::{domain_level_ca, item_level_ca, position_scores, position_weights, AttnVars, Mlp, Step};
pub use network::{
    accumulate_sample_grad, sample_loss, Dacdr, ForwardTrace, ForwardVars, CHANNEL_NAMES,
};
pub use params::{embedding, uniform, xavier, Binder, ParamId, ParamStore};

use thiserror::Error;

use crate::autograd::{sigmoid, AutogradError, Graph, Var};
use crate::data::{Sample, Vocabularies};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autograd(#[from] AutogradError),
    #[error("model configuration: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid state: {0}")]
    State(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Table sizes a model is built for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sizes {
    pub users: usize,
    pub src_items: usize,
    pub tgt_items: usize,
    pub categories: usize,
    pub domains: usize,
}

impl Sizes {
    pub fn of(v: &Vocabularies) -> Self {
        Self {
            users: v.users.len(),
            src_items: v.src_items.len(),
            tgt_items: v.tgt_items.len(),
            categories: v.categories.len(),
            domains: v.domains.len(),
        }
    }
}

/// Sigmoid of a logit, or the raw rating.
pub fn output_to_prediction(mode: OutputMode, output: f64) -> f64 {
    match mode {
        OutputMode::Logit => sigmoid(output),
        OutputMode::Rating => output,
    }
}

/// A model that scores one sample through a differentiable graph.
pub trait Network {
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    fn output_mode(&self) -> OutputMode;

    /// Raw 1×1 output: a logit, or a rating.
    fn output<'p>(
        &'p self,
        g: &mut Graph<'p>,
        bind: &mut Binder<'p>,
        sample: &Sample,
    ) -> Result<Var, ModelError>;

    /// Sets the additive output offset, e.g. to the mean training rating.
    fn set_output_bias(&mut self, value: f64);

    /// ŷ: a probability in logit mode, the raw score in rating mode.
    fn predict(&self, sample: &Sample) -> Result<f64, ModelError> {
        let mut g = Graph::new();
        let mut bind = Binder::new(self.params());
        let out = self.output(&mut g, &mut bind, sample)?;
        Ok(output_to_prediction(self.output_mode(), g.value(out).scalar()))
    }
}
