use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Tensor, Var};
use crate::data::{DomainRef, Sample, Token};

use super::bridge::{meta_bridge_predict, Bridge};
use super::config::{ModelConfig, OutputMode, UserTransfer};
use super::layers::{domain_level_ca, item_level_ca, AttnVars, Mlp, Step};
use super::params::{embedding, xavier, Binder, ParamId, ParamStore};
use super::{output_to_prediction, ModelError, Network, Sizes};

pub const CHANNEL_NAMES: [&str; 2] = ["seq", "side"];

/// Per-sample record of the attention weights and intermediate embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<Vec<f64>>,
    pub e_z: Vec<Tensor>,
    pub e_u: Tensor,
    /// Raw head output (logit or rating).
    pub output: f64,
    pub y_hat: f64,
    pub grad_norms: Option<BTreeMap<String, f64>>,
}

#[derive(Clone, Debug)]
struct ChannelIds {
    table: ParamId,
    step1: [ParamId; 3],
    step2: [ParamId; 3],
}

/// Graph handles of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardVars {
    pub alpha: Vec<Var>,
    pub beta: Vec<Var>,
    pub e_z: Vec<Var>,
    pub e_u: Var,
    pub e_v: Var,
    pub e_d: Var,
    pub output: Var,
}

/// Domain-aware cross-attention network.
#[derive(Clone, Debug)]
pub struct Dacdr {
    config: ModelConfig,
    params: ParamStore,
    channels: Vec<ChannelIds>,
    item_tgt: ParamId,
    domain: ParamId,
    encoder: Option<Mlp>,
    user_src: Option<ParamId>,
    bridge: Option<Bridge>,
    head: Mlp,
}

fn canonical_ids(tokens: &[Token], pad: usize) -> Vec<usize> {
    // Ids beyond the table are out-of-vocabulary and share the padding row.
    let mut ids: Vec<usize> = tokens
        .iter()
        .map(|t| match *t {
            Token::Id(i) if i < pad => i,
            _ => pad,
        })
        .collect();
    ids.sort_unstable();
    ids
}

impl Dacdr {
    pub fn new(config: ModelConfig, sizes: &Sizes, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = config.embed_dim;
        let dk = config.attn_dim;
        let mut p = ParamStore::new();
        let vocab = [sizes.src_items, sizes.categories];
        for (c, name) in CHANNEL_NAMES.iter().enumerate().take(config.channels) {
            // One extra row at the end for padding.
            p.insert(&format!("emb.{name}"), embedding(vocab[c] + 1, k, &mut rng))?;
        }
        p.insert("emb.item_tgt", embedding(sizes.tgt_items, k, &mut rng))?;
        p.insert("emb.domain", embedding(sizes.domains, k, &mut rng))?;
        for name in CHANNEL_NAMES.iter().take(config.channels) {
            for s in 1..=2 {
                p.insert(&format!("attn.{name}.{s}.q"), xavier(k, dk, &mut rng))?;
                p.insert(&format!("attn.{name}.{s}.k"), xavier(k, dk, &mut rng))?;
                let mut v = xavier(k, k, &mut rng);
                if s == 1 {
                    // Domain-level rows carry a factor αᵢ ≈ 1/n; this gain puts a
                    // full window back at input scale.
                    let gain = config.max_seq_len as f64;
                    v.data_mut().iter_mut().for_each(|x| *x *= gain);
                }
                p.insert(&format!("attn.{name}.{s}.v"), v)?;
            }
        }
        match config.user_transfer {
            UserTransfer::DomainEncoder => {
                let input = (config.channels + 1) * k;
                Mlp::register(&mut p, "encoder", input, &config.encoder_hidden, k, &mut rng)?;
            }
            UserTransfer::BridgeFixed | UserTransfer::BridgePersonalized => {
                p.insert("emb.user_src", embedding(sizes.users, k, &mut rng))?;
                let cond = (config.user_transfer == UserTransfer::BridgePersonalized).then_some(k);
                Bridge::register(&mut p, "bridge", k, cond)?;
            }
        }
        let head_in = (config.channels + 3) * k;
        Mlp::register(&mut p, "head", head_in, &config.head_hidden, 1, &mut rng)?;
        Self::from_params(config, p)
    }

    /// Rebuilds the network around an existing store (e.g. a checkpoint).
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self, ModelError> {
        config.validate()?;
        let mut channels = Vec::new();
        for name in CHANNEL_NAMES.iter().take(config.channels) {
            let step = |s: usize| -> Result<[ParamId; 3], ModelError> {
                Ok([
                    params.require(&format!("attn.{name}.{s}.q"))?,
                    params.require(&format!("attn.{name}.{s}.k"))?,
                    params.require(&format!("attn.{name}.{s}.v"))?,
                ])
            };
            channels.push(ChannelIds {
                table: params.require(&format!("emb.{name}"))?,
                step1: step(1)?,
                step2: step(2)?,
            });
        }
        let (encoder, user_src, bridge) = match config.user_transfer {
            UserTransfer::DomainEncoder => (Some(Mlp::attach(&params, "encoder")?), None, None),
            _ => {
                let b = Bridge::attach(&params, "bridge")?;
                let want = config.user_transfer == UserTransfer::BridgePersonalized;
                if b.is_personalized() != want {
                    return Err(ModelError::Config(format!(
                        "bridge parameters do not match user_transfer={}",
                        config.user_transfer
                    )));
                }
                (None, Some(params.require("emb.user_src")?), Some(b))
            }
        };
        let head = Mlp::attach(&params, "head")?;
        let k = config.embed_dim;
        let head_w = params.tensor(head.output_layer().0);
        if head_w.cols() != 1 || params.tensor(params.require("emb.item_tgt")?).cols() != k {
            return Err(ModelError::Config("parameter shapes do not match embed_dim".into()));
        }
        Ok(Self {
            item_tgt: params.require("emb.item_tgt")?,
            domain: params.require("emb.domain")?,
            config,
            params,
            channels,
            encoder,
            user_src,
            bridge,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn into_params(self) -> ParamStore {
        self.params
    }

    pub fn head(&self) -> &Mlp {
        &self.head
    }

    /// Appends freshly initialised target-item rows and one domain row; returns
    /// the index of the new domain.
    pub fn extend_target(&mut self, new_items: usize, seed: u64) -> Result<usize, ModelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = self.config.embed_dim;
        self.params
            .tensor_mut(self.item_tgt)
            .append_rows(&embedding(new_items, k, &mut rng))?;
        let d = self.params.tensor_mut(self.domain);
        d.append_rows(&embedding(1, k, &mut rng))?;
        Ok(d.rows() - 1)
    }

    fn step(&self, enabled: bool) -> Step {
        if enabled {
            Step::Attend(self.config.attention)
        } else {
            Step::Bypass
        }
    }

    /// Builds the forward graph of one target-domain sample.
    pub fn forward_vars<'p>(
        &'p self,
        g: &mut Graph<'p>,
        bind: &mut Binder<'p>,
        sample: &Sample,
    ) -> Result<ForwardVars, ModelError> {
        let DomainRef::Target(d) = sample.domain else {
            return Err(ModelError::Argument("DACDR scores target-domain samples only".into()));
        };
        let domain = bind.var(g, self.domain);
        let e_d = g.lookup(domain, &[d])?;
        let items = bind.var(g, self.item_tgt);
        let e_v = g.lookup(items, &[sample.item])?;
        let seqs = [&sample.context.behavior_seq, &sample.context.side_seq];
        let (da, ia) = (
            self.step(self.config.ablation.domain_level()),
            self.step(self.config.ablation.item_level()),
        );
        let (mut alpha, mut beta, mut e_z) = (Vec::new(), Vec::new(), Vec::new());
        for (c, ch) in self.channels.iter().enumerate() {
            let table = bind.var(g, ch.table);
            let pad = self.params.tensor(ch.table).rows() - 1;
            let ids = canonical_ids(seqs[c], pad);
            let x = g.lookup(table, &ids)?;
            let w1 = AttnVars {
                q: bind.var(g, ch.step1[0]),
                k: bind.var(g, ch.step1[1]),
                v: bind.var(g, ch.step1[2]),
            };
            let w2 = AttnVars {
                q: bind.var(g, ch.step2[0]),
                k: bind.var(g, ch.step2[1]),
                v: bind.var(g, ch.step2[2]),
            };
            let (e1, a) = domain_level_ca(g, x, e_d, &w1, da)?;
            let (z, b) = item_level_ca(g, e1, e_v, &w2, ia)?;
            alpha.push(a);
            beta.push(b);
            e_z.push(z);
        }
        let e_u = match (&self.encoder, &self.bridge, self.user_src) {
            (Some(enc), _, _) => {
                let mut parts = e_z.clone();
                parts.push(e_d);
                let x = g.concat_cols(&parts)?;
                enc.forward(g, bind, x)?
            }
            (None, Some(br), Some(users)) => {
                let table = bind.var(g, users);
                let e_s = g.lookup(table, &[sample.user])?;
                let bv = br.bind(g, bind, Some(e_z[0]))?;
                meta_bridge_predict(g, e_s, &bv)?
            }
            _ => unreachable!("validated in from_params"),
        };
        let mut parts = vec![e_u];
        parts.extend_from_slice(&e_z);
        parts.push(e_v);
        parts.push(e_d);
        let h = g.concat_cols(&parts)?;
        let output = self.head.forward(g, bind, h)?;
        Ok(ForwardVars {
            alpha,
            beta,
            e_z,
            e_u,
            e_v,
            e_d,
            output,
        })
    }

    fn trace_of(&self, g: &Graph<'_>, v: &ForwardVars) -> ForwardTrace {
        let output = g.value(v.output).scalar();
        ForwardTrace {
            alpha: v.alpha.iter().map(|&a| g.value(a).data().to_vec()).collect(),
            beta: v.beta.iter().map(|&b| g.value(b).data().to_vec()).collect(),
            e_z: v.e_z.iter().map(|&z| g.value(z).clone()).collect(),
            e_u: g.value(v.e_u).clone(),
            output,
            y_hat: output_to_prediction(self.config.output_mode, output),
            grad_norms: None,
        }
    }

    pub fn forward_sample(&self, sample: &Sample) -> Result<ForwardTrace, ModelError> {
        let mut g = Graph::new();
        let mut bind = Binder::new(&self.params);
        let v = self.forward_vars(&mut g, &mut bind, sample)?;
        Ok(self.trace_of(&g, &v))
    }

    /// Forward pass plus one backward on the sample loss, recording the L2
    /// norm of every bound group's gradient and the adjoint norm of each head
    /// input (`user`, channel names, `item`, `domain`).
    pub fn forward_with_diagnostics(
        &self,
        sample: &Sample,
    ) -> Result<(ForwardTrace, BTreeMap<String, f64>), ModelError> {
        let mut g = Graph::new();
        let mut bind = Binder::new(&self.params);
        let v = self.forward_vars(&mut g, &mut bind, sample)?;
        let loss = sample_loss(&mut g, v.output, sample.signal, self.config.output_mode)?;
        g.backward(loss)?;
        let mut trace = self.trace_of(&g, &v);
        let mut norms = BTreeMap::new();
        for id in self.params.ids() {
            norms.insert(self.params.name(id).to_string(), 0.0);
        }
        for (id, var) in bind.bound() {
            if self.params.is_trainable(id) {
                if let Some(buf) = g.grad(var) {
                    let n = buf.to_dense(g.value(var).len()).iter().map(|x| x * x).sum::<f64>();
                    norms.insert(self.params.name(id).to_string(), n.sqrt());
                }
            }
        }
        trace.grad_norms = Some(norms);
        let norm = |var: Var| {
            g.adjoint(var)
                .map_or(0.0, |a| a.iter().map(|x| x * x).sum::<f64>().sqrt())
        };
        let mut inputs = BTreeMap::new();
        inputs.insert("user".to_string(), norm(v.e_u));
        for (c, &z) in v.e_z.iter().enumerate() {
            inputs.insert(CHANNEL_NAMES[c].to_string(), norm(z));
        }
        inputs.insert("item".to_string(), norm(v.e_v));
        inputs.insert("domain".to_string(), norm(v.e_d));
        Ok((trace, inputs))
    }

    /// Accumulates gradients of the summed batch loss and returns the L2 norm
    /// of each group's accumulated gradient.
    pub fn gradient_norm_report(
        &mut self,
        batch: &[Sample],
    ) -> Result<BTreeMap<String, f64>, ModelError> {
        self.params.clear_grads();
        for s in batch {
            accumulate_sample_grad(self, s, 1.0)?;
        }
        self.params.grad_norms()
    }
}

/// Per-sample loss on the raw output: BCE from logits, or squared error.
pub fn sample_loss(
    g: &mut Graph<'_>,
    output: Var,
    label: f64,
    mode: OutputMode,
) -> Result<Var, ModelError> {
    match mode {
        OutputMode::Logit => {
            if label != 0.0 && label != 1.0 {
                return Err(ModelError::Argument(format!("BCE label must be 0 or 1, got {label}")));
            }
            Ok(g.bce_with_logits(output, label)?)
        }
        OutputMode::Rating => {
            let y = g.constant_owned(Tensor::row_vector(&[label]));
            let d = g.sub(output, y)?;
            let sq = g.hadamard(d, d)?;
            Ok(g.sum(sq)?)
        }
    }
}

/// Runs forward + backward for one sample, scaling its loss by `weight`, and
/// adds the gradients into the network's store. Returns the unscaled loss.
pub fn accumulate_sample_grad<N: Network + ?Sized>(
    net: &mut N,
    sample: &Sample,
    weight: f64,
) -> Result<f64, ModelError> {
    let (loss, grads) = {
        let mut g = Graph::new();
        let mut bind = Binder::new(net.params());
        let out = net.output(&mut g, &mut bind, sample)?;
        let loss = sample_loss(&mut g, out, sample.signal, net.output_mode())?;
        let value = g.value(loss).scalar();
        let scaled = g.scale(loss, weight)?;
        g.backward(scaled)?;
        (value, bind.collect(&mut g))
    };
    let store = net.params_mut();
    store.mark_backward();
    for (id, buf) in grads {
        store.accumulate(id, &buf);
    }
    Ok(loss)
}

impl Network for Dacdr {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn output_mode(&self) -> OutputMode {
        self.config.output_mode
    }

    fn output<'p>(
        &'p self,
        g: &mut Graph<'p>,
        bind: &mut Binder<'p>,
        sample: &Sample,
    ) -> Result<Var, ModelError> {
        Ok(self.forward_vars(g, bind, sample)?.output)
    }

    fn set_output_bias(&mut self, value: f64) {
        let (_, b) = self.head.output_layer();
        self.params.tensor_mut(b).data_mut()[0] = value;
    }
}
