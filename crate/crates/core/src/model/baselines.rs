//! Comparison models: single- and multi-domain DNNs, collective MF and a
//! three-step embedding-and-mapping pipeline.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Tensor, Var};
use crate::data::{DomainRef, Sample};

use super::bridge::{meta_bridge_predict, Bridge};
use super::config::OutputMode;
use super::layers::Mlp;
use super::params::{embedding, Binder, ParamId, ParamStore};
use super::{ModelError, Network, Sizes};

/// `h(concat[e_u, e_v, e_d])`. The multi-domain form shares the user table
/// across domains and owns a source item table plus a source domain row
/// (the last row of `emb.domain`).
#[derive(Clone, Debug)]
pub struct Dnn {
    multi: bool,
    mode: OutputMode,
    params: ParamStore,
    user: ParamId,
    item_src: Option<ParamId>,
    item_tgt: ParamId,
    domain: ParamId,
    head: Mlp,
}

impl Dnn {
    pub fn new(
        multi: bool,
        k: usize,
        hidden: &[usize],
        mode: OutputMode,
        sizes: &Sizes,
        seed: u64,
    ) -> Result<Self, ModelError> {
        if k == 0 {
            return Err(ModelError::Config("embed_dim must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        p.insert("emb.user", embedding(sizes.users, k, &mut rng))?;
        if multi {
            p.insert("emb.item_src", embedding(sizes.src_items, k, &mut rng))?;
        }
        p.insert("emb.item_tgt", embedding(sizes.tgt_items, k, &mut rng))?;
        p.insert("emb.domain", embedding(sizes.domains + multi as usize, k, &mut rng))?;
        Mlp::register(&mut p, "head", 3 * k, hidden, 1, &mut rng)?;
        Self::from_params(multi, mode, p)
    }

    pub fn from_params(multi: bool, mode: OutputMode, params: ParamStore) -> Result<Self, ModelError> {
        Ok(Self {
            multi,
            mode,
            user: params.require("emb.user")?,
            item_src: if multi { Some(params.require("emb.item_src")?) } else { None },
            item_tgt: params.require("emb.item_tgt")?,
            domain: params.require("emb.domain")?,
            head: Mlp::attach(&params, "head")?,
            params,
        })
    }

    pub fn is_multi(&self) -> bool {
        self.multi
    }
}

impl Network for Dnn {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn output_mode(&self) -> OutputMode {
        self.mode
    }

    fn output<'p>(
        &'p self,
        g: &mut Graph<'p>,
        bind: &mut Binder<'p>,
        sample: &Sample,
    ) -> Result<Var, ModelError> {
        let (items, drow) = match (sample.domain, self.item_src) {
            (DomainRef::Target(d), _) => (self.item_tgt, d),
            (DomainRef::Source, Some(src)) => {
                (src, self.params.tensor(self.domain).rows() - 1)
            }
            (DomainRef::Source, None) => {
                return Err(ModelError::Argument(
                    "single-domain DNN has no source item table".into(),
                ))
            }
        };
        let u = bind.var(g, self.user);
        let e_u = g.lookup(u, &[sample.user])?;
        let t = bind.var(g, items);
        let e_v = g.lookup(t, &[sample.item])?;
        let d = bind.var(g, self.domain);
        let e_d = g.lookup(d, &[drow])?;
        let x = g.concat_cols(&[e_u, e_v, e_d])?;
        self.head.forward(g, bind, x)
    }

    fn set_output_bias(&mut self, value: f64) {
        let (_, b) = self.head.output_layer();
        self.params.tensor_mut(b).data_mut()[0] = value;
    }
}

/// `⟨p_u, q_i⟩ + b_i + b_domain` with `p_u` shared by every domain.
#[derive(Clone, Debug)]
pub struct Cmf {
    mode: OutputMode,
    params: ParamStore,
    user: ParamId,
    items: [ParamId; 2],
    item_bias: [ParamId; 2],
    /// Target rows first, source row last.
    domain_bias: ParamId,
}

impl Cmf {
    pub fn new(k: usize, mode: OutputMode, sizes: &Sizes, seed: u64) -> Result<Self, ModelError> {
        if k == 0 {
            return Err(ModelError::Config("embed_dim must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        p.insert("mf.user", embedding(sizes.users, k, &mut rng))?;
        p.insert("mf.item_src", embedding(sizes.src_items, k, &mut rng))?;
        p.insert("mf.item_tgt", embedding(sizes.tgt_items, k, &mut rng))?;
        p.insert("mf.bias_src", Tensor::zeros(sizes.src_items, 1))?;
        p.insert("mf.bias_tgt", Tensor::zeros(sizes.tgt_items, 1))?;
        p.insert("mf.bias_domain", Tensor::zeros(sizes.domains + 1, 1))?;
        Self::from_params(mode, p)
    }

    pub fn from_params(mode: OutputMode, params: ParamStore) -> Result<Self, ModelError> {
        Ok(Self {
            mode,
            user: params.require("mf.user")?,
            items: [params.require("mf.item_src")?, params.require("mf.item_tgt")?],
            item_bias: [params.require("mf.bias_src")?, params.require("mf.bias_tgt")?],
            domain_bias: params.require("mf.bias_domain")?,
            params,
        })
    }
}

/// `⟨p, q⟩ + b_item + b_global` on graph values.
fn mf_score<'p>(
    g: &mut Graph<'p>,
    p: Var,
    q: Var,
    item_bias: Var,
    global_bias: Var,
) -> Result<Var, ModelError> {
    let qt = g.transpose(q)?;
    let dot = g.matmul(p, qt)?;
    let s = g.add(dot, item_bias)?;
    Ok(g.add(s, global_bias)?)
}

impl Network for Cmf {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn output_mode(&self) -> OutputMode {
        self.mode
    }

    fn output<'p>(
        &'p self,
        g: &mut Graph<'p>,
        bind: &mut Binder<'p>,
        sample: &Sample,
    ) -> Result<Var, ModelError> {
        let (side, drow) = match sample.domain {
            DomainRef::Source => (0, self.params.tensor(self.domain_bias).rows() - 1),
            DomainRef::Target(d) => (1, d),
        };
        let u = bind.var(g, self.user);
        let p = g.lookup(u, &[sample.user])?;
        let t = bind.var(g, self.items[side]);
        let q = g.lookup(t, &[sample.item])?;
        let bt = bind.var(g, self.item_bias[side]);
        let bi = g.lookup(bt, &[sample.item])?;
        let dt = bind.var(g, self.domain_bias);
        let bd = g.lookup(dt, &[drow])?;
        mf_score(g, p, q, bi, bd)
    }

    fn set_output_bias(&mut self, value: f64) {
        self.params.tensor_mut(self.domain_bias).data_mut().fill(value);
    }
}

/// Which stage of the embedding-and-mapping pipeline is being fitted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmcdrStage {
    SourceMf,
    TargetMf,
    Bridge,
}

impl EmcdrStage {
    pub fn groups(self) -> &'static [&'static str] {
        match self {
            EmcdrStage::SourceMf => &["src.*"],
            EmcdrStage::TargetMf => &["tgt.*"],
            EmcdrStage::Bridge => &["bridge.*"],
        }
    }
}

/// Separate source and target MF models joined by a bridge fitted from
/// source to target user factors on overlapping training users. Target
/// predictions score `f(p_u^s)` against the target item factors.
#[derive(Clone, Debug)]
pub struct Emcdr {
    mode: OutputMode,
    params: ParamStore,
    user: [ParamId; 2],
    items: [ParamId; 2],
    item_bias: [ParamId; 2],
    /// Source: 1 row; target: one row per domain.
    bias: [ParamId; 2],
    bridge: Bridge,
    stage: EmcdrStage,
}

impl Emcdr {
    pub fn new(k: usize, mode: OutputMode, sizes: &Sizes, seed: u64) -> Result<Self, ModelError> {
        if k == 0 {
            return Err(ModelError::Config("embed_dim must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        p.insert("src.user", embedding(sizes.users, k, &mut rng))?;
        p.insert("src.item", embedding(sizes.src_items, k, &mut rng))?;
        p.insert("src.item_bias", Tensor::zeros(sizes.src_items, 1))?;
        p.insert("src.bias", Tensor::zeros(1, 1))?;
        p.insert("tgt.user", embedding(sizes.users, k, &mut rng))?;
        p.insert("tgt.item", embedding(sizes.tgt_items, k, &mut rng))?;
        p.insert("tgt.item_bias", Tensor::zeros(sizes.tgt_items, 1))?;
        p.insert("tgt.bias", Tensor::zeros(sizes.domains, 1))?;
        Bridge::register(&mut p, "bridge", k, None)?;
        Self::from_params(mode, p)
    }

    pub fn from_params(mode: OutputMode, params: ParamStore) -> Result<Self, ModelError> {
        Ok(Self {
            mode,
            user: [params.require("src.user")?, params.require("tgt.user")?],
            items: [params.require("src.item")?, params.require("tgt.item")?],
            item_bias: [params.require("src.item_bias")?, params.require("tgt.item_bias")?],
            bias: [params.require("src.bias")?, params.require("tgt.bias")?],
            bridge: Bridge::attach(&params, "bridge")?,
            stage: EmcdrStage::Bridge,
            params,
        })
    }

    /// Selects the stage whose objective [`Network::output`] and
    /// [`Emcdr::bridge_loss`] evaluate, and freezes every other stage.
    pub fn set_stage(&mut self, stage: EmcdrStage) -> Result<(), ModelError> {
        self.stage = stage;
        self.params.train_only(stage.groups())
    }

    pub fn stage(&self) -> EmcdrStage {
        self.stage
    }

    /// Mean squared distance between `f(p_u^s)` and `p_u^t`.
    pub fn bridge_loss<'p>(
        &'p self,
        g: &mut Graph<'p>,
        bind: &mut Binder<'p>,
        user: usize,
    ) -> Result<Var, ModelError> {
        let s = bind.var(g, self.user[0]);
        let ps = g.lookup(s, &[user])?;
        let t = bind.var(g, self.user[1]);
        let pt = g.lookup(t, &[user])?;
        let bv = self.bridge.bind(g, bind, None)?;
        let mapped = meta_bridge_predict(g, ps, &bv)?;
        let d = g.sub(mapped, pt)?;
        let sq = g.hadamard(d, d)?;
        let total = g.sum(sq)?;
        Ok(g.scale(total, 1.0 / self.bridge.k as f64)?)
    }
}

impl Network for Emcdr {
    fn params(&self) -> &ParamStore {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    fn output_mode(&self) -> OutputMode {
        self.mode
    }

    /// Source MF scores while fitting the source stage, target MF scores
    /// while fitting the target stage, and mapped-user scores otherwise.
    fn output<'p>(
        &'p self,
        g: &mut Graph<'p>,
        bind: &mut Binder<'p>,
        sample: &Sample,
    ) -> Result<Var, ModelError> {
        let (side, brow) = match sample.domain {
            DomainRef::Source => (0, 0),
            DomainRef::Target(d) => (1, d),
        };
        let user_side = match (self.stage, side) {
            (EmcdrStage::SourceMf, 1) | (EmcdrStage::TargetMf, 0) => {
                return Err(ModelError::Argument(format!(
                    "{:?} stage does not score {:?} samples",
                    self.stage, sample.domain
                )))
            }
            (EmcdrStage::Bridge, 1) => None,
            _ => Some(side),
        };
        let p = match user_side {
            Some(s) => {
                let t = bind.var(g, self.user[s]);
                g.lookup(t, &[sample.user])?
            }
            None => {
                let t = bind.var(g, self.user[0]);
                let ps = g.lookup(t, &[sample.user])?;
                let bv = self.bridge.bind(g, bind, None)?;
                meta_bridge_predict(g, ps, &bv)?
            }
        };
        let it = bind.var(g, self.items[side]);
        let q = g.lookup(it, &[sample.item])?;
        let bt = bind.var(g, self.item_bias[side]);
        let bi = g.lookup(bt, &[sample.item])?;
        let gb = bind.var(g, self.bias[side]);
        let b = g.lookup(gb, &[brow])?;
        mf_score(g, p, q, bi, b)
    }

    fn set_output_bias(&mut self, value: f64) {
        for b in self.bias {
            self.params.tensor_mut(b).data_mut().fill(value);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::UserContext;

    fn sizes() -> Sizes {
        Sizes {
            users: 3,
            src_items: 4,
            tgt_items: 5,
            categories: 2,
            domains: 1,
        }
    }

    fn s(domain: DomainRef, item: usize) -> Sample {
        Sample {
            user: 2,
            item,
            domain,
            signal: 1.0,
            timestamp: 0,
            context: UserContext::padding(2, None),
        }
    }

    #[test]
    fn dnn_variants() {
        let single = Dnn::new(false, 4, &[8], OutputMode::Logit, &sizes(), 1).unwrap();
        assert!(single.predict(&s(DomainRef::Target(0), 4)).is_ok());
        assert!(single.predict(&s(DomainRef::Source, 1)).is_err());
        let multi = Dnn::new(true, 4, &[8], OutputMode::Logit, &sizes(), 1).unwrap();
        assert_eq!(multi.params().get("emb.domain").unwrap().rows(), 2);
        let y = multi.predict(&s(DomainRef::Source, 3)).unwrap();
        assert!(y > 0.0 && y < 1.0);
    }

    #[test]
    fn cmf_is_dot_plus_biases() {
        let mut m = Cmf::new(2, OutputMode::Rating, &sizes(), 0).unwrap();
        let p = m.params_mut();
        let (u, q) = (p.id("mf.user").unwrap(), p.id("mf.item_tgt").unwrap());
        p.tensor_mut(u).row_mut(2).copy_from_slice(&[1.0, 2.0]);
        p.tensor_mut(q).row_mut(1).copy_from_slice(&[3.0, -1.0]);
        let b = p.id("mf.bias_tgt").unwrap();
        p.tensor_mut(b).data_mut()[1] = 0.5;
        m.set_output_bias(3.0);
        assert_eq!(m.predict(&s(DomainRef::Target(0), 1)).unwrap(), 4.5);
    }

    #[test]
    fn emcdr_stages_and_identity_bridge() {
        let mut m = Emcdr::new(3, OutputMode::Rating, &sizes(), 0).unwrap();
        m.set_stage(EmcdrStage::SourceMf).unwrap();
        assert!(m.params().is_trainable(m.params().id("src.item").unwrap()));
        assert!(!m.params().is_trainable(m.params().id("bridge.w1").unwrap()));
        assert!(m.predict(&s(DomainRef::Target(0), 0)).is_err());
        m.set_stage(EmcdrStage::Bridge).unwrap();
        // With the identity bridge, the mapped score uses the source user factors.
        let p = m.params().clone();
        let ps = p.get("src.user").unwrap().row(2).to_vec();
        let q = p.get("tgt.item").unwrap().row(1).to_vec();
        let dot: f64 = ps.iter().zip(&q).map(|(a, b)| a * b).sum();
        let y = m.predict(&s(DomainRef::Target(0), 1)).unwrap();
        assert!((y - dot).abs() < 1e-15);
        let mut g = Graph::new();
        let mut b = Binder::new(m.params());
        let l = m.bridge_loss(&mut g, &mut b, 2).unwrap();
        assert!(g.value(l).scalar() > 0.0);
    }
}
