use rand_chacha::ChaCha8Rng;

use crate::autograd::{Graph, Tensor, Var};

use super::config::AttentionSemantics;
use super::params::{xavier, Binder, ParamId, ParamStore};
use super::ModelError;

/// Fully connected stack on single rows: ReLU between layers, linear output.
#[derive(Clone, Debug)]
pub struct Mlp {
    layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    /// Registers `{prefix}.{l}.w` / `{prefix}.{l}.b` for the widths
    /// `input → hidden… → output`.
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: &[usize],
        output: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, ModelError> {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        let mut layers = Vec::new();
        for (l, pair) in widths.windows(2).enumerate() {
            let w = store.insert(&format!("{prefix}.{l}.w"), xavier(pair[0], pair[1], rng))?;
            let b = store.insert(&format!("{prefix}.{l}.b"), Tensor::zeros(1, pair[1]))?;
            layers.push((w, b));
        }
        Ok(Self { layers })
    }

    /// Rebinds an MLP whose groups already live in `store`.
    pub fn attach(store: &ParamStore, prefix: &str) -> Result<Self, ModelError> {
        let mut layers = Vec::new();
        while let (Some(w), Some(b)) = (
            store.id(&format!("{prefix}.{}.w", layers.len())),
            store.id(&format!("{prefix}.{}.b", layers.len())),
        ) {
            layers.push((w, b));
        }
        if layers.is_empty() {
            return Err(ModelError::Config(format!("no layers under `{prefix}`")));
        }
        Ok(Self { layers })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn output_layer(&self) -> (ParamId, ParamId) {
        *self.layers.last().expect("an mlp has at least one layer")
    }

    pub fn forward<'p>(
        &self,
        g: &mut Graph<'p>,
        bind: &mut Binder<'p>,
        x: Var,
    ) -> Result<Var, ModelError> {
        let mut h = x;
        for (l, &(w, b)) in self.layers.iter().enumerate() {
            let (w, b) = (bind.var(g, w), bind.var(g, b));
            let z = g.matmul(h, w)?;
            h = g.add(z, b)?;
            if l + 1 < self.layers.len() {
                h = g.relu(h)?;
            }
        }
        Ok(h)
    }
}

/// Query, key and value projections of one attention step.
#[derive(Clone, Copy, Debug)]
pub struct AttnVars {
    pub q: Var,
    pub k: Var,
    pub v: Var,
}

/// How one attention step is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    Attend(AttentionSemantics),
    Bypass,
}

fn uniform_weights(g: &mut Graph<'_>, n: usize) -> Var {
    g.constant_owned(Tensor::filled(1, n, 1.0 / n as f64))
}

fn check_rows(g: &Graph<'_>, x: Var, op: &str) -> Result<usize, ModelError> {
    let n = g.shape(x).0;
    if n == 0 {
        return Err(ModelError::Argument(format!("{op} on an empty sequence")));
    }
    Ok(n)
}

/// Position weights `softmax((X Wq)(a Wk)ᵀ / √d_k)` as a 1×n row.
pub fn position_weights(
    g: &mut Graph<'_>,
    x: Var,
    against: Var,
    wq: Var,
    wk: Var,
) -> Result<Var, ModelError> {
    let scores = position_scores(g, x, against, wq, wk)?;
    Ok(g.softmax_rows(scores)?)
}

/// Scaled scores before the softmax, 1×n.
pub fn position_scores(
    g: &mut Graph<'_>,
    x: Var,
    against: Var,
    wq: Var,
    wk: Var,
) -> Result<Var, ModelError> {
    let dk = g.shape(wq).1 as f64;
    let q = g.matmul(x, wq)?;
    let key = g.matmul(against, wk)?;
    let kt = g.transpose(key)?;
    let col = g.matmul(q, kt)?;
    let row = g.transpose(col)?;
    Ok(g.scale(row, 1.0 / dk.sqrt())?)
}

/// Printed single-key form: every row of the output is `a Wv`.
fn single_key(g: &mut Graph<'_>, x: Var, against: Var, w: &AttnVars) -> Result<Var, ModelError> {
    let dk = g.shape(w.q).1 as f64;
    let q = g.matmul(x, w.q)?;
    let key = g.matmul(against, w.k)?;
    let kt = g.transpose(key)?;
    let s = g.matmul(q, kt)?;
    let s = g.scale(s, 1.0 / dk.sqrt())?;
    let a = g.softmax_rows(s)?;
    let value = g.matmul(against, w.v)?;
    Ok(g.matmul(a, value)?)
}

/// Domain-level step: returns `(e1, α)` with `e1` n×k and `α` 1×n.
pub fn domain_level_ca(
    g: &mut Graph<'_>,
    x: Var,
    e_d: Var,
    w: &AttnVars,
    step: Step,
) -> Result<(Var, Var), ModelError> {
    let n = check_rows(g, x, "domain_level_ca")?;
    match step {
        Step::Bypass => Ok((x, uniform_weights(g, n))),
        Step::Attend(AttentionSemantics::Gated) => {
            let alpha = position_weights(g, x, e_d, w.q, w.k)?;
            let xv = g.matmul(x, w.v)?;
            Ok((g.row_scale(xv, alpha)?, alpha))
        }
        Step::Attend(AttentionSemantics::Literal) => {
            let e1 = single_key(g, x, e_d, w)?;
            Ok((e1, uniform_weights(g, n)))
        }
    }
}

/// Item-level step: returns `(e_z, β)` with `e_z` 1×k and `β` 1×n.
pub fn item_level_ca(
    g: &mut Graph<'_>,
    e1: Var,
    e_v: Var,
    w: &AttnVars,
    step: Step,
) -> Result<(Var, Var), ModelError> {
    let n = check_rows(g, e1, "item_level_ca")?;
    match step {
        Step::Bypass => {
            let ev = g.matmul(e1, w.v)?;
            Ok((g.mean_rows(ev)?, uniform_weights(g, n)))
        }
        Step::Attend(AttentionSemantics::Gated) => {
            let beta = position_weights(g, e1, e_v, w.q, w.k)?;
            let ev = g.matmul(e1, w.v)?;
            Ok((g.matmul(beta, ev)?, beta))
        }
        Step::Attend(AttentionSemantics::Literal) => {
            let rows = single_key(g, e1, e_v, w)?;
            Ok((g.mean_rows(rows)?, uniform_weights(g, n)))
        }
    }
}
