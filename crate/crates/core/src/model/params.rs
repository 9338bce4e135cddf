use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{GradBuf, Graph, Tensor, Var};

use super::ModelError;

/// Handle of one parameter group inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// Named parameter groups with a trainable flag each and accumulated gradients.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    trainable: Vec<bool>,
    index: HashMap<String, usize>,
    /// Set once any gradient has been accumulated since the last clear.
    has_grads: bool,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<ParamId, ModelError> {
        if self.index.contains_key(name) {
            return Err(ModelError::Config(format!("duplicate parameter group `{name}`")));
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        self.trainable.push(true);
        self.index.insert(name.to_string(), id);
        Ok(ParamId(id))
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn require(&self, name: &str) -> Result<ParamId, ModelError> {
        self.id(name)
            .ok_or_else(|| ModelError::Config(format!("no parameter group `{name}`")))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.id(name).map(|id| &self.tensors[id.0])
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.names.len()).map(ParamId)
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn tensor_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.trainable[id.0]
    }

    pub fn set_trainable(&mut self, id: ParamId, on: bool) {
        self.trainable[id.0] = on;
    }

    pub fn set_all_trainable(&mut self, on: bool) {
        self.trainable.iter_mut().for_each(|t| *t = on);
    }

    /// Group ids matching `pattern`: an exact name, or a prefix ending in `*`.
    pub fn matching(&self, pattern: &str) -> Vec<ParamId> {
        match pattern.strip_suffix('*') {
            Some(prefix) => self
                .ids()
                .filter(|id| self.names[id.0].starts_with(prefix))
                .collect(),
            None => self.id(pattern).into_iter().collect(),
        }
    }

    /// Makes exactly the groups matched by `patterns` trainable.
    pub fn train_only(&mut self, patterns: &[&str]) -> Result<(), ModelError> {
        let mut chosen = Vec::new();
        for p in patterns {
            let m = self.matching(p);
            if m.is_empty() {
                return Err(ModelError::Config(format!("no parameter group matches `{p}`")));
            }
            chosen.extend(m);
        }
        self.set_all_trainable(false);
        for id in chosen {
            self.trainable[id.0] = true;
        }
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::clear_grad);
        self.has_grads = false;
    }

    /// Adds `buf` into the gradient of `id`; frozen groups are skipped.
    pub fn accumulate(&mut self, id: ParamId, buf: &GradBuf) {
        self.has_grads = true;
        if !self.trainable[id.0] {
            return;
        }
        let t = &mut self.tensors[id.0];
        buf.add_into(t.grad_mut());
    }

    /// Marks that a backward pass has been recorded even if no trainable group
    /// received a gradient.
    pub fn mark_backward(&mut self) {
        self.has_grads = true;
    }

    pub fn has_grads(&self) -> bool {
        self.has_grads
    }

    /// L2 norm of every group's accumulated gradient (0 for frozen groups).
    pub fn grad_norms(&self) -> Result<BTreeMap<String, f64>, ModelError> {
        if !self.has_grads {
            return Err(ModelError::State(
                "gradient norms requested before any backward pass".into(),
            ));
        }
        Ok(self
            .ids()
            .map(|id| {
                let t = &self.tensors[id.0];
                let norm = match (self.trainable[id.0], t.grad()) {
                    (true, Some(g)) => g.iter().map(|x| x * x).sum::<f64>().sqrt(),
                    _ => 0.0,
                };
                (self.names[id.0].clone(), norm)
            })
            .collect())
    }

    pub fn total_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

/// Lazily binds parameter groups into one graph: trainable groups become
/// differentiable leaves, frozen ones constants.
pub struct Binder<'p> {
    store: &'p ParamStore,
    vars: Vec<Option<Var>>,
}

impl<'p> Binder<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Self {
            store,
            vars: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn var(&mut self, g: &mut Graph<'p>, id: ParamId) -> Var {
        if let Some(v) = self.vars[id.0] {
            return v;
        }
        let t = self.store.tensor(id);
        let v = if self.store.is_trainable(id) {
            g.param(t)
        } else {
            g.constant(t)
        };
        self.vars[id.0] = Some(v);
        v
    }

    /// Binds every group as a differentiable leaf regardless of its flag.
    pub fn var_always(&mut self, g: &mut Graph<'p>, id: ParamId) -> Var {
        if let Some(v) = self.vars[id.0] {
            return v;
        }
        let v = g.param(self.store.tensor(id));
        self.vars[id.0] = Some(v);
        v
    }

    /// Moves the leaf gradients of all bound groups out of `g`.
    pub fn collect(&self, g: &mut Graph<'p>) -> Vec<(ParamId, GradBuf)> {
        self.vars
            .iter()
            .enumerate()
            .filter_map(|(i, v)| {
                let v = (*v)?;
                g.take_grad(v).map(|b| (ParamId(i), b))
            })
            .collect()
    }

    pub fn bound(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.vars
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (ParamId(i), v)))
    }
}

pub fn uniform(rows: usize, cols: usize, bound: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(rows, cols, data).expect("shape matches data length")
}

pub fn embedding(rows: usize, k: usize, rng: &mut ChaCha8Rng) -> Tensor {
    uniform(rows, k, 0.1, rng)
}

pub fn xavier(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(fan_in, fan_out, a, rng)
}
