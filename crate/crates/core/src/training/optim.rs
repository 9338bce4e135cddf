use serde::{Deserialize, Serialize};

use crate::model::ParamStore;

use super::TrainingError;

named_enum!(OptimizerKind { Sgd => "sgd", Adam => "adam" });

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

/// Optimizer with per-group state that persists across steps.
#[derive(Clone, Debug)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub adam: AdamParams,
    state: Vec<Moments>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, adam: AdamParams) -> Result<Self, TrainingError> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(TrainingError::Config(format!("lr must be positive, got {lr}")));
        }
        Ok(Self {
            kind,
            lr,
            adam,
            state: Vec::new(),
        })
    }

    /// Steps taken on the group at `index`.
    pub fn steps(&self, index: usize) -> u64 {
        self.state.get(index).map_or(0, |s| s.t)
    }

    /// Applies the accumulated gradients of every trainable group. All
    /// gradients are validated before any parameter changes.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<(), TrainingError> {
        let ids: Vec<_> = store
            .ids()
            .filter(|&id| store.is_trainable(id) && store.tensor(id).grad().is_some())
            .collect();
        for &id in &ids {
            let g = store.tensor(id).grad().expect("filtered above");
            if g.iter().any(|x| !x.is_finite()) {
                return Err(TrainingError::NonFinite {
                    group: store.name(id).to_string(),
                });
            }
        }
        if self.state.len() < store.len() {
            self.state.resize_with(store.len(), Moments::default);
        }
        for id in ids {
            let t = store.tensor_mut(id);
            let grad = t.grad().expect("filtered above").to_vec();
            let st = &mut self.state[id.0];
            match self.kind {
                OptimizerKind::Sgd => {
                    for (p, g) in t.data_mut().iter_mut().zip(&grad) {
                        *p -= self.lr * g;
                    }
                }
                OptimizerKind::Adam => {
                    let AdamParams { beta1, beta2, eps } = self.adam;
                    // Tables grown after the state was created get fresh moments.
                    st.m.resize(grad.len(), 0.0);
                    st.v.resize(grad.len(), 0.0);
                    st.t += 1;
                    let c1 = 1.0 - beta1.powi(st.t as i32);
                    let c2 = 1.0 - beta2.powi(st.t as i32);
                    for (((p, g), m), v) in
                        t.data_mut().iter_mut().zip(&grad).zip(&mut st.m).zip(&mut st.v)
                    {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        let mh = *m / c1;
                        let vh = *v / c2;
                        *p -= self.lr * mh / (vh.sqrt() + eps);
                    }
                }
            }
            if self.kind == OptimizerKind::Sgd {
                st.t += 1;
            }
        }
        Ok(())
    }
}

/// One optimizer update over the gradients accumulated in `store`.
pub fn optimizer_step(store: &mut ParamStore, opt: &mut Optimizer) -> Result<(), TrainingError> {
    opt.step(store)
}
