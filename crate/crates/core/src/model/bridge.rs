//! One-hidden-layer user bridge `f(e_u^s) = relu(e_u^s W1 + b1) W2 + b2`.
//!
//! The identity initialisation uses `W1 = [I, -I]` and `W2 = [I; -I]`, so
//! `relu(x) - relu(-x) = x` holds exactly for any input.

use crate::autograd::{Graph, Tensor, Var};

use super::params::{Binder, ParamId, ParamStore};
use super::ModelError;

#[derive(Clone, Copy, Debug)]
pub struct BridgeVars {
    /// k×2k.
    pub w1: Var,
    /// 1×2k.
    pub b1: Var,
    /// 2k×k.
    pub w2: Var,
    /// 1×k.
    pub b2: Var,
}

/// Maps a source user embedding into the target space.
pub fn meta_bridge_predict(
    g: &mut Graph<'_>,
    e_u_src: Var,
    bridge: &BridgeVars,
) -> Result<Var, ModelError> {
    let h = g.matmul(e_u_src, bridge.w1)?;
    let h = g.add(h, bridge.b1)?;
    let h = g.relu(h)?;
    let o = g.matmul(h, bridge.w2)?;
    Ok(g.add(o, bridge.b2)?)
}

pub fn identity_w1(k: usize) -> Tensor {
    let mut w = Tensor::zeros(k, 2 * k);
    for i in 0..k {
        w.set(i, i, 1.0);
        w.set(i, k + i, -1.0);
    }
    w
}

pub fn identity_w2(k: usize) -> Tensor {
    let mut w = Tensor::zeros(2 * k, k);
    for i in 0..k {
        w.set(i, i, 1.0);
        w.set(k + i, i, -1.0);
    }
    w
}

/// Bridge groups in a store. With a generator, `W1` is produced per sample
/// from a conditioning row as `reshape(c · G + g0, k, 2k)`.
#[derive(Clone, Debug)]
pub struct Bridge {
    pub k: usize,
    w1: Option<ParamId>,
    gen: Option<(ParamId, ParamId)>,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
}

impl Bridge {
    /// Registers an identity-initialised bridge under `prefix`; with
    /// `cond_dim = Some(c)` the first layer is generated from a 1×c row.
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        k: usize,
        cond_dim: Option<usize>,
    ) -> Result<Self, ModelError> {
        let (w1, gen) = match cond_dim {
            None => (Some(store.insert(&format!("{prefix}.w1"), identity_w1(k))?), None),
            Some(c) => {
                let g = store.insert(&format!("{prefix}.gen.w"), Tensor::zeros(c, 2 * k * k))?;
                let flat = identity_w1(k).into_data();
                let g0 = store.insert(&format!("{prefix}.gen.b"), Tensor::row_vector(&flat))?;
                (None, Some((g, g0)))
            }
        };
        Ok(Self {
            k,
            w1,
            gen,
            b1: store.insert(&format!("{prefix}.b1"), Tensor::zeros(1, 2 * k))?,
            w2: store.insert(&format!("{prefix}.w2"), identity_w2(k))?,
            b2: store.insert(&format!("{prefix}.b2"), Tensor::zeros(1, k))?,
        })
    }

    pub fn attach(store: &ParamStore, prefix: &str) -> Result<Self, ModelError> {
        let w2 = store.require(&format!("{prefix}.w2"))?;
        let k = store.tensor(w2).cols();
        let gen = match (store.id(&format!("{prefix}.gen.w")), store.id(&format!("{prefix}.gen.b"))) {
            (Some(a), Some(b)) => Some((a, b)),
            _ => None,
        };
        let w1 = store.id(&format!("{prefix}.w1"));
        if w1.is_none() && gen.is_none() {
            return Err(ModelError::Config(format!("bridge `{prefix}` has no first layer")));
        }
        Ok(Self {
            k,
            w1,
            gen,
            b1: store.require(&format!("{prefix}.b1"))?,
            w2,
            b2: store.require(&format!("{prefix}.b2"))?,
        })
    }

    pub fn is_personalized(&self) -> bool {
        self.gen.is_some()
    }

    /// Binds the bridge; `cond` is required for the personalized form.
    pub fn bind<'p>(
        &self,
        g: &mut Graph<'p>,
        bind: &mut Binder<'p>,
        cond: Option<Var>,
    ) -> Result<BridgeVars, ModelError> {
        let w1 = match (self.w1, self.gen) {
            (Some(w1), _) => bind.var(g, w1),
            (None, Some((gw, gb))) => {
                let c = cond.ok_or_else(|| {
                    ModelError::Argument("personalized bridge needs a conditioning row".into())
                })?;
                let (gw, gb) = (bind.var(g, gw), bind.var(g, gb));
                let flat = g.matmul(c, gw)?;
                let flat = g.add(flat, gb)?;
                g.reshape(flat, self.k, 2 * self.k)?
            }
            (None, None) => unreachable!("validated at construction"),
        };
        Ok(BridgeVars {
            w1,
            b1: bind.var(g, self.b1),
            w2: bind.var(g, self.w2),
            b2: bind.var(g, self.b2),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn consts(g: &mut Graph<'_>, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> BridgeVars {
        BridgeVars {
            w1: g.constant_owned(w1),
            b1: g.constant_owned(b1),
            w2: g.constant_owned(w2),
            b2: g.constant_owned(b2),
        }
    }

    #[test]
    fn identity_bridge() {
        let k = 4;
        let mut g = Graph::new();
        let b = consts(
            &mut g,
            identity_w1(k),
            Tensor::zeros(1, 2 * k),
            identity_w2(k),
            Tensor::zeros(1, k),
        );
        let x = g.constant_owned(Tensor::row_vector(&[0.3, -1.25, 0.0, 7.5]));
        let y = meta_bridge_predict(&mut g, x, &b).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());
    }

    #[test]
    fn zero_bridge_annihilates() {
        let k = 3;
        let mut g = Graph::new();
        let b = consts(
            &mut g,
            Tensor::zeros(k, 2 * k),
            Tensor::zeros(1, 2 * k),
            Tensor::zeros(2 * k, k),
            Tensor::zeros(1, k),
        );
        let x = g.constant_owned(Tensor::row_vector(&[1.0, -2.0, 3.0]));
        let y = meta_bridge_predict(&mut g, x, &b).unwrap();
        assert_eq!(g.value(y).data(), &[0.0; 3]);
    }

    #[test]
    fn hand_set_two_by_two() {
        // Hidden width 2 here: W1 2×2, W2 2×2.
        let mut g = Graph::new();
        let b = consts(
            &mut g,
            Tensor::from_rows(&[&[1.0, -1.0], &[2.0, 0.5]]),
            Tensor::row_vector(&[0.0, -1.0]),
            Tensor::from_rows(&[&[1.0, 2.0], &[-1.0, 1.0]]),
            Tensor::row_vector(&[0.5, 0.0]),
        );
        let x = g.constant_owned(Tensor::row_vector(&[1.0, 1.0]));
        let y = meta_bridge_predict(&mut g, x, &b).unwrap();
        // h = relu([3, -0.5] + [0, -1]) = [3, 0]; o = [3, 6] + [0.5, 0]
        assert_eq!(g.value(y).data(), &[3.5, 6.0]);
    }

    #[test]
    fn generated_bridge_starts_as_identity() {
        let mut s = ParamStore::new();
        let br = Bridge::register(&mut s, "bridge", 3, Some(3)).unwrap();
        assert!(br.is_personalized());
        let again = Bridge::attach(&s, "bridge").unwrap();
        assert!(again.is_personalized());
        let mut g = Graph::new();
        let mut bind = Binder::new(&s);
        let cond = g.constant_owned(Tensor::row_vector(&[0.2, -0.4, 0.9]));
        let bv = br.bind(&mut g, &mut bind, Some(cond)).unwrap();
        let x = g.constant_owned(Tensor::row_vector(&[0.5, -0.5, 2.0]));
        let y = meta_bridge_predict(&mut g, x, &bv).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, -0.5, 2.0]);
        assert!(br.bind(&mut g, &mut bind, None).is_err());
    }
}
