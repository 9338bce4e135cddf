use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::{relative_error, Graph};
use crate::data::{DomainRef, Sample, Token, UserContext};

use super::config::{Ablation, AttentionSemantics, ModelConfig, OutputMode, UserTransfer};
use super::network::{accumulate_sample_grad, sample_loss, Dacdr};
use super::params::{Binder, ParamStore};
use super::{ModelError, Network, Sizes};

/// Finite-difference agreement of one parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupCheck {
    pub max_rel_error: f64,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
    pub coords: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkCheck {
    pub groups: BTreeMap<String, GroupCheck>,
    pub max_rel_error: f64,
}

/// Mean sample loss under the current parameters.
pub fn mean_loss<N: Network + ?Sized>(net: &N, samples: &[Sample]) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for s in samples {
        let mut g = Graph::new();
        let mut bind = Binder::new(net.params());
        let out = net.output(&mut g, &mut bind, s)?;
        let l = sample_loss(&mut g, out, s.signal, net.output_mode())?;
        total += g.value(l).scalar();
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Central differences over every coordinate of every trainable group,
/// compared with the backward pass of the mean loss over `samples`.
pub fn network_grad_check<N: Network + ?Sized>(
    net: &mut N,
    samples: &[Sample],
    eps: f64,
) -> Result<NetworkCheck, ModelError> {
    if !(eps > 0.0) {
        return Err(ModelError::Argument(format!("eps must be positive, got {eps}")));
    }
    if samples.is_empty() {
        return Err(ModelError::Argument("grad check needs at least one sample".into()));
    }
    net.params_mut().clear_grads();
    let w = 1.0 / samples.len() as f64;
    for s in samples {
        accumulate_sample_grad(net, s, w)?;
    }
    let ids: Vec<_> = net.params().ids().filter(|&id| net.params().is_trainable(id)).collect();
    let mut groups = BTreeMap::new();
    let mut worst = 0.0f64;
    for id in ids {
        let len = net.params().tensor(id).len();
        let analytic = net
            .params()
            .tensor(id)
            .grad()
            .map_or_else(|| vec![0.0; len], |g| g.to_vec());
        let mut check = GroupCheck {
            max_rel_error: 0.0,
            analytic_norm: analytic.iter().map(|x| x * x).sum::<f64>().sqrt(),
            numeric_norm: 0.0,
            coords: len,
        };
        let mut sq = 0.0;
        for (j, &a) in analytic.iter().enumerate() {
            let orig = net.params().tensor(id).data()[j];
            net.params_mut().tensor_mut(id).data_mut()[j] = orig + eps;
            let up = mean_loss(net, samples)?;
            net.params_mut().tensor_mut(id).data_mut()[j] = orig - eps;
            let down = mean_loss(net, samples)?;
            net.params_mut().tensor_mut(id).data_mut()[j] = orig;
            let n = (up - down) / (2.0 * eps);
            sq += n * n;
            check.max_rel_error = check.max_rel_error.max(relative_error(a, n));
        }
        check.numeric_norm = sq.sqrt();
        worst = worst.max(check.max_rel_error);
        groups.insert(net.params().name(id).to_string(), check);
    }
    Ok(NetworkCheck {
        groups,
        max_rel_error: worst,
    })
}

/// Redraws every value uniformly in `[-bound, bound]`, so finite differences
/// probe gradients of a measurable size.
pub fn randomize_params(store: &mut ParamStore, bound: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for v in store.tensor_mut(id).data_mut() {
            *v = rng.random_range(-bound..=bound);
        }
    }
}

/// Four hand-built samples over two target domains with sequences of
/// lengths 1 to 4.
pub fn fixture_samples(rating: bool) -> Vec<Sample> {
    let mk = |user: usize, seq: &[usize], side: &[usize], item: usize, signal: f64| Sample {
        user,
        item,
        domain: DomainRef::Target(user % 2),
        signal,
        timestamp: 0,
        context: UserContext {
            user,
            behavior_seq: seq.iter().map(|&i| Token::Id(i)).collect(),
            side_seq: side.iter().map(|&i| Token::Id(i)).collect(),
            cutoff_ts: None,
        },
    };
    let y = |l: f64| if rating { 1.0 + 4.0 * l * 0.9 } else { l };
    vec![
        mk(0, &[0, 3, 5], &[2, 1, 1], 4, y(1.0)),
        mk(1, &[2], &[0], 1, y(0.0)),
        mk(2, &[1, 4, 4, 0], &[0, 2, 2, 1], 0, y(1.0)),
        mk(3, &[5, 2], &[1, 0], 2, y(0.0)),
    ]
}

pub fn fixture_sizes() -> Sizes {
    Sizes {
        users: 4,
        src_items: 6,
        tgt_items: 5,
        categories: 3,
        domains: 2,
    }
}

/// Composed check of the full model over every ablation, attention
/// semantics, user-transfer variant and output mode, with parameters
/// redrawn in `[-1, 1]`. Entries are named `ablation/attention/transfer/mode`.
pub fn composed_suite(eps: f64) -> Result<Vec<(String, NetworkCheck)>, ModelError> {
    let mut out = Vec::new();
    for ablation in Ablation::ALL {
        for attention in AttentionSemantics::ALL {
            for ut in UserTransfer::ALL {
                for mode in OutputMode::ALL {
                    let cfg = ModelConfig {
                        embed_dim: 4,
                        attn_dim: 3,
                        max_seq_len: 4,
                        encoder_hidden: vec![6],
                        head_hidden: vec![8, 4],
                        ablation: *ablation,
                        attention: *attention,
                        user_transfer: *ut,
                        output_mode: *mode,
                        ..ModelConfig::default()
                    };
                    let mut m = Dacdr::new(cfg, &fixture_sizes(), 11)?;
                    randomize_params(m.params_mut(), 1.0, 11);
                    let samples = fixture_samples(*mode == OutputMode::Rating);
                    let check = network_grad_check(&mut m, &samples, eps)?;
                    out.push((format!("{ablation}/{attention}/{ut}/{mode}"), check));
                }
            }
        }
    }
    Ok(out)
}
