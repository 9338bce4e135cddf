use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, Dataset, DomainRef, SourceHistory, UserContext};

/// Partition of the overlapping users of one target domain.
#[derive(Clone, Debug, PartialEq)]
pub struct ColdStartSplit {
    pub beta: f64,
    pub seed: u64,
    /// Target domain index the split was drawn for.
    pub target: usize,
    pub test_users: BTreeSet<usize>,
    pub train_users: BTreeSet<usize>,
}

impl ColdStartSplit {
    pub fn is_test_user(&self, user: usize) -> bool {
        self.test_users.contains(&user)
    }

    pub fn overlapping(&self) -> usize {
        self.test_users.len() + self.train_users.len()
    }
}

/// Users with at least one source and one `target` interaction, ascending.
pub fn overlapping_users(data: &Dataset, target: usize) -> Vec<usize> {
    let n = data.vocab.users.len();
    let (mut in_src, mut in_tgt) = (vec![false; n], vec![false; n]);
    for r in &data.interactions {
        match r.domain {
            DomainRef::Source => in_src[r.user] = true,
            DomainRef::Target(t) if t == target => in_tgt[r.user] = true,
            DomainRef::Target(_) => {}
        }
    }
    (0..n).filter(|&u| in_src[u] && in_tgt[u]).collect()
}

/// Half-up rounding of `beta * n`.
pub(crate) fn test_count(beta: f64, n: usize) -> usize {
    (beta * n as f64 + 0.5).floor() as usize
}

/// Seeded shuffle of the overlapping users; the first `round(beta·N)` are
/// held out as cold-start test users.
pub fn cold_start_split(
    data: &Dataset,
    target: usize,
    beta: f64,
    seed: u64,
) -> Result<ColdStartSplit, DataError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(DataError::Argument(format!("beta must lie in (0, 1), got {beta}")));
    }
    let mut users = overlapping_users(data, target);
    if users.is_empty() {
        return Err(DataError::Protocol(format!(
            "no overlapping users between source and target domain {target}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    users.shuffle(&mut rng);
    let k = test_count(beta, users.len());
    Ok(ColdStartSplit {
        beta,
        seed,
        target,
        test_users: users[..k].iter().copied().collect(),
        train_users: users[k..].iter().copied().collect(),
    })
}

/// One labelled interaction together with the user's causal source context.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub user: usize,
    pub item: usize,
    pub domain: DomainRef,
    pub signal: f64,
    pub timestamp: i64,
    pub context: UserContext,
}

#[derive(Clone, Debug, Default)]
pub struct SampleSets {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Routes every interaction of the split's target domain: test users' go to
/// `test`, everything else (including non-overlapping users) to `train`.
/// Each sample's context is cut at its own timestamp when `causal`.
pub fn assemble_samples(
    data: &Dataset,
    split: &ColdStartSplit,
    history: &SourceHistory,
    max_len: usize,
    causal: bool,
) -> SampleSets {
    let mut sets = SampleSets::default();
    for r in &data.interactions {
        if r.domain != DomainRef::Target(split.target) {
            continue;
        }
        let sample = Sample {
            user: r.user,
            item: r.item,
            domain: r.domain,
            signal: r.signal,
            timestamp: r.timestamp,
            context: history.context(r.user, r.timestamp, max_len, causal),
        };
        if split.is_test_user(r.user) {
            sets.test.push(sample);
        } else {
            sets.train.push(sample);
        }
    }
    sets
}

/// Source-domain interactions as samples with padding contexts, for the
/// baselines that also fit the source domain.
pub fn source_samples(data: &Dataset) -> Vec<Sample> {
    data.interactions
        .iter()
        .filter(|r| r.domain == DomainRef::Source)
        .map(|r| Sample {
            user: r.user,
            item: r.item,
            domain: r.domain,
            signal: r.signal,
            timestamp: r.timestamp,
            context: UserContext::padding(r.user, None),
        })
        .collect()
}
