//! Latent-factor generator for a source domain and one or more target domains.
//!
//! Users and items are unit vectors in `latent_dim` dimensions. Source
//! histories are preference-driven (items drawn with weight
//! `exp(selectivity·⟨u, v⟩)`), target exposures are uniform, and target
//! preferences are the source preferences rotated by `domain_shift_angle` in
//! the plane of the first two latent axes.
//!
//! Each user holds `interests` preference vectors. A target affinity is the
//! best match over the rotated interests, and each on-domain source event is
//! driven by one interest picked uniformly.
//!
//! Affinities are centred at their median over random users and items, so
//! logit-mode classes are balanced.
//!
//! Part of each source history is off-domain: events on a separate item pool
//! driven by an unrelated per-user interest. The off-domain share is drawn per
//! user from `[0, 2·distractor_frac]`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{DataError, DomainSet, InteractionRecord, Schema, SideInfoRecord};
use crate::autograd::sigmoid;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub n_users: usize,
    pub n_items_src: usize,
    pub n_items_tgt: usize,
    pub overlap_frac: f64,
    pub latent_dim: usize,
    /// Degrees.
    pub domain_shift_angle: f64,
    /// Standard deviation of the Gaussian noise added to each logit or rating.
    pub noise: f64,
    pub seed: u64,
    pub mode: Schema,
    pub n_target_domains: usize,
    /// Mean number of source events per source user.
    pub src_events: usize,
    /// Mean number of events per user in each target domain.
    pub tgt_events: usize,
    pub n_categories: usize,
    /// Logit scale applied to `⟨u, v⟩` in logit mode.
    pub sharpness: f64,
    /// Inverse temperature of the source item choice.
    pub selectivity: f64,
    /// Preference vectors per user.
    pub interests: usize,
    /// Mean share of off-domain events in a source history, in `[0, 0.5)`.
    pub distractor_frac: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_users: 1000,
            n_items_src: 400,
            n_items_tgt: 200,
            overlap_frac: 0.7,
            latent_dim: 2,
            domain_shift_angle: 0.0,
            noise: 0.1,
            seed: 0,
            mode: Schema::Logit,
            n_target_domains: 1,
            src_events: 20,
            tgt_events: 6,
            n_categories: 12,
            sharpness: 10.0,
            selectivity: 6.0,
            interests: 2,
            distractor_frac: 0.3,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let positive = [
            ("n_users", self.n_users),
            ("n_items_src", self.n_items_src),
            ("n_items_tgt", self.n_items_tgt),
            ("latent_dim", self.latent_dim),
            ("n_target_domains", self.n_target_domains),
            ("src_events", self.src_events),
            ("tgt_events", self.tgt_events),
            ("n_categories", self.n_categories),
            ("interests", self.interests),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(DataError::Argument(format!("{name} must be positive")));
            }
        }
        if !(self.overlap_frac > 0.0 && self.overlap_frac <= 1.0) {
            return Err(DataError::Argument(format!(
                "overlap_frac must lie in (0, 1], got {}",
                self.overlap_frac
            )));
        }
        if self.latent_dim < 2 {
            return Err(DataError::Argument("latent_dim must be at least 2".into()));
        }
        if !(self.noise >= 0.0) || !self.domain_shift_angle.is_finite() {
            return Err(DataError::Argument("noise must be >= 0 and angle finite".into()));
        }
        if !(self.sharpness > 0.0) || !(self.selectivity >= 0.0) {
            return Err(DataError::Argument("sharpness must be > 0, selectivity >= 0".into()));
        }
        if !(0.0..0.5).contains(&self.distractor_frac) {
            return Err(DataError::Argument(format!(
                "distractor_frac must lie in [0, 0.5), got {}",
                self.distractor_frac
            )));
        }
        Ok(())
    }
}

fn target_domain_name(j: usize) -> String {
    format!("tgt{}", j + 1)
}

pub const SOURCE_DOMAIN: &str = "src";

/// Generated records plus the latent ground truth behind them.
#[derive(Clone, Debug)]
pub struct SynthData {
    pub spec: SynthSpec,
    pub domains: DomainSet,
    /// Grouped by user, ascending time within each user.
    pub records: Vec<InteractionRecord>,
    /// Noise-free logit (logit mode) or unclipped mean rating per record.
    pub truth: Vec<f64>,
    pub side_info: Vec<SideInfoRecord>,
    /// Interest vectors per user, `None` outside the domain.
    pub source_pref: Vec<Option<Vec<Vec<f64>>>>,
    pub target_pref: Vec<Option<Vec<Vec<f64>>>>,
}

impl SynthData {
    /// Source records plus those of one target domain.
    pub fn records_for(&self, target: &str) -> Vec<InteractionRecord> {
        self.records
            .iter()
            .filter(|r| r.domain_id == self.domains.source || r.domain_id == target)
            .cloned()
            .collect()
    }
}

fn unit_vector(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn normalized(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.into_iter().map(|x| x / norm).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rotate(v: &[f64], radians: f64) -> Vec<f64> {
    let (s, c) = radians.sin_cos();
    let mut out = v.to_vec();
    out[0] = c * v[0] - s * v[1];
    out[1] = s * v[0] + c * v[1];
    out
}

fn best_match(pref: &[Vec<f64>], item: &[f64]) -> f64 {
    pref.iter().map(|p| dot(p, item)).fold(f64::NEG_INFINITY, f64::max)
}

/// Median best-match affinity of random users on the target items, from a
/// stream independent of the generator's own.
fn median_affinity(spec: &SynthSpec, tgt_items: &[Vec<Vec<f64>>]) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6d65_6469_616e);
    let mut draws: Vec<f64> = (0..4096)
        .map(|n| {
            let pref: Vec<Vec<f64>> = (0..spec.interests).map(|_| unit_vector(spec.latent_dim, &mut rng)).collect();
            let items = &tgt_items[n % tgt_items.len()];
            best_match(&pref, &items[rng.random_range(0..items.len())])
        })
        .collect();
    draws.sort_by(f64::total_cmp);
    (draws[2047] + draws[2048]) / 2.0
}

fn event_count(mean: usize, rng: &mut ChaCha8Rng) -> usize {
    let lo = (mean / 2).max(1);
    let hi = (mean * 3 / 2).max(lo);
    rng.random_range(lo..=hi)
}

#[derive(Clone, Copy, PartialEq)]
enum Role {
    Both,
    SourceOnly,
    TargetOnly,
}

pub fn synth_generate(spec: &SynthSpec) -> Result<SynthData, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.latent_dim;

    let centroids: Vec<Vec<f64>> = (0..spec.n_categories).map(|_| unit_vector(d, &mut rng)).collect();
    let mut src_items = Vec::with_capacity(spec.n_items_src);
    let mut side_info = Vec::with_capacity(spec.n_items_src);
    for i in 0..spec.n_items_src {
        let c = rng.random_range(0..spec.n_categories);
        let jitter = unit_vector(d, &mut rng);
        let v: Vec<f64> = centroids[c].iter().zip(&jitter).map(|(a, b)| a + 0.6 * b).collect();
        src_items.push(normalized(v));
        side_info.push(SideInfoRecord {
            item_id: format!("s{i}"),
            category_id: format!("c{c}"),
        });
    }
    let n_off = if spec.distractor_frac > 0.0 {
        (spec.n_items_src / 2).max(1)
    } else {
        0
    };
    let off_centroids: Vec<Vec<f64>> = (0..spec.n_categories).map(|_| unit_vector(d, &mut rng)).collect();
    let mut off_items = Vec::with_capacity(n_off);
    for j in 0..n_off {
        let c = rng.random_range(0..spec.n_categories);
        let jitter = unit_vector(d, &mut rng);
        let v: Vec<f64> = off_centroids[c].iter().zip(&jitter).map(|(a, b)| a + 0.6 * b).collect();
        off_items.push(normalized(v));
        side_info.push(SideInfoRecord {
            item_id: format!("s{}", spec.n_items_src + j),
            category_id: format!("x{c}"),
        });
    }
    let tgt_items: Vec<Vec<Vec<f64>>> = (0..spec.n_target_domains)
        .map(|_| (0..spec.n_items_tgt).map(|_| unit_vector(d, &mut rng)).collect())
        .collect();

    let n_both = ((spec.overlap_frac * spec.n_users as f64).round() as usize).clamp(1, spec.n_users);
    let mut roles: Vec<Role> = (0..spec.n_users)
        .map(|i| {
            if i < n_both {
                Role::Both
            } else if (i - n_both) % 2 == 0 {
                Role::SourceOnly
            } else {
                Role::TargetOnly
            }
        })
        .collect();
    roles.shuffle(&mut rng);

    let angle = spec.domain_shift_angle.to_radians();
    let mut records = Vec::new();
    let mut truth = Vec::new();
    let mut source_pref = Vec::with_capacity(spec.n_users);
    let mut target_pref = Vec::with_capacity(spec.n_users);

    let center = median_affinity(spec, &tgt_items);
    let label = |pref: &[Vec<f64>], item: &[f64], rng: &mut ChaCha8Rng| -> (f64, f64) {
        let affinity = best_match(pref, item) - center;
        let eps: f64 = rng.sample::<f64, _>(StandardNormal) * spec.noise;
        match spec.mode {
            Schema::Logit => {
                let mean = spec.sharpness * affinity;
                let p = sigmoid(mean + eps);
                let y = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
                (y, mean)
            }
            Schema::Rating => {
                let mean = 3.0 + 2.0 * affinity;
                ((mean + eps).clamp(1.0, 5.0), mean)
            }
        }
    };

    for (u, role) in roles.iter().enumerate() {
        let pref: Vec<Vec<f64>> = (0..spec.interests).map(|_| unit_vector(d, &mut rng)).collect();
        let start: i64 = rng.random_range(0..1_000_000);
        let mut events: Vec<(InteractionRecord, f64)> = Vec::new();

        if *role != Role::TargetOnly {
            let chooser = |p: &[f64], items: &[Vec<f64>]| {
                let w: Vec<f64> = items.iter().map(|v| (spec.selectivity * dot(p, v)).exp()).collect();
                WeightedIndex::new(&w).expect("positive weights")
            };
            let on: Vec<_> = pref.iter().map(|p| chooser(p, &src_items)).collect();
            let other = vec![unit_vector(d, &mut rng)];
            let off = (n_off > 0).then(|| chooser(&other[0], &off_items));
            let share = rng.random_range(0.0..=2.0 * spec.distractor_frac);
            for _ in 0..event_count(spec.src_events, &mut rng) {
                let (i, signal, mean) = match &off {
                    Some(off) if rng.random::<f64>() < share => {
                        let j = off.sample(&mut rng);
                        let (signal, mean) = label(&other, &off_items[j], &mut rng);
                        (spec.n_items_src + j, signal, mean)
                    }
                    _ => {
                        let which = rng.random_range(0..on.len());
                        let i = on[which].sample(&mut rng);
                        let (signal, mean) = label(&pref[which..=which], &src_items[i], &mut rng);
                        (i, signal, mean)
                    }
                };
                let ts = start + rng.random_range(0..1000);
                events.push((
                    InteractionRecord {
                        user_id: format!("u{u}"),
                        item_id: format!("s{i}"),
                        domain_id: SOURCE_DOMAIN.into(),
                        signal,
                        timestamp: ts,
                    },
                    mean,
                ));
            }
        }
        let tpref: Vec<Vec<f64>> = pref.iter().map(|p| rotate(p, angle)).collect();
        if *role != Role::SourceOnly {
            for (j, items) in tgt_items.iter().enumerate() {
                for _ in 0..event_count(spec.tgt_events, &mut rng) {
                    let i = rng.random_range(0..items.len());
                    let (signal, mean) = label(&tpref, &items[i], &mut rng);
                    let ts = start + rng.random_range(400..1400);
                    events.push((
                        InteractionRecord {
                            user_id: format!("u{u}"),
                            item_id: format!("t{}_{i}", j + 1),
                            domain_id: target_domain_name(j),
                            signal,
                            timestamp: ts,
                        },
                        mean,
                    ));
                }
            }
        }
        events.sort_by_key(|(r, _)| r.timestamp);
        for (r, m) in events {
            records.push(r);
            truth.push(m);
        }
        source_pref.push((*role != Role::TargetOnly).then(|| pref.clone()));
        target_pref.push((*role != Role::SourceOnly).then_some(tpref));
    }

    let targets: Vec<String> = (0..spec.n_target_domains).map(target_domain_name).collect();
    Ok(SynthData {
        spec: spec.clone(),
        domains: DomainSet {
            source: SOURCE_DOMAIN.into(),
            targets,
        },
        records,
        truth,
        side_info,
        source_pref,
        target_pref,
    })
}
