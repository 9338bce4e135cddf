use super::MetricError;

/// Area under the ROC curve by the Mann–Whitney statistic with average ranks
/// for tied scores.
///
/// Ranks are doubled so that every quantity stays an exact integer until the
/// final division.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64, MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::Argument(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(l) = labels.iter().find(|&&l| l != 0.0 && l != 1.0) {
        return Err(MetricError::Argument(format!("auc labels must be 0 or 1, got {l}")));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(MetricError::Argument(format!("auc score is {s}")));
    }
    let pos = labels.iter().filter(|&&l| l == 1.0).count() as u128;
    let neg = labels.len() as u128 - pos;
    if pos == 0 || neg == 0 {
        return Err(MetricError::Undefined(format!(
            "auc needs both classes ({pos} positives, {neg} negatives)"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share their mean (i + j + 2) / 2.
        let doubled = (i + j + 2) as u128;
        let positives = order[i..=j].iter().filter(|&&k| labels[k] == 1.0).count() as u128;
        doubled_rank_sum += doubled * positives;
        i = j + 1;
    }
    let doubled_u = doubled_rank_sum - pos * (pos + 1);
    Ok(doubled_u as f64 / (2 * pos * neg) as f64)
}

/// Mean absolute and root mean squared error.
pub fn mae_rmse(preds: &[f64], truths: &[f64]) -> Result<(f64, f64), MetricError> {
    if preds.len() != truths.len() {
        return Err(MetricError::Argument(format!(
            "{} predictions but {} truths",
            preds.len(),
            truths.len()
        )));
    }
    if preds.is_empty() {
        return Err(MetricError::Undefined("mae/rmse of an empty set".into()));
    }
    let n = preds.len() as f64;
    let (mut abs, mut sq) = (0.0, 0.0);
    for (p, t) in preds.iter().zip(truths) {
        let e = p - t;
        abs += e.abs();
        sq += e * e;
    }
    Ok((abs / n, (sq / n).sqrt()))
}

/// Clamps a rating prediction to the support [1, 5].
pub fn clamp_rating(x: f64) -> f64 {
    x.clamp(1.0, 5.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// O(P·N) pair counting with 0.5 credit for ties.
    fn brute_auc(s: &[f64], y: &[f64]) -> f64 {
        let (mut twice_wins, mut pairs) = (0u64, 0u64);
        for i in 0..s.len() {
            for j in 0..s.len() {
                if y[i] == 1.0 && y[j] == 0.0 {
                    pairs += 1;
                    twice_wins += if s[i] > s[j] {
                        2
                    } else if s[i] == s[j] {
                        1
                    } else {
                        0
                    };
                }
            }
        }
        twice_wins as f64 / (2 * pairs) as f64
    }

    #[test]
    fn fixtures() {
        assert_eq!(auc(&[0.9, 0.1], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 6], &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 0.75);
        assert!(matches!(auc(&[0.1, 0.2], &[1.0, 1.0]), Err(MetricError::Undefined(_))));
        assert!(matches!(auc(&[0.1], &[0.5]), Err(MetricError::Argument(_))));
        assert!(auc(&[0.1], &[]).is_err());
    }

    #[test]
    fn error_fixtures() {
        assert_eq!(mae_rmse(&[1.0, 4.0], &[1.0, 4.0]).unwrap(), (0.0, 0.0));
        let (mae, rmse) = mae_rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert_eq!(mae, 3.5);
        assert!((rmse - 12.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(mae_rmse(&[2.0], &[4.5]).unwrap(), (2.5, 2.5));
        assert!(matches!(mae_rmse(&[], &[]), Err(MetricError::Undefined(_))));
        assert_eq!(clamp_rating(7.0), 5.0);
        assert_eq!(clamp_rating(-1.0), 1.0);
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..=100).prop_flat_map(|n| {
            (
                prop::collection::vec((0i32..12).prop_map(|v| v as f64 / 4.0), n),
                prop::collection::vec(prop::bool::ANY.prop_map(|b| b as u8 as f64), n),
            )
        })
    }

    proptest! {
        #[test]
        fn matches_pair_counting((s, y) in instance()) {
            let both = y.iter().any(|&v| v == 1.0) && y.iter().any(|&v| v == 0.0);
            prop_assume!(both);
            prop_assert_eq!(auc(&s, &y).unwrap(), brute_auc(&s, &y));
        }

        #[test]
        fn monotone_invariance((s, y) in instance()) {
            prop_assume!(y.iter().any(|&v| v == 1.0) && y.iter().any(|&v| v == 0.0));
            let t: Vec<f64> = s.iter().map(|x| (3.0 * x).exp() - 7.0).collect();
            prop_assert_eq!(auc(&s, &y).unwrap(), auc(&t, &y).unwrap());
        }

        #[test]
        fn negation_complements(n in 2usize..80, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            // Distinct scores: a shuffled arithmetic progression.
            let mut s: Vec<f64> = (0..n).map(|i| i as f64 * 0.5 - 3.0).collect();
            for i in (1..n).rev() {
                s.swap(i, rng.random_range(0..=i));
            }
            let mut y: Vec<f64> = (0..n).map(|_| rng.random_range(0..2) as f64).collect();
            y[0] = 0.0;
            y[1] = 1.0;
            let neg: Vec<f64> = s.iter().map(|x| -x).collect();
            let total = auc(&s, &y).unwrap() + auc(&neg, &y).unwrap();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn rmse_dominates_mae(v in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..60)) {
            let (p, t): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
            let (mae, rmse) = mae_rmse(&p, &t).unwrap();
            prop_assert!(mae >= 0.0 && rmse >= mae - 1e-12);
        }
    }
}
