use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MetricsError, RankingRecord};

/// Rank values a rater can assign; 1 is best.
pub const RANK_LEVELS: usize = 3;

/// Fleiss's kappa over `items`, each holding one categorical rating per rater.
pub fn fleiss_kappa<C: Ord>(items: &[Vec<C>]) -> Result<f64, MetricsError> {
    let first = items.first().ok_or(MetricsError::Empty("ratings"))?;
    let n = first.len();
    if n < 2 {
        return Err(MetricsError::TooFewRaters(n));
    }
    let mut totals: BTreeMap<&C, usize> = BTreeMap::new();
    let mut p_sum = 0.0;
    for (idx, item) in items.iter().enumerate() {
        if item.len() != n {
            return Err(MetricsError::RaterCount {
                item: idx,
                found: item.len(),
                expected: n,
            });
        }
        let mut counts: BTreeMap<&C, usize> = BTreeMap::new();
        for c in item {
            *counts.entry(c).or_insert(0) += 1;
            *totals.entry(c).or_insert(0) += 1;
        }
        let agree: usize = counts.values().map(|k| k * k).sum::<usize>() - n;
        p_sum += agree as f64 / (n * (n - 1)) as f64;
    }
    let big_n = items.len() as f64;
    let p_bar = p_sum / big_n;
    let p_e: f64 = totals
        .values()
        .map(|&k| {
            let p = k as f64 / (big_n * n as f64);
            p * p
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return if (1.0 - p_bar).abs() < 1e-12 {
            Ok(1.0)
        } else {
            Err(MetricsError::UndefinedKappa)
        };
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

/// Rank statistics for one system.
///
/// `distribution[k]` is the percentage of all judgements placing the system at
/// rank `k + 1`. The `*_std` fields are population standard deviations of the
/// same statistic computed per rater.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub judgements: usize,
    pub raters: usize,
    pub distribution: [f64; RANK_LEVELS],
    pub distribution_std: [f64; RANK_LEVELS],
    pub mean_rank: f64,
    pub mean_rank_std: f64,
}

fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

fn describe(ranks: &[u8]) -> ([f64; RANK_LEVELS], f64) {
    let mut dist = [0.0; RANK_LEVELS];
    for &r in ranks {
        dist[usize::from(r) - 1] += 1.0;
    }
    let n = ranks.len() as f64;
    for d in &mut dist {
        *d = 100.0 * *d / n;
    }
    let mean = ranks.iter().map(|&r| f64::from(r)).sum::<f64>() / n;
    (dist, mean)
}

/// Aggregates ranking judgements per system. Tied ranks credit every tied
/// system at that rank.
pub fn rank_aggregate(records: &[RankingRecord]) -> Result<BTreeMap<String, RankSummary>, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty("rankings"));
    }
    let mut by_system: BTreeMap<&str, BTreeMap<&str, Vec<u8>>> = BTreeMap::new();
    for (line, rec) in records.iter().enumerate() {
        rec.validate().map_err(|message| MetricsError::InvalidRecord { line: line + 1, message })?;
        for (system, &rank) in &rec.ranks {
            by_system
                .entry(system)
                .or_default()
                .entry(&rec.rater_id)
                .or_default()
                .push(rank);
        }
    }
    let mut out = BTreeMap::new();
    for (system, per_rater) in by_system {
        let all: Vec<u8> = per_rater.values().flatten().copied().collect();
        let (distribution, mean_rank) = describe(&all);
        let rater_stats: Vec<([f64; RANK_LEVELS], f64)> = per_rater.values().map(|r| describe(r)).collect();
        let mut distribution_std = [0.0; RANK_LEVELS];
        for (k, std) in distribution_std.iter_mut().enumerate() {
            let column: Vec<f64> = rater_stats.iter().map(|(d, _)| d[k]).collect();
            *std = population_std(&column);
        }
        let means: Vec<f64> = rater_stats.iter().map(|(_, m)| *m).collect();
        out.insert(
            system.to_string(),
            RankSummary {
                judgements: all.len(),
                raters: per_rater.len(),
                distribution,
                distribution_std,
                mean_rank,
                mean_rank_std: population_std(&means),
            },
        );
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedT {
    pub mean_difference: f64,
    pub t: f64,
    pub df: usize,
}

/// Paired t statistic for `a - b`. Returns an infinite `t` when every
/// difference is identical and non-zero, and `t = 0` when all are zero.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedT, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(MetricsError::Empty("paired samples (need at least 2)"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let t = if se == 0.0 {
        if mean == 0.0 {
            0.0
        } else {
            mean.signum() * f64::INFINITY
        }
    } else {
        mean / se
    };
    Ok(PairedT {
        mean_difference: mean,
        t,
        df: diffs.len() - 1,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn kappa_hand_case() {
        let items = vec![vec!['A', 'A', 'A'], vec!['A', 'A', 'B']];
        assert!((fleiss_kappa(&items).unwrap() + 0.2).abs() < 1e-12);
    }

    #[test]
    fn kappa_errors() {
        assert!(matches!(fleiss_kappa::<u8>(&[]), Err(MetricsError::Empty(_))));
        assert!(matches!(fleiss_kappa(&[vec![1]]), Err(MetricsError::TooFewRaters(1))));
        assert!(matches!(
            fleiss_kappa(&[vec![1, 1], vec![1]]),
            Err(MetricsError::RaterCount { item: 1, .. })
        ));
        assert_eq!(fleiss_kappa(&[vec![1, 1], vec![1, 1]]).unwrap(), 1.0);
    }

    fn rec(rater: &str, ranks: &[(&str, u8)]) -> RankingRecord {
        RankingRecord {
            example_id: "e".into(),
            rater_id: rater.into(),
            ranks: ranks.iter().map(|(s, r)| (s.to_string(), *r)).collect(),
        }
    }

    #[test]
    fn ties_credit_both_systems() {
        let agg = rank_aggregate(&[rec("r1", &[("a", 1), ("b", 1), ("c", 2)])]).unwrap();
        assert_eq!(agg["a"].distribution, [100.0, 0.0, 0.0]);
        assert_eq!(agg["b"].distribution, [100.0, 0.0, 0.0]);
        assert_eq!(agg["c"].mean_rank, 2.0);
    }

    #[test]
    fn t_test_basic() {
        let t = paired_t_test(&[1.0, 2.0, 3.0], &[0.0, 1.0, 1.0]).unwrap();
        assert_eq!(t.df, 2);
        assert!((t.mean_difference - 4.0 / 3.0).abs() < 1e-12);
        let se = ((1.0f64 / 3.0) / 3.0).sqrt();
        assert!((t.t - (4.0 / 3.0) / se).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn kappa_perfect_agreement_is_one(labels in prop::collection::vec(0u8..4, 1..20), raters in 2usize..6) {
            let items: Vec<Vec<u8>> = labels.iter().map(|&l| vec![l; raters]).collect();
            prop_assert_eq!(fleiss_kappa(&items).unwrap(), 1.0);
        }

        #[test]
        fn kappa_invariant_under_relabeling(
            items in prop::collection::vec(prop::collection::vec(0u8..3, 3), 2..15),
        ) {
            let relabeled: Vec<Vec<u8>> = items.iter().map(|i| i.iter().map(|c| 10 - c).collect()).collect();
            match (fleiss_kappa(&items), fleiss_kappa(&relabeled)) {
                (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12),
                (Err(_), Err(_)) => {}
                other => prop_assert!(false, "{:?}", other),
            }
        }
    }
}
