use std::collections::{BTreeMap, BTreeSet};

use super::MetricsError;
use crate::corpus::BeliefTriplet;
use crate::text::ValueNormalizer;

fn normalized(set: &BTreeSet<BeliefTriplet>, norm: &ValueNormalizer) -> BTreeSet<(String, String, String)> {
    set.iter()
        .map(|b| (b.domain.trim().to_lowercase(), b.slot.trim().to_lowercase(), norm.normalize(&b.value)))
        .collect()
}

/// Fraction of gold turns whose predicted belief equals the gold belief after
/// value normalization. A gold turn without a prediction counts as a miss.
pub fn joint_goal_accuracy<K: Ord>(
    golds: &BTreeMap<K, BTreeSet<BeliefTriplet>>,
    preds: &BTreeMap<K, BTreeSet<BeliefTriplet>>,
    norm: &ValueNormalizer,
) -> Result<f64, MetricsError> {
    if golds.is_empty() {
        return Err(MetricsError::Empty("gold belief turns"));
    }
    let hits = golds
        .iter()
        .filter(|(k, gold)| preds.get(k).is_some_and(|p| normalized(p, norm) == normalized(gold, norm)))
        .count();
    Ok(hits as f64 / golds.len() as f64)
}
