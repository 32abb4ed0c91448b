use std::collections::{BTreeSet, HashMap};

use crate::text::tokenize;

/// Conditional bigram entropy `H(w2 | w1)` in nats over within-response bigrams.
pub fn cbe<S: AsRef<str>>(responses: &[S]) -> f64 {
    let mut pairs: HashMap<(String, String), usize> = HashMap::new();
    let mut firsts: HashMap<String, usize> = HashMap::new();
    let mut total = 0usize;
    for r in responses {
        let tokens = tokenize(r.as_ref());
        for w in tokens.windows(2) {
            *pairs.entry((w[0].clone(), w[1].clone())).or_insert(0) += 1;
            *firsts.entry(w[0].clone()).or_insert(0) += 1;
            total += 1;
        }
    }
    if total == 0 {
        return 0.0;
    }
    let total = total as f64;
    let h: f64 = pairs
        .iter()
        .map(|((w1, _), &k)| {
            let joint = k as f64 / total;
            let conditional = k as f64 / firsts[w1] as f64;
            -joint * conditional.ln()
        })
        .sum();
    h.max(0.0)
}

/// Number of distinct within-response token trigrams.
pub fn unique_trigrams<S: AsRef<str>>(responses: &[S]) -> usize {
    let mut seen = BTreeSet::new();
    for r in responses {
        let tokens = tokenize(r.as_ref());
        for w in tokens.windows(3) {
            seen.insert(w.to_vec());
        }
    }
    seen.len()
}
