use std::collections::HashMap;

use super::MetricsError;

pub const MAX_ORDER: usize = 4;
/// Stand-in for a zero modified precision so the geometric mean stays defined.
pub const ZERO_PRECISION_EPSILON: f64 = 1e-9;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and candidate n-gram totals per order, plus lengths.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BleuStats {
    pub matches: [usize; MAX_ORDER],
    pub totals: [usize; MAX_ORDER],
    pub cand_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn add(&mut self, cand: &[String], reference: &[String]) {
        self.cand_len += cand.len();
        self.ref_len += reference.len();
        for n in 1..=MAX_ORDER {
            let c = ngram_counts(cand, n);
            let r = ngram_counts(reference, n);
            self.totals[n - 1] += c.values().sum::<usize>();
            self.matches[n - 1] += c
                .iter()
                .map(|(g, k)| (*k).min(r.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
        }
    }

    /// Geometric mean of modified precisions times the brevity penalty.
    /// Orders for which the candidate has no n-grams at all are left out.
    pub fn score(&self) -> f64 {
        if self.cand_len == 0 {
            return 0.0;
        }
        let logs: Vec<f64> = (0..MAX_ORDER)
            .filter(|&i| self.totals[i] > 0)
            .map(|i| {
                let p = self.matches[i] as f64 / self.totals[i] as f64;
                if p > 0.0 { p } else { ZERO_PRECISION_EPSILON }.ln()
            })
            .collect();
        let log_precision = logs.iter().sum::<f64>() / logs.len() as f64;
        let bp = if self.cand_len >= self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.cand_len as f64).exp()
        };
        bp * log_precision.exp()
    }
}

/// Corpus-level BLEU-4 over tokenized candidates, one reference each.
pub fn bleu(cands: &[Vec<String>], refs: &[Vec<String>]) -> Result<f64, MetricsError> {
    if cands.len() != refs.len() {
        return Err(MetricsError::LengthMismatch {
            left: cands.len(),
            right: refs.len(),
        });
    }
    if cands.is_empty() {
        return Err(MetricsError::Empty("BLEU corpus"));
    }
    let mut stats = BleuStats::default();
    for (c, r) in cands.iter().zip(refs) {
        stats.add(c, r);
    }
    Ok(stats.score())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SplitBleu {
    pub aug: Option<f64>,
    pub orig: Option<f64>,
    pub all: Option<f64>,
}

/// BLEU over responses following an interference, over the rest, and over all.
/// A part with no responses is `None`.
pub fn split_bleu(cands: &[Vec<String>], refs: &[Vec<String>], aug_mask: &[bool]) -> Result<SplitBleu, MetricsError> {
    if cands.len() != refs.len() || cands.len() != aug_mask.len() {
        return Err(MetricsError::LengthMismatch {
            left: cands.len(),
            right: refs.len().min(aug_mask.len()),
        });
    }
    let part = |want: Option<bool>| {
        let (c, r): (Vec<_>, Vec<_>) = cands
            .iter()
            .zip(refs)
            .zip(aug_mask)
            .filter(|(_, m)| want.is_none_or(|w| **m == w))
            .map(|((c, r), _)| (c.clone(), r.clone()))
            .unzip();
        bleu(&c, &r).ok()
    };
    Ok(SplitBleu {
        aug: part(Some(true)),
        orig: part(Some(false)),
        all: part(None),
    })
}
