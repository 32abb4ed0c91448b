use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Turn};
use crate::text::tokenize;

pub const ROW_BASELINE: &str = "baseline";
pub const ROW_ALL: &str = "all_turns";
pub const ROW_AUGMENTED: &str = "augmented_turns";
pub const ROW_BACKSTORY: &str = "backstory_turns";
pub const ROW_REACTION: &str = "reaction_turns";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub name: String,
    pub turns: usize,
    pub total_unique_tokens: usize,
    pub unique_tokens_not_in_baseline: usize,
    pub avg_tokens_per_turn: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub rows: Vec<StatsRow>,
}

impl DatasetStats {
    pub fn row(&self, name: &str) -> Option<&StatsRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:<16} {:>8} {:>14} {:>18} {:>12}\n",
            "rows", "turns", "unique tokens", "not in baseline", "avg tokens"
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{:<16} {:>8} {:>14} {:>18} {:>12.2}\n",
                r.name, r.turns, r.total_unique_tokens, r.unique_tokens_not_in_baseline, r.avg_tokens_per_turn
            ));
        }
        out
    }
}

fn row<'a>(name: &str, turns: impl Iterator<Item = &'a Turn>, baseline_vocab: &BTreeSet<String>) -> StatsRow {
    let mut vocab = BTreeSet::new();
    let mut count = 0usize;
    let mut tokens = 0usize;
    for t in turns {
        let toks = tokenize(&t.text);
        count += 1;
        tokens += toks.len();
        vocab.extend(toks);
    }
    StatsRow {
        name: name.to_string(),
        turns: count,
        total_unique_tokens: vocab.len(),
        unique_tokens_not_in_baseline: vocab.difference(baseline_vocab).count(),
        avg_tokens_per_turn: if count == 0 { 0.0 } else { tokens as f64 / count as f64 },
    }
}

/// Vocabulary and length statistics of `corpus` against `baseline`.
///
/// Backstory turns are the augmented user turns, reaction turns the system
/// turns that follow them; augmented turns are their union.
pub fn dataset_stats(corpus: &Corpus, baseline: &Corpus) -> DatasetStats {
    let all_baseline = || baseline.dialogues.iter().flat_map(|d| d.turns.iter());
    let baseline_vocab: BTreeSet<String> = all_baseline().flat_map(|t| tokenize(&t.text)).collect();

    let backstory = || {
        corpus
            .dialogues
            .iter()
            .filter_map(|d| d.augmentation.as_ref().and_then(|a| d.turns.get(a.exchange_index)))
    };
    let reaction = || {
        corpus
            .dialogues
            .iter()
            .filter_map(|d| d.augmentation.as_ref().and_then(|a| d.turns.get(a.exchange_index + 1)))
    };

    DatasetStats {
        rows: vec![
            row(ROW_BASELINE, all_baseline(), &baseline_vocab),
            row(ROW_ALL, corpus.dialogues.iter().flat_map(|d| d.turns.iter()), &baseline_vocab),
            row(ROW_AUGMENTED, backstory().chain(reaction()), &baseline_vocab),
            row(ROW_BACKSTORY, backstory(), &baseline_vocab),
            row(ROW_REACTION, reaction(), &baseline_vocab),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Dialogue, Flavor, Split};

    fn corpus(texts: &[&str]) -> Corpus {
        let turns = texts
            .iter()
            .enumerate()
            .map(|(i, t)| if i % 2 == 0 { Turn::user(t) } else { Turn::system(t, t) })
            .collect();
        Corpus::new(Flavor::Multiwoz, Split::Test, vec![Dialogue::new("d1", turns).unwrap()])
    }

    #[test]
    fn single_turn_counts() {
        let c = corpus(&["hello world"]);
        let s = dataset_stats(&c, &c);
        let all = s.row(ROW_ALL).unwrap();
        assert_eq!(all.total_unique_tokens, 2);
        assert_eq!(all.avg_tokens_per_turn, 2.0);
    }

    #[test]
    fn identical_corpus_has_no_new_tokens() {
        let c = corpus(&["i need a taxi .", "where to ?", "to the station , please"]);
        let s = dataset_stats(&c, &c);
        assert!(s.rows.iter().all(|r| r.unique_tokens_not_in_baseline == 0));
        assert_eq!(s.row(ROW_BACKSTORY).unwrap().turns, 0);
        assert_eq!(s.row(ROW_BACKSTORY).unwrap().avg_tokens_per_turn, 0.0);
    }

    #[test]
    fn new_vocabulary_is_counted() {
        let base = corpus(&["i need a taxi"]);
        let c = corpus(&["i need a purple taxi today"]);
        let s = dataset_stats(&c, &base);
        assert_eq!(s.row(ROW_ALL).unwrap().unique_tokens_not_in_baseline, 2);
    }
}
