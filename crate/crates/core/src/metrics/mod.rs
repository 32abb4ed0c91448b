//! Automatic metrics for generated responses, dataset statistics, and
//! agreement statistics over human annotations.

mod agreement;
mod annotations;
mod bleu;
mod diversity;
mod dst;
mod inform;
mod stats;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agreement::{fleiss_kappa, paired_t_test, rank_aggregate, PairedT, RankSummary, RANK_LEVELS};
pub use annotations::{
    load_annotations, parse_annotations, rating_summary, AnnotationRecord, QuestionSummary, Rating, RankingRecord,
    RatingRecord, QUESTIONS,
};
pub use bleu::{bleu, split_bleu, BleuStats, SplitBleu, MAX_ORDER, ZERO_PRECISION_EPSILON};
pub use diversity::{cbe, unique_trigrams};
pub use dst::joint_goal_accuracy;
pub use inform::{
    evaluate_dialogue, inform_success, requested_placeholder, DialogueOutcome, InformSuccess, ENTITY_DOMAINS,
    KNOWN_DOMAINS,
};
pub use stats::{
    dataset_stats, DatasetStats, StatsRow, ROW_ALL, ROW_AUGMENTED, ROW_BACKSTORY, ROW_BASELINE, ROW_REACTION,
};

use crate::corpus::{BeliefTriplet, Dialogue, Speaker, VenueDatabase};
use crate::simpletod::{GenerationOutput, Predictions};
use crate::text::{tokenize, ValueNormalizer};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("{0} is empty; metric undefined")]
    Empty(&'static str),
    #[error("dialogue {dialogue_id}: unknown goal domain '{domain}'")]
    UnknownDomain { dialogue_id: String, domain: String },
    #[error("no database loaded for domain '{0}'")]
    MissingDatabase(String),
    #[error("item {item} has {found} ratings, expected {expected}")]
    RaterCount { item: usize, found: usize, expected: usize },
    #[error("need at least 2 raters per item, got {0}")]
    TooFewRaters(usize),
    #[error("kappa undefined: every rating falls in one category without perfect agreement")]
    UndefinedKappa,
    #[error("invalid annotation record at line {line}: {message}")]
    InvalidRecord { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Model-output scores over a gold corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub inform: f64,
    pub success: f64,
    pub jga: f64,
    pub bleu_aug: Option<f64>,
    pub bleu_orig: Option<f64>,
    pub bleu_all: Option<f64>,
    pub cbe: f64,
    pub unique_trigrams: usize,
    pub turn_counts: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dialogues: Vec<DialogueOutcome>,
}

impl MetricsReport {
    /// Aligned two-column text rendering.
    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
        let mut rows = vec![
            ("inform".to_string(), format!("{:.2}", self.inform)),
            ("success".to_string(), format!("{:.2}", self.success)),
            ("jga".to_string(), format!("{:.4}", self.jga)),
            ("cbe".to_string(), format!("{:.4}", self.cbe)),
            ("unique_trigrams".to_string(), self.unique_trigrams.to_string()),
            ("bleu_aug".to_string(), opt(self.bleu_aug)),
            ("bleu_orig".to_string(), opt(self.bleu_orig)),
            ("bleu_all".to_string(), opt(self.bleu_all)),
        ];
        rows.extend(self.turn_counts.iter().map(|(k, v)| (k.clone(), v.to_string())));
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter().map(|(k, v)| format!("{k:<width$}  {v}\n")).collect()
    }
}

fn aug_response_turn(d: &Dialogue) -> Option<usize> {
    d.augmentation.as_ref().map(|a| a.exchange_index + 1)
}

/// Scores predictions against every system turn of `dialogues`.
///
/// Predictions are keyed by system turn index. The predicted belief at system
/// turn `i` is compared with the gold belief of user turn `i - 1`; a missing
/// prediction scores as an empty output.
pub fn evaluate_corpus(
    dialogues: &[Dialogue],
    preds: &Predictions,
    db: &VenueDatabase,
    norm: &ValueNormalizer,
) -> Result<MetricsReport, MetricsError> {
    if dialogues.is_empty() {
        return Err(MetricsError::Empty("dialogues"));
    }
    let mut sorted: Vec<&Dialogue> = dialogues.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));

    let empty = GenerationOutput::default();
    let mut gold_belief: BTreeMap<(String, usize), BTreeSet<BeliefTriplet>> = BTreeMap::new();
    let mut pred_belief: BTreeMap<(String, usize), BTreeSet<BeliefTriplet>> = BTreeMap::new();
    let mut cands = Vec::new();
    let mut refs = Vec::new();
    let mut mask = Vec::new();
    let mut responses = Vec::new();
    let mut missing = 0usize;

    for d in &sorted {
        let aug_turn = aug_response_turn(d);
        for (i, turn) in d.turns.iter().enumerate() {
            if i == 0 || turn.speaker != Speaker::System || d.turns[i - 1].speaker != Speaker::User {
                continue;
            }
            let key = (d.id.clone(), i - 1);
            gold_belief.insert(key.clone(), d.turns[i - 1].belief.clone());
            let pred = match preds.get(&d.id, i) {
                Some(p) => {
                    pred_belief.insert(key, p.belief.clone());
                    p
                }
                None => {
                    missing += 1;
                    &empty
                }
            };
            cands.push(tokenize(&pred.response));
            refs.push(tokenize(turn.delex_text.as_deref().unwrap_or(&turn.text)));
            mask.push(aug_turn == Some(i));
            responses.push(pred.response.as_str());
        }
    }

    let is = inform_success(dialogues, preds, db, norm)?;
    let jga = joint_goal_accuracy(&gold_belief, &pred_belief, norm)?;
    let split = split_bleu(&cands, &refs, &mask)?;

    let mut turn_counts = BTreeMap::new();
    turn_counts.insert("dialogues".to_string(), sorted.len());
    turn_counts.insert("system_turns".to_string(), cands.len());
    turn_counts.insert("augmented_turns".to_string(), mask.iter().filter(|m| **m).count());
    turn_counts.insert("missing_predictions".to_string(), missing);

    Ok(MetricsReport {
        inform: is.inform,
        success: is.success,
        jga,
        bleu_aug: split.aug,
        bleu_orig: split.orig,
        bleu_all: split.all,
        cbe: cbe(&responses),
        unique_trigrams: unique_trigrams(&responses),
        turn_counts,
        dialogues: is.dialogues,
    })
}
