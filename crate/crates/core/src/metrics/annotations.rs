use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{fleiss_kappa, MetricsError, RANK_LEVELS};

pub const QUESTIONS: [&str; 3] = ["q1", "q2", "q3"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Rating {
    #[serde(alias = "not_at_all", alias = "Not at all")]
    NotAtAll,
    #[serde(alias = "somewhat")]
    Somewhat,
    #[serde(alias = "fully")]
    Fully,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatingRecord {
    pub example_id: String,
    pub rater_id: String,
    pub q1: Rating,
    pub q2: Rating,
    pub q3: Rating,
}

impl RatingRecord {
    pub fn answer(&self, question: &str) -> Option<Rating> {
        match question {
            "q1" => Some(self.q1),
            "q2" => Some(self.q2),
            "q3" => Some(self.q3),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankingRecord {
    pub example_id: String,
    pub rater_id: String,
    /// System name to rank, 1 best. Ties allowed.
    pub ranks: BTreeMap<String, u8>,
}

impl RankingRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.example_id.trim().is_empty() {
            return Err("example_id: must not be empty".into());
        }
        if self.rater_id.trim().is_empty() {
            return Err("rater_id: must not be empty".into());
        }
        if self.ranks.is_empty() {
            return Err("ranks: must not be empty".into());
        }
        for (system, &rank) in &self.ranks {
            if rank == 0 || usize::from(rank) > RANK_LEVELS {
                return Err(format!("ranks.{system}: {rank} is outside 1..={RANK_LEVELS}"));
            }
        }
        if !self.ranks.values().any(|&r| r == 1) {
            return Err("ranks: at least one system must be ranked 1".into());
        }
        Ok(())
    }
}

/// One line of an annotations file, tagged by `"type"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum AnnotationRecord {
    Rating(RatingRecord),
    Ranking(RankingRecord),
}

impl AnnotationRecord {
    pub fn example_id(&self) -> &str {
        match self {
            Self::Rating(r) => &r.example_id,
            Self::Ranking(r) => &r.example_id,
        }
    }

    pub fn rater_id(&self) -> &str {
        match self {
            Self::Rating(r) => &r.rater_id,
            Self::Ranking(r) => &r.rater_id,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            Self::Rating(r) if r.example_id.trim().is_empty() => Err("example_id: must not be empty".into()),
            Self::Rating(r) if r.rater_id.trim().is_empty() => Err("rater_id: must not be empty".into()),
            Self::Rating(_) => Ok(()),
            Self::Ranking(r) => r.validate(),
        }
    }
}

/// Parses annotation JSONL. Blank lines are ignored.
pub fn parse_annotations(text: &str) -> Result<Vec<AnnotationRecord>, MetricsError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let invalid = |message: String| MetricsError::InvalidRecord { line: i + 1, message };
        let mut de = serde_json::Deserializer::from_str(line);
        let rec: AnnotationRecord = serde_path_to_error::deserialize(&mut de).map_err(|e| invalid(e.to_string()))?;
        rec.validate().map_err(invalid)?;
        out.push(rec);
    }
    Ok(out)
}

pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationRecord>, MetricsError> {
    let text = std::fs::read_to_string(path).map_err(|source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_annotations(&text)
}

/// Label distribution and agreement for one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSummary {
    pub question: String,
    /// Percent of all ratings per label.
    pub not_at_all: f64,
    pub somewhat: f64,
    pub fully: f64,
    pub kappa: f64,
    pub raters_per_item: usize,
    /// Items rated by fewer raters than the maximum are left out of kappa.
    pub items_used: usize,
    pub items_skipped: usize,
    /// With a single rater kappa is reported as 1.0.
    pub single_rater: bool,
}

/// Per-question label percentages and Fleiss's kappa.
///
/// A later record from the same rater on the same example replaces an earlier one.
pub fn rating_summary(records: &[RatingRecord]) -> Result<Vec<QuestionSummary>, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty("ratings"));
    }
    let mut latest: BTreeMap<&str, BTreeMap<&str, &RatingRecord>> = BTreeMap::new();
    for r in records {
        latest.entry(&r.example_id).or_default().insert(&r.rater_id, r);
    }
    let raters = latest.values().map(BTreeMap::len).max().unwrap_or(0);
    let full: Vec<&BTreeMap<&str, &RatingRecord>> = latest.values().filter(|m| m.len() == raters).collect();

    let mut out = Vec::new();
    for q in QUESTIONS {
        let all: Vec<Rating> = latest.values().flat_map(|m| m.values()).filter_map(|r| r.answer(q)).collect();
        let pct = |want: Rating| 100.0 * all.iter().filter(|&&r| r == want).count() as f64 / all.len() as f64;
        let kappa = if raters == 1 {
            1.0
        } else {
            let items: Vec<Vec<Rating>> = full.iter().map(|m| m.values().filter_map(|r| r.answer(q)).collect()).collect();
            fleiss_kappa(&items)?
        };
        out.push(QuestionSummary {
            question: q.to_string(),
            not_at_all: pct(Rating::NotAtAll),
            somewhat: pct(Rating::Somewhat),
            fully: pct(Rating::Fully),
            kappa,
            raters_per_item: raters,
            items_used: full.len(),
            items_skipped: latest.len() - full.len(),
            single_rater: raters == 1,
        });
    }
    Ok(out)
}
