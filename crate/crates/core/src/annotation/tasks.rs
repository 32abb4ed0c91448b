use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::{AnnotationError, FieldError};
use crate::corpus::{Corpus, Dialogue, Speaker, Turn};
use crate::metrics::{AnnotationRecord, Rating, RankingRecord, RatingRecord, QUESTIONS};
use crate::simpletod::Predictions;

pub const TASKS_SCHEMA: &str = "interfere.tasks/v1";

/// Labels shown to raters in place of system names.
pub const BLIND_LABELS: [&str; 3] = ["A", "B", "C"];

pub const QUESTION_TEXTS: [&str; 3] = [
    "In the user turn, is the backstory being presented reasonable given the situation?",
    "In the system's response, is the reaction provided supportive and understanding of the user's backstory?",
    "Overall, does the exchange sound natural and coherent?",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Rating,
    Ranking,
}

impl std::str::FromStr for TaskKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rating" => Ok(Self::Rating),
            "ranking" => Ok(Self::Ranking),
            other => Err(format!("unknown task kind '{other}' (expected rating or ranking)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextTurn {
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HighlightedTurn {
    pub text: String,
    /// Substring of `text` to highlight.
    pub highlight: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingPayload {
    pub situation: String,
    pub context: Vec<ContextTurn>,
    pub user: HighlightedTurn,
    pub system: HighlightedTurn,
    pub questions: Vec<Question>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub system: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingPayload {
    /// Turns up to and including the augmented user turn.
    pub context: Vec<ContextTurn>,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TaskPayload {
    Rating(RatingPayload),
    Ranking(RankingPayload),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub id: String,
    pub dialogue_id: String,
    pub turn_index: usize,
    pub payload: TaskPayload,
}

impl AnnotationTask {
    pub fn kind(&self) -> TaskKind {
        match self.payload {
            TaskPayload::Rating(_) => TaskKind::Rating,
            TaskPayload::Ranking(_) => TaskKind::Ranking,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFile {
    pub schema: String,
    pub kind: TaskKind,
    pub seed: u64,
    pub population: usize,
    pub sample_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub tasks: Vec<AnnotationTask>,
}

impl TaskFile {
    pub fn get(&self, id: &str) -> Option<&AnnotationTask> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("task file serializes")
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self, AnnotationError> {
        let format = |message: String| AnnotationError::Format {
            path: origin.to_path_buf(),
            message,
        };
        let mut de = serde_json::Deserializer::from_str(text);
        let file: TaskFile = serde_path_to_error::deserialize(&mut de).map_err(|e| format(e.to_string()))?;
        if file.schema != TASKS_SCHEMA {
            return Err(format(format!("unsupported schema '{}', expected '{TASKS_SCHEMA}'", file.schema)));
        }
        for t in &file.tasks {
            if let TaskPayload::Ranking(p) = &t.payload {
                if p.candidates.len() != BLIND_LABELS.len() {
                    return Err(format(format!("task {}: ranking tasks need exactly 3 candidates", t.id)));
                }
            }
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, AnnotationError> {
        let text = std::fs::read_to_string(path).map_err(|source| AnnotationError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<(), AnnotationError> {
        std::fs::write(path, self.to_json()).map_err(|source| AnnotationError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Where tasks are drawn from: augmented dialogues, plus one prediction set
/// per system for ranking.
pub enum TaskSource<'a> {
    Rating(&'a Corpus),
    Ranking {
        corpus: &'a Corpus,
        systems: &'a BTreeMap<String, Predictions>,
    },
}

fn context(turns: &[Turn]) -> Vec<ContextTurn> {
    turns
        .iter()
        .map(|t| ContextTurn {
            speaker: t.speaker,
            text: t.text.clone(),
        })
        .collect()
}

fn rating_task(d: &Dialogue) -> Result<AnnotationTask, AnnotationError> {
    let meta = d.augmentation.as_ref().expect("population holds augmented dialogues");
    let i = meta.exchange_index;
    let (Some(user), Some(system)) = (d.turns.get(i), d.turns.get(i + 1)) else {
        return Err(AnnotationError::Argument(format!("dialogue {}: exchange {i} out of range", d.id)));
    };
    Ok(AnnotationTask {
        id: format!("rating-{}", d.id),
        dialogue_id: d.id.clone(),
        turn_index: i,
        payload: TaskPayload::Rating(RatingPayload {
            situation: meta.situation.clone(),
            context: context(&d.turns[..i]),
            user: HighlightedTurn {
                text: user.text.clone(),
                highlight: meta.backstory.clone(),
            },
            system: HighlightedTurn {
                text: system.text.clone(),
                highlight: meta.reaction.clone(),
            },
            questions: QUESTIONS
                .iter()
                .zip(QUESTION_TEXTS)
                .map(|(id, text)| Question {
                    id: id.to_string(),
                    text: text.to_string(),
                })
                .collect(),
        }),
    })
}

fn ranking_task(d: &Dialogue, systems: &BTreeMap<String, Predictions>) -> Result<AnnotationTask, AnnotationError> {
    let meta = d.augmentation.as_ref().expect("population holds augmented dialogues");
    let i = meta.exchange_index;
    if i + 1 >= d.turns.len() {
        return Err(AnnotationError::Argument(format!("dialogue {}: exchange {i} out of range", d.id)));
    }
    let candidates = systems
        .iter()
        .map(|(name, preds)| {
            preds
                .get(&d.id, i + 1)
                .map(|p| Candidate {
                    system: name.clone(),
                    response: p.response.clone(),
                })
                .ok_or_else(|| {
                    AnnotationError::Argument(format!("system {name} has no prediction for {} turn {}", d.id, i + 1))
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(AnnotationTask {
        id: format!("ranking-{}", d.id),
        dialogue_id: d.id.clone(),
        turn_index: i + 1,
        payload: TaskPayload::Ranking(RankingPayload {
            context: context(&d.turns[..=i]),
            candidates,
        }),
    })
}

/// Samples `sample_size` augmented dialogues without replacement and builds
/// one task per sampled dialogue. The result depends only on the inputs and `seed`.
pub fn build_tasks(source: TaskSource<'_>, sample_size: usize, seed: u64) -> Result<TaskFile, AnnotationError> {
    let corpus = match &source {
        TaskSource::Rating(c) => *c,
        TaskSource::Ranking { corpus, systems } => {
            if systems.len() != BLIND_LABELS.len() {
                return Err(AnnotationError::Argument(format!(
                    "ranking needs exactly {} systems, got {}",
                    BLIND_LABELS.len(),
                    systems.len()
                )));
            }
            *corpus
        }
    };
    let mut population: Vec<&Dialogue> = corpus.dialogues.iter().filter(|d| d.augmentation.is_some()).collect();
    population.sort_by(|a, b| a.id.cmp(&b.id));
    if sample_size == 0 {
        return Err(AnnotationError::Argument("sample size must be positive".into()));
    }
    if sample_size > population.len() {
        return Err(AnnotationError::Argument(format!(
            "sample size {sample_size} exceeds the {} augmented dialogues available",
            population.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, population.len(), sample_size).into_vec();
    picked.sort_unstable();

    let (kind, tasks) = match &source {
        TaskSource::Rating(_) => (
            TaskKind::Rating,
            picked.iter().map(|&k| rating_task(population[k])).collect::<Result<Vec<_>, _>>()?,
        ),
        TaskSource::Ranking { systems, .. } => (
            TaskKind::Ranking,
            picked
                .iter()
                .map(|&k| ranking_task(population[k], systems))
                .collect::<Result<Vec<_>, _>>()?,
        ),
    };
    Ok(TaskFile {
        schema: TASKS_SCHEMA.to_string(),
        kind,
        seed,
        population: population.len(),
        sample_size,
        config_hash: None,
        tasks,
    })
}

/// Candidate order shown to `rater` for `task_id`: position `k` displays
/// candidate `order[k]` under label `BLIND_LABELS[k]`.
pub fn blind_order(seed: u64, task_id: &str, rater_id: &str) -> Vec<usize> {
    let digest = Sha256::digest(format!("{seed}:{task_id}:{rater_id}").as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    let mut rng = ChaCha8Rng::seed_from_u64(u64::from_le_bytes(bytes));
    let mut order: Vec<usize> = (0..BLIND_LABELS.len()).collect();
    order.shuffle(&mut rng);
    order
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindCandidate {
    pub label: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BlindPayload {
    Rating(RatingPayload),
    Ranking {
        context: Vec<ContextTurn>,
        candidates: Vec<BlindCandidate>,
    },
}

/// A task as served to raters: ranking candidates carry labels, not system names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindTask {
    pub id: String,
    pub payload: BlindPayload,
}

pub fn blind_task(task: &AnnotationTask, seed: u64, rater_id: &str) -> BlindTask {
    let payload = match &task.payload {
        TaskPayload::Rating(p) => BlindPayload::Rating(p.clone()),
        TaskPayload::Ranking(p) => {
            let order = blind_order(seed, &task.id, rater_id);
            BlindPayload::Ranking {
                context: p.context.clone(),
                candidates: order
                    .iter()
                    .zip(BLIND_LABELS)
                    .map(|(&k, label)| BlindCandidate {
                        label: label.to_string(),
                        response: p.candidates[k].response.clone(),
                    })
                    .collect(),
            }
        }
    };
    BlindTask {
        id: task.id.clone(),
        payload,
    }
}

fn rating_field(body: &Value, q: &str, errors: &mut Vec<FieldError>) -> Option<Rating> {
    match body.get(q) {
        None | Some(Value::Null) => {
            errors.push(FieldError::new(q, "required"));
            None
        }
        Some(v) => match serde_json::from_value::<Rating>(v.clone()) {
            Ok(r) => Some(r),
            Err(_) => {
                errors.push(FieldError::new(q, "expected one of NotAtAll, Somewhat, Fully"));
                None
            }
        },
    }
}

/// Validates a rater's JSON answer for `task` and returns the unblinded record.
///
/// Rating bodies carry `q1`..`q3`; ranking bodies carry `ranks` keyed by blind label.
pub fn validate_submission(
    task: &AnnotationTask,
    seed: u64,
    rater_id: &str,
    body: &Value,
) -> Result<AnnotationRecord, AnnotationError> {
    let mut errors = Vec::new();
    if rater_id.trim().is_empty() {
        errors.push(FieldError::new("rater_id", "required"));
    }
    if !body.is_object() {
        errors.push(FieldError::new("body", "expected a JSON object"));
        return Err(AnnotationError::Invalid(errors));
    }
    let record = match &task.payload {
        TaskPayload::Rating(_) => {
            let q: Vec<Option<Rating>> = QUESTIONS.iter().map(|q| rating_field(body, q, &mut errors)).collect();
            match (q[0], q[1], q[2]) {
                (Some(q1), Some(q2), Some(q3)) if errors.is_empty() => Some(AnnotationRecord::Rating(RatingRecord {
                    example_id: task.id.clone(),
                    rater_id: rater_id.to_string(),
                    q1,
                    q2,
                    q3,
                })),
                _ => None,
            }
        }
        TaskPayload::Ranking(p) => {
            let order = blind_order(seed, &task.id, rater_id);
            let mut ranks = BTreeMap::new();
            match body.get("ranks").and_then(Value::as_object) {
                None => errors.push(FieldError::new("ranks", "required object keyed by candidate label")),
                Some(given) => {
                    for key in given.keys() {
                        if !BLIND_LABELS.contains(&key.as_str()) {
                            errors.push(FieldError::new(format!("ranks.{key}"), "unknown candidate label"));
                        }
                    }
                    for (pos, label) in BLIND_LABELS.iter().enumerate() {
                        let field = format!("ranks.{label}");
                        match given.get(*label).and_then(Value::as_u64) {
                            None => errors.push(FieldError::new(field, "required integer rank")),
                            Some(r) if !(1..=3).contains(&r) => {
                                errors.push(FieldError::new(field, "rank must be 1, 2 or 3"))
                            }
                            Some(r) => {
                                ranks.insert(p.candidates[order[pos]].system.clone(), r as u8);
                            }
                        }
                    }
                    if errors.is_empty() && !ranks.values().any(|&r| r == 1) {
                        errors.push(FieldError::new("ranks", "at least one candidate must be ranked 1"));
                    }
                }
            }
            errors.is_empty().then(|| {
                AnnotationRecord::Ranking(RankingRecord {
                    example_id: task.id.clone(),
                    rater_id: rater_id.to_string(),
                    ranks,
                })
            })
        }
    };
    match record {
        Some(r) if errors.is_empty() => Ok(r),
        _ => Err(AnnotationError::Invalid(errors)),
    }
}
