//! Human-annotation tasks: building blinded task files, validating rater
//! submissions and persisting them in an append-only log.

mod store;
mod tasks;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use store::{Progress, RaterGap, ResultEvent, ResultStore, SubmitOutcome, EVENT_SCHEMA};
pub use tasks::{
    blind_order, blind_task, build_tasks, validate_submission, AnnotationTask, BlindCandidate, BlindPayload,
    BlindTask, Candidate, ContextTurn, HighlightedTurn, Question, RankingPayload, RatingPayload, TaskFile,
    TaskKind, TaskPayload, TaskSource, BLIND_LABELS, QUESTION_TEXTS, TASKS_SCHEMA,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("{0}")]
    Argument(String),
    #[error("unknown task '{0}'")]
    UnknownTask(String),
    #[error("invalid submission: {}", .0.iter().map(|e| format!("{}: {}", e.field, e.message)).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<FieldError>),
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
