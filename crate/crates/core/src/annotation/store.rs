use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AnnotationError, TaskFile};
use crate::metrics::AnnotationRecord;

pub const EVENT_SCHEMA: &str = "interfere.result-event/v1";

/// One line of the result log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultEvent {
    pub schema: String,
    pub seq: u64,
    pub task_id: String,
    pub rater_id: String,
    /// Unblinded record.
    pub record: AnnotationRecord,
    /// Candidate order the rater saw, for ranking tasks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubmitOutcome {
    Created,
    Replaced,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaterGap {
    pub rater_id: String,
    pub missing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub tasks: usize,
    pub records: usize,
    pub raters: Vec<String>,
    /// Task id to the raters who submitted it.
    pub submitted: BTreeMap<String, Vec<String>>,
    pub gaps: Vec<RaterGap>,
}

/// Append-only JSONL log materialized with last-write-wins per (task, rater).
#[derive(Debug)]
pub struct ResultStore {
    path: PathBuf,
    file: File,
    next_seq: u64,
    current: BTreeMap<(String, String), ResultEvent>,
}

impl ResultStore {
    /// Opens or creates the log at `path`. An unterminated final line left by
    /// an interrupted write is ignored.
    pub fn open(path: &Path) -> Result<Self, AnnotationError> {
        let io = |source| AnnotationError::Io {
            path: path.to_path_buf(),
            source,
        };
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io(e)),
        };
        let mut current = BTreeMap::new();
        let mut next_seq = 0;
        let lines: Vec<&str> = text.split('\n').collect();
        let complete = lines.len().saturating_sub(1);
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let event: ResultEvent = match serde_json::from_str(line) {
                Ok(e) => e,
                Err(_) if i >= complete => {
                    tracing::warn!(path = %path.display(), "ignoring unterminated final line in result log");
                    continue;
                }
                Err(e) => {
                    return Err(AnnotationError::Format {
                        path: path.to_path_buf(),
                        message: format!("line {}: {e}", i + 1),
                    })
                }
            };
            next_seq = next_seq.max(event.seq + 1);
            current.insert((event.task_id.clone(), event.rater_id.clone()), event);
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        if !text.is_empty() && !text.ends_with('\n') {
            file.write_all(b"\n").map_err(io)?;
        }
        Ok(Self {
            path: path.to_path_buf(),
            file,
            next_seq,
            current,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Records `record`. Re-submitting an identical record writes nothing.
    pub fn submit(
        &mut self,
        task_id: &str,
        rater_id: &str,
        record: AnnotationRecord,
        order: Option<Vec<usize>>,
    ) -> Result<SubmitOutcome, AnnotationError> {
        let key = (task_id.to_string(), rater_id.to_string());
        let outcome = match self.current.get(&key) {
            Some(prev) if prev.record == record && prev.order == order => return Ok(SubmitOutcome::Unchanged),
            Some(_) => SubmitOutcome::Replaced,
            None => SubmitOutcome::Created,
        };
        let event = ResultEvent {
            schema: EVENT_SCHEMA.to_string(),
            seq: self.next_seq,
            task_id: task_id.to_string(),
            rater_id: rater_id.to_string(),
            record,
            order,
        };
        let mut line = serde_json::to_string(&event).expect("event serializes");
        line.push('\n');
        let io = |source| AnnotationError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(line.as_bytes()).map_err(io)?;
        self.file.sync_data().map_err(io)?;
        if outcome == SubmitOutcome::Replaced {
            tracing::info!(task = task_id, rater = rater_id, "replacing earlier submission");
        }
        self.next_seq += 1;
        self.current.insert(key, event);
        Ok(outcome)
    }

    pub fn get(&self, task_id: &str, rater_id: &str) -> Option<&ResultEvent> {
        self.current.get(&(task_id.to_string(), rater_id.to_string()))
    }

    /// Current records ordered by task then rater.
    pub fn records(&self) -> impl Iterator<Item = &AnnotationRecord> {
        self.current.values().map(|e| &e.record)
    }

    pub fn len(&self) -> usize {
        self.current.len()
    }

    pub fn is_empty(&self) -> bool {
        self.current.is_empty()
    }

    /// Annotation JSONL, one tagged record per (task, rater).
    pub fn export_jsonl(&self) -> String {
        self.records()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }

    /// Submission coverage of `tasks` by every rater seen so far.
    pub fn progress(&self, tasks: &TaskFile) -> Progress {
        let raters: BTreeSet<&str> = self.current.keys().map(|(_, r)| r.as_str()).collect();
        let mut submitted: BTreeMap<String, Vec<String>> = tasks.tasks.iter().map(|t| (t.id.clone(), Vec::new())).collect();
        for (task, rater) in self.current.keys() {
            if let Some(v) = submitted.get_mut(task) {
                v.push(rater.clone());
            }
        }
        let gaps = raters
            .iter()
            .filter_map(|&rater| {
                let missing: Vec<String> = tasks
                    .tasks
                    .iter()
                    .filter(|t| !self.current.contains_key(&(t.id.clone(), rater.to_string())))
                    .map(|t| t.id.clone())
                    .collect();
                (!missing.is_empty()).then(|| RaterGap {
                    rater_id: rater.to_string(),
                    missing,
                })
            })
            .collect();
        Progress {
            tasks: tasks.tasks.len(),
            records: self.current.len(),
            raters: raters.into_iter().map(String::from).collect(),
            submitted,
            gaps,
        }
    }
}
