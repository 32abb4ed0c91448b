//! Dialogue corpora: loading, validation, database lookups and delexicalization.
//!
//! On disk a split is one JSON file (`train.json`, `dev.json`, `test.json`)
//! holding either a bare array of dialogues or an object with a
//! `"dialogues"` array and optional `"provenance"`.

mod db;
mod delex;
pub mod import;
mod types;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use db::{Entity, VenueDatabase, PRIMARY_ID_SLOTS};
pub use delex::{delexicalize, Delexicalizer, DELEX_SLOTS};
pub use types::{
    is_neutral_domain, AugmentationMeta, AugmentationSeeds, BeliefTriplet, Dialogue, DialogueAct, DomainGoal,
    Speaker, Turn, TurnMode, NEUTRAL_DOMAINS,
};

pub const CORPUS_SCHEMA: &str = "interfere.corpus/v1";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("not found: {}", .0.display())]
    NotFound(PathBuf),
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON in {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("dialogue {dialogue_id}: field `{field}`: {message}")]
    Malformed {
        dialogue_id: String,
        field: String,
        message: String,
    },
    #[error("dialogue {0} has no concrete-domain acts")]
    NoConcreteDomain(String),
    #[error("database {}: {message}", path.display())]
    Database { path: PathBuf, message: String },
    #[error("import: {0}")]
    Import(String),
}

pub type Result<T, E = CorpusError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Multiwoz,
    Fusedchat,
}

impl FromStr for Flavor {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "multiwoz" | "mwoz" => Ok(Flavor::Multiwoz),
            "fusedchat" | "fchat" => Ok(Flavor::Fusedchat),
            other => Err(format!("unknown corpus flavor `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.json", self.name())
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "dev" | "val" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}`")),
        }
    }
}

/// Who produced a corpus file and with which settings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub flavor: Flavor,
    pub split: Split,
    pub dialogues: Vec<Dialogue>,
    pub provenance: Option<Provenance>,
}

#[derive(Serialize)]
struct CorpusFileOut<'a> {
    schema: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<&'a Provenance>,
    dialogues: &'a [Dialogue],
}

impl Corpus {
    pub fn new(flavor: Flavor, split: Split, dialogues: Vec<Dialogue>) -> Self {
        Self {
            flavor,
            split,
            dialogues,
            provenance: None,
        }
    }

    pub fn get(&self, id: &str) -> Option<&Dialogue> {
        self.dialogues.iter().find(|d| d.id == id)
    }

    /// Serializes to the canonical on-disk JSON (pretty-printed, trailing newline).
    pub fn to_json(&self) -> String {
        let out = CorpusFileOut {
            schema: CORPUS_SCHEMA,
            provenance: self.provenance.as_ref(),
            dialogues: &self.dialogues,
        };
        let mut s = serde_json::to_string_pretty(&out).expect("corpus serializes");
        s.push('\n');
        s
    }

    /// Writes `<dir>/<split>.json`, creating `dir` if needed.
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(self.split.file_name());
        let io = |source| CorpusError::Io {
            path: path.clone(),
            source,
        };
        fs::create_dir_all(dir).map_err(io)?;
        fs::write(&path, self.to_json()).map_err(io)?;
        Ok(path)
    }

    /// Parses a corpus from the canonical JSON text.
    pub fn from_json(text: &str, flavor: Flavor, split: Split, origin: &Path) -> Result<Self> {
        let root: Value = serde_json::from_str(text).map_err(|source| CorpusError::Json {
            path: origin.to_path_buf(),
            source,
        })?;
        let (items, provenance) = match root {
            Value::Array(items) => (items, None),
            Value::Object(mut obj) => {
                let provenance = match obj.remove("provenance") {
                    Some(p) => Some(serde_json::from_value(p).map_err(|e| CorpusError::Malformed {
                        dialogue_id: "<file>".into(),
                        field: "provenance".into(),
                        message: e.to_string(),
                    })?),
                    None => None,
                };
                match obj.remove("dialogues") {
                    Some(Value::Array(items)) => (items, provenance),
                    _ => {
                        return Err(CorpusError::Malformed {
                            dialogue_id: "<file>".into(),
                            field: "dialogues".into(),
                            message: "expected an array of dialogues".into(),
                        })
                    }
                }
            }
            _ => {
                return Err(CorpusError::Malformed {
                    dialogue_id: "<file>".into(),
                    field: "<root>".into(),
                    message: "expected an array or an object with `dialogues`".into(),
                })
            }
        };

        let mut dialogues = Vec::with_capacity(items.len());
        for (i, item) in items.into_iter().enumerate() {
            let id = item
                .get("id")
                .and_then(Value::as_str)
                .map(str::to_string)
                .unwrap_or_else(|| format!("<dialogue #{i}>"));
            let mut d: Dialogue = serde_path_to_error::deserialize(item).map_err(|e| CorpusError::Malformed {
                dialogue_id: id.clone(),
                field: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
            if flavor == Flavor::Multiwoz {
                d.prepended_chitchat.clear();
            }
            d.finalize()?;
            dialogues.push(d);
        }
        Ok(Corpus {
            flavor,
            split,
            dialogues,
            provenance,
        })
    }
}

/// Loads `<dir>/<split>.json`.
pub fn load_corpus(dir: &Path, flavor: Flavor, split: Split) -> Result<Corpus> {
    let path = dir.join(split.file_name());
    if !path.is_file() {
        return Err(CorpusError::NotFound(path));
    }
    let text = fs::read_to_string(&path).map_err(|source| CorpusError::Io {
        path: path.clone(),
        source,
    })?;
    Corpus::from_json(&text, flavor, split, &path)
}

/// Index of the first turn whose acts introduce a concrete domain other than
/// the dialogue's first one, or the turn count when no such turn exists.
pub fn domain_cutoff(dialogue: &Dialogue) -> Result<usize> {
    let first = dialogue
        .turns
        .iter()
        .flat_map(|t| t.acts.iter())
        .find(|a| a.is_concrete())
        .map(|a| a.domain.clone())
        .ok_or_else(|| CorpusError::NoConcreteDomain(dialogue.id.clone()))?;
    let cutoff = dialogue
        .turns
        .iter()
        .position(|t| t.acts.iter().any(|a| a.is_concrete() && a.domain != first))
        .unwrap_or(dialogue.turns.len());
    Ok(cutoff)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acts_dialogue(domains: &[&str]) -> Dialogue {
        let turns = domains
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let t = if i % 2 == 0 {
                    Turn::user("u")
                } else {
                    Turn::system("s", "s")
                };
                t.with_acts([(*d, "inform", "")])
            })
            .collect();
        Dialogue::new("D1", turns).unwrap()
    }

    #[test]
    fn cutoff_single_domain_is_turn_count() {
        let d = acts_dialogue(&["restaurant", "restaurant", "restaurant", "restaurant"]);
        assert_eq!(domain_cutoff(&d).unwrap(), 4);
    }

    #[test]
    fn cutoff_train_then_hotel() {
        let d = acts_dialogue(&["train", "train", "general", "hotel"]);
        assert_eq!(domain_cutoff(&d).unwrap(), 3);
        assert_eq!(d.domains, vec!["train", "hotel"]);
    }

    #[test]
    fn cutoff_ignores_booking_domain() {
        let d = acts_dialogue(&["train", "booking", "train", "hotel"]);
        assert_eq!(domain_cutoff(&d).unwrap(), 3);
    }

    #[test]
    fn cutoff_without_concrete_domain_errors() {
        let d = acts_dialogue(&["general", "booking"]);
        assert!(matches!(domain_cutoff(&d), Err(CorpusError::NoConcreteDomain(id)) if id == "D1"));
    }

    #[test]
    fn system_first_dialogue_is_rejected() {
        let err = Dialogue::new("X", vec![Turn::system("hi", "hi"), Turn::user("yo")]).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { ref field, .. } if field == "turns[0].speaker"), "{err}");
    }

    #[test]
    fn malformed_turn_names_dialogue_and_field() {
        let text = r#"[{"id": "PMUL1", "turns": [{"speaker": "user", "text": "hi"}, {"speaker": "robot", "text": "x"}]}]"#;
        let err = Corpus::from_json(text, Flavor::Multiwoz, Split::Test, Path::new("t.json")).unwrap_err();
        match err {
            CorpusError::Malformed { dialogue_id, field, .. } => {
                assert_eq!(dialogue_id, "PMUL1");
                assert_eq!(field, "turns[1].speaker");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_split_is_not_found() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_corpus(dir.path(), Flavor::Multiwoz, Split::Dev),
            Err(CorpusError::NotFound(_))
        ));
    }

    #[test]
    fn multiwoz_flavor_drops_prepended_chitchat() {
        let text = r#"[{"id": "A", "turns": [{"speaker": "user", "text": "hi"}],
            "prepended_chitchat": [{"speaker": "user", "text": "hey", "mode": "chitchat"}]}]"#;
        let mw = Corpus::from_json(text, Flavor::Multiwoz, Split::Test, Path::new("t")).unwrap();
        assert!(mw.dialogues[0].prepended_chitchat.is_empty());
        let fc = Corpus::from_json(text, Flavor::Fusedchat, Split::Test, Path::new("t")).unwrap();
        assert_eq!(fc.dialogues[0].prepended_chitchat.len(), 1);
    }
}
