//! Few-shot prompts for the seed situation, the user backstory and the system
//! reaction, plus parsers for the separator-structured completions.
//!
//! Expected completion shapes:
//!
//! ```text
//! **<original user utterance>** + <Backstory: ...> [END]
//! <Reaction: ...> + **<original system response>** [END]
//! ```

mod parse;
mod template;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Speaker, Turn};

pub use parse::{
    parse_backstory, parse_reaction, render_backstory_completion, render_reaction_completion, ParsedBackstory,
    ParsedReaction, StructureError, BACKSTORY_MARKER, MARKERS, REACTION_MARKER, TERMINATOR,
};
pub use template::{Exemplar, PromptKind, PromptTemplate, DEFAULT_EXEMPLARS, EXEMPLAR_MARKER};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("{kind} template: {message}")]
    Template { kind: PromptKind, message: String },
    #[error("template file: {message}")]
    TemplateFile { message: String },
    #[error("invalid prompt input: {0}")]
    Argument(String),
    #[error("cannot read template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

const BUILTIN: [(PromptKind, &str); 3] = [
    (PromptKind::Situation, include_str!("../../templates/situation.txt")),
    (PromptKind::Backstory, include_str!("../../templates/backstory.txt")),
    (PromptKind::Reaction, include_str!("../../templates/reaction.txt")),
];

/// Collapses runs of `*` so a wrapped utterance never contains the `**` delimiter.
pub fn sanitize_wrapped(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut prev_star = false;
    for c in text.chars() {
        if c == '*' && prev_star {
            continue;
        }
        prev_star = c == '*';
        out.push(c);
    }
    out
}

pub fn wrap(text: &str) -> String {
    format!("**{}**", sanitize_wrapped(text))
}

/// User turn text carrying an inline backstory marker, as shown to the reaction prompt.
pub fn mark_backstory(utterance: &str, backstory: &str) -> String {
    format!("{utterance} {BACKSTORY_MARKER} {backstory}>")
}

fn speaker_lines(turns: &[Turn]) -> String {
    turns
        .iter()
        .map(|t| format!("{}: {}", t.speaker.label(), t.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// The three templates used by the pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptKit {
    templates: BTreeMap<PromptKind, PromptTemplate>,
    sources: BTreeMap<PromptKind, String>,
}

impl PromptKit {
    /// Templates shipped with the crate (`templates/*.txt`).
    pub fn builtin() -> Self {
        Self::from_sources(BUILTIN.iter().map(|(k, s)| (*k, s.to_string())), DEFAULT_EXEMPLARS)
            .expect("built-in templates are valid")
    }

    /// Loads `situation.txt`, `backstory.txt` and `reaction.txt` from `dir`.
    pub fn load(dir: &Path, expected_exemplars: usize) -> Result<Self, PromptError> {
        let mut sources = Vec::new();
        for kind in PromptKind::ALL {
            let path = dir.join(kind.file_name());
            let text = fs::read_to_string(&path).map_err(|source| PromptError::Io {
                path: path.display().to_string(),
                source,
            })?;
            sources.push((kind, text));
        }
        Self::from_sources(sources, expected_exemplars)
    }

    pub fn from_sources(
        sources: impl IntoIterator<Item = (PromptKind, String)>,
        expected_exemplars: usize,
    ) -> Result<Self, PromptError> {
        let mut templates = BTreeMap::new();
        let mut texts = BTreeMap::new();
        for (kind, text) in sources {
            let t = PromptTemplate::parse(&text, expected_exemplars)?;
            if t.kind != kind {
                return Err(PromptError::Template {
                    kind,
                    message: format!("file declares kind `{}`", t.kind),
                });
            }
            templates.insert(kind, t);
            texts.insert(kind, text);
        }
        for kind in PromptKind::ALL {
            if !templates.contains_key(&kind) {
                return Err(PromptError::Template {
                    kind,
                    message: "template missing".into(),
                });
            }
        }
        Ok(Self {
            templates,
            sources: texts,
        })
    }

    pub fn template(&self, kind: PromptKind) -> &PromptTemplate {
        &self.templates[&kind]
    }

    /// SHA-256 over the template sources, for run reports.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for text in self.sources.values() {
            h.update(text.as_bytes());
            h.update([0]);
        }
        hex::encode(h.finalize())
    }

    /// Prompt asking for a summary of the prepended chitchat.
    pub fn build_situation_prompt(&self, chitchat: &[Turn]) -> Result<String, PromptError> {
        if chitchat.is_empty() {
            return Err(PromptError::Argument("chitchat exchange is empty".into()));
        }
        Ok(self.template(PromptKind::Situation).render(&[&speaker_lines(chitchat)]))
    }

    /// Prompt asking for the original utterance followed by a backstory.
    pub fn build_backstory_prompt(&self, situation: &str, context: &[Turn], user_utt: &str) -> Result<String, PromptError> {
        if user_utt.trim().is_empty() {
            return Err(PromptError::Argument("user utterance is empty".into()));
        }
        let context = if context.is_empty() {
            "None".to_string()
        } else {
            speaker_lines(context)
        };
        let original = format!("User: {}", wrap(user_utt));
        Ok(self
            .template(PromptKind::Backstory)
            .render(&[situation.trim(), &context, &original]))
    }

    /// Prompt asking for a reaction placed before the original response.
    /// The last context turn must be the user turn carrying the backstory marker.
    pub fn build_reaction_prompt(&self, context: &[Turn], orig_response: &str) -> Result<String, PromptError> {
        if orig_response.trim().is_empty() {
            return Err(PromptError::Argument("original system response is empty".into()));
        }
        match context.last() {
            Some(t) if t.speaker == Speaker::User && t.text.contains(BACKSTORY_MARKER) => {}
            _ => {
                return Err(PromptError::Argument(
                    "last context turn must be the user turn with a backstory marker".into(),
                ))
            }
        }
        let original = format!("System: {}", wrap(orig_response));
        Ok(self
            .template(PromptKind::Reaction)
            .render(&[&speaker_lines(context), &original]))
    }
}
