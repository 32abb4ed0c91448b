//! Few-shot template files.
//!
//! ```text
//! +++
//! kind = "backstory"
//! labels = ["Situation", "Conversational Context", "Original User Utterance", "User Utterance With Backstory"]
//! terminator = "[END]"
//! open_prefix = "User:"
//! +++
//! Instruction text...
//!
//! ### Exemplar
//! Situation:
//! ...
//! ```
//!
//! Each exemplar lists every label, in order, as a line of its own ending in
//! `:`; the section body runs until the next label line. The last label is
//! left open in the rendered query block.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PromptError;

pub const EXEMPLAR_MARKER: &str = "### Exemplar";
pub const DEFAULT_EXEMPLARS: usize = 3;
const BLOCK_SEPARATOR: &str = "\n\n---\n\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    Situation,
    Backstory,
    Reaction,
}

impl PromptKind {
    pub const ALL: [PromptKind; 3] = [PromptKind::Situation, PromptKind::Backstory, PromptKind::Reaction];

    /// Number of labeled sections a template of this kind must declare.
    pub fn label_count(self) -> usize {
        match self {
            PromptKind::Situation => 2,
            PromptKind::Backstory => 4,
            PromptKind::Reaction => 3,
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            PromptKind::Situation => "situation.txt",
            PromptKind::Backstory => "backstory.txt",
            PromptKind::Reaction => "reaction.txt",
        }
    }
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptKind::Situation => "situation",
            PromptKind::Backstory => "backstory",
            PromptKind::Reaction => "reaction",
        })
    }
}

#[derive(Debug, Deserialize)]
struct FrontMatter {
    kind: PromptKind,
    labels: Vec<String>,
    #[serde(default = "default_terminator")]
    terminator: String,
    #[serde(default)]
    open_prefix: String,
}

fn default_terminator() -> String {
    "[END]".into()
}

/// One exemplar: label to section text.
pub type Exemplar = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub kind: PromptKind,
    pub instruction: String,
    pub section_labels: Vec<String>,
    pub exemplars: Vec<Exemplar>,
    pub terminator: String,
    /// Text placed after the open label, e.g. `User:`.
    pub open_prefix: String,
}

impl PromptTemplate {
    /// Builds and checks a template: the label count must fit the kind and
    /// exactly `expected_exemplars` (at least one) exemplars must be given.
    pub fn new(
        kind: PromptKind,
        instruction: &str,
        section_labels: Vec<String>,
        exemplars: Vec<Exemplar>,
        terminator: &str,
        open_prefix: &str,
        expected_exemplars: usize,
    ) -> Result<Self, PromptError> {
        let t = Self {
            kind,
            instruction: instruction.trim().to_string(),
            section_labels,
            exemplars,
            terminator: terminator.to_string(),
            open_prefix: open_prefix.to_string(),
        };
        t.check(expected_exemplars)?;
        Ok(t)
    }

    fn check(&self, expected_exemplars: usize) -> Result<(), PromptError> {
        let bad = |msg: String| Err(PromptError::Template { kind: self.kind, message: msg });
        if expected_exemplars == 0 {
            return bad("a few-shot template needs at least one exemplar".into());
        }
        if self.section_labels.len() != self.kind.label_count() {
            return bad(format!(
                "expected {} section labels, found {}",
                self.kind.label_count(),
                self.section_labels.len()
            ));
        }
        if self.exemplars.len() != expected_exemplars {
            return bad(format!("expected {expected_exemplars} exemplars, found {}", self.exemplars.len()));
        }
        for (i, ex) in self.exemplars.iter().enumerate() {
            for label in &self.section_labels {
                match ex.get(label) {
                    Some(text) if !text.trim().is_empty() => {}
                    _ => return bad(format!("exemplar {} is missing section `{label}`", i + 1)),
                }
            }
        }
        if self.terminator.is_empty() {
            return bad("terminator must be non-empty".into());
        }
        Ok(())
    }

    pub fn parse(text: &str, expected_exemplars: usize) -> Result<Self, PromptError> {
        let err = |message: String| PromptError::TemplateFile { message };
        let rest = text
            .trim_start()
            .strip_prefix("+++")
            .ok_or_else(|| err("template must start with a `+++` front-matter block".into()))?;
        let (front, body) = rest
            .split_once("\n+++")
            .ok_or_else(|| err("unterminated front-matter block".into()))?;
        let fm: FrontMatter = toml::from_str(front).map_err(|e| err(format!("front matter: {e}")))?;

        let separator = format!("\n{EXEMPLAR_MARKER}");
        let mut blocks = body.split(separator.as_str());
        let instruction = blocks.next().unwrap_or_default().trim().to_string();
        let mut exemplars = Vec::new();
        for (i, block) in blocks.enumerate() {
            exemplars.push(parse_exemplar(block, &fm.labels).map_err(|m| err(format!("exemplar {}: {m}", i + 1)))?);
        }
        Self::new(
            fm.kind,
            &instruction,
            fm.labels,
            exemplars,
            &fm.terminator,
            &fm.open_prefix,
            expected_exemplars,
        )
    }

    fn render_sections(&self, sections: &[(&str, &str)]) -> String {
        sections
            .iter()
            .map(|(label, text)| format!("{label}:\n{}", text.trim_end()))
            .collect::<Vec<_>>()
            .join("\n\n")
    }

    /// Instruction, every exemplar, then the query sections followed by the open label.
    pub fn render(&self, query: &[&str]) -> String {
        debug_assert_eq!(query.len() + 1, self.section_labels.len());
        let mut blocks = vec![self.instruction.clone()];
        for ex in &self.exemplars {
            let sections: Vec<(&str, &str)> = self
                .section_labels
                .iter()
                .map(|l| (l.as_str(), ex[l].as_str()))
                .collect();
            blocks.push(self.render_sections(&sections));
        }
        let filled: Vec<(&str, &str)> = self
            .section_labels
            .iter()
            .zip(query)
            .map(|(l, q)| (l.as_str(), *q))
            .collect();
        let open_label = self.section_labels.last().expect("labels checked");
        let mut query_block = self.render_sections(&filled);
        query_block.push_str(&format!("\n\n{open_label}:\n{}", self.open_prefix));
        blocks.push(query_block);
        blocks.join(BLOCK_SEPARATOR)
    }
}

impl FromStr for PromptTemplate {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s, DEFAULT_EXEMPLARS)
    }
}

fn parse_exemplar(block: &str, labels: &[String]) -> Result<Exemplar, String> {
    let mut sections = Exemplar::new();
    let mut current: Option<(usize, Vec<&str>)> = None;
    let mut next_label = 0;
    for line in block.lines() {
        let trimmed = line.trim_end();
        if next_label < labels.len() && trimmed == format!("{}:", labels[next_label]) {
            if let Some((idx, lines)) = current.take() {
                sections.insert(labels[idx].clone(), lines.join("\n").trim().to_string());
            }
            current = Some((next_label, Vec::new()));
            next_label += 1;
        } else if let Some((_, lines)) = current.as_mut() {
            lines.push(line);
        } else if !trimmed.is_empty() {
            return Err(format!("text before the first label `{}`", labels.first().map(String::as_str).unwrap_or("")));
        }
    }
    if let Some((idx, lines)) = current {
        sections.insert(labels[idx].clone(), lines.join("\n").trim().to_string());
    }
    if next_label != labels.len() {
        return Err(format!("missing section `{}`", labels[next_label]));
    }
    Ok(sections)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "+++\nkind = \"situation\"\nlabels = [\"Conversation\", \"Situation\"]\n+++\nSummarize.\n\n### Exemplar\nConversation:\nUser: hi\n\nSituation:\nThey said hi. [END]\n";

    #[test]
    fn parses_front_matter_and_exemplars() {
        let t = PromptTemplate::parse(TINY, 1).unwrap();
        assert_eq!(t.kind, PromptKind::Situation);
        assert_eq!(t.instruction, "Summarize.");
        assert_eq!(t.exemplars[0]["Situation"], "They said hi. [END]");
        assert_eq!(t.terminator, "[END]");
    }

    #[test]
    fn exemplar_count_is_enforced() {
        assert!(matches!(PromptTemplate::parse(TINY, 3), Err(PromptError::Template { .. })));
        assert!(matches!(PromptTemplate::parse(TINY, 0), Err(PromptError::Template { .. })));
    }

    #[test]
    fn missing_section_is_rejected() {
        let broken = TINY.replace("Situation:\nThey", "Summary:\nThey");
        assert!(PromptTemplate::parse(&broken, 1).is_err());
    }

    #[test]
    fn render_ends_with_open_label() {
        let t = PromptTemplate::parse(TINY, 1).unwrap();
        let p = t.render(&["User: yo"]);
        assert!(p.starts_with("Summarize.\n\n---\n\nConversation:\nUser: hi"));
        assert!(p.ends_with("Conversation:\nUser: yo\n\nSituation:\n"));
    }
}
