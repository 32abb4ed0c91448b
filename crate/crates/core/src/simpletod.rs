//! SimpleToD single-sequence format.
//!
//! ```text
//! <|context|> U: ... S: ... <|belief|> [d, s, v], ... <|action|> [d, a, s], ... <|response|> ... <|endofsequence|>
//! ```
//!
//! Triplets are sorted, so set-equal inputs render identically. An act
//! without a slot renders its slot as `none`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BeliefTriplet, Dialogue, DialogueAct, Speaker, Turn};

pub const CONTEXT: &str = "<|context|>";
pub const BELIEF: &str = "<|belief|>";
pub const ACTION: &str = "<|action|>";
pub const RESPONSE: &str = "<|response|>";
pub const END: &str = "<|endofsequence|>";

const EMPTY_SLOT: &str = "none";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimpleTodError {
    #[error("history must contain at least one turn")]
    EmptyHistory,
    #[error("{skipped} malformed item(s) in generation")]
    Malformed { skipped: usize },
    #[error("{path}: {message}")]
    Predictions { path: String, message: String },
}

/// Separator spellings. Alternates act as segment boundaries when parsing
/// output from models trained with other token sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Separators {
    pub context: String,
    pub belief: String,
    pub action: String,
    pub response: String,
    pub end: String,
    pub alternates: Vec<String>,
}

impl Default for Separators {
    fn default() -> Self {
        Self {
            context: CONTEXT.into(),
            belief: BELIEF.into(),
            action: ACTION.into(),
            response: RESPONSE.into(),
            end: END.into(),
            alternates: [
                "<|endofcontext|>",
                "<|endofbelief|>",
                "<|endofaction|>",
                "<|endofresponse|>",
                "<|endoftext|>",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

impl Separators {
    fn all(&self) -> impl Iterator<Item = &str> {
        [&self.context, &self.belief, &self.action, &self.response, &self.end]
            .into_iter()
            .chain(&self.alternates)
            .map(String::as_str)
            .filter(|s| !s.is_empty())
    }

    /// Text between `open` and the next separator of any kind.
    fn segment<'t>(&self, text: &'t str, open: &str) -> Option<&'t str> {
        let start = text.find(open)? + open.len();
        let rest = &text[start..];
        let end = self.all().filter_map(|s| rest.find(s)).min().unwrap_or(rest.len());
        Some(&rest[..end])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationOutput {
    pub belief: BTreeSet<BeliefTriplet>,
    pub acts: BTreeSet<DialogueAct>,
    pub response: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedGeneration {
    pub output: GenerationOutput,
    /// Malformed triplets or stray text that were dropped.
    pub skipped: usize,
}

fn turn_prefix(t: &Turn) -> &'static str {
    match t.speaker {
        Speaker::User => "U:",
        Speaker::System => "S:",
    }
}

fn triplets<'a>(items: impl Iterator<Item = [&'a str; 3]>) -> String {
    let mut rendered: Vec<String> = items.map(|[a, b, c]| format!("[{a}, {b}, {c}]")).collect();
    rendered.sort();
    rendered.join(", ")
}

fn push_segment(out: &mut String, sep: &str, body: &str) {
    out.push_str(sep);
    if !body.is_empty() {
        out.push(' ');
        out.push_str(body);
    }
    out.push(' ');
}

pub fn render_sequence(
    history: &[Turn],
    belief: &BTreeSet<BeliefTriplet>,
    acts: &BTreeSet<DialogueAct>,
    response: &str,
) -> Result<String, SimpleTodError> {
    if history.is_empty() {
        return Err(SimpleTodError::EmptyHistory);
    }
    let context = history
        .iter()
        .map(|t| format!("{} {}", turn_prefix(t), t.text.trim()))
        .collect::<Vec<_>>()
        .join(" ");
    let belief = triplets(belief.iter().map(|b| [b.domain.as_str(), b.slot.as_str(), b.value.as_str()]));
    let acts = triplets(acts.iter().map(|a| {
        let slot = if a.slot.is_empty() { EMPTY_SLOT } else { a.slot.as_str() };
        [a.domain.as_str(), a.act.as_str(), slot]
    }));
    let mut out = String::new();
    push_segment(&mut out, CONTEXT, &context);
    push_segment(&mut out, BELIEF, &belief);
    push_segment(&mut out, ACTION, &acts);
    push_segment(&mut out, RESPONSE, response.trim());
    out.push_str(END);
    Ok(out)
}

/// One training sequence per system turn of `d`: the history up to the user
/// turn, that turn's belief, the system acts and delexicalized response.
pub fn dialogue_sequences(d: &Dialogue) -> Vec<String> {
    d.turns
        .iter()
        .enumerate()
        .filter(|(i, t)| *i > 0 && t.speaker == Speaker::System)
        .filter_map(|(i, t)| {
            let response = t.delex_text.as_deref().unwrap_or(&t.text);
            render_sequence(&d.turns[..i], &d.turns[i - 1].belief, &t.acts, response).ok()
        })
        .collect()
}

/// Bracketed items of a segment plus the number of dropped fragments.
fn bracket_items(segment: &str) -> (Vec<Vec<String>>, usize) {
    let mut items = Vec::new();
    let mut skipped = 0;
    let mut rest = segment;
    loop {
        let stray_end = rest.find('[').unwrap_or(rest.len());
        if rest[..stray_end].chars().any(|c| !c.is_whitespace() && c != ',') {
            skipped += 1;
        }
        rest = &rest[stray_end..];
        if rest.is_empty() {
            break;
        }
        let Some(close) = rest.find(']') else {
            skipped += 1;
            break;
        };
        let inner = &rest[1..close];
        if inner.contains('[') {
            skipped += 1;
            rest = &rest[1 + inner.rfind('[').expect("checked") ..];
            continue;
        }
        items.push(inner.splitn(3, ',').map(|p| p.trim().to_string()).collect());
        rest = &rest[close + 1..];
    }
    (items, skipped)
}

pub fn parse_generation(text: &str) -> ParsedGeneration {
    parse_generation_with(text, &Separators::default())
}

/// Lenient parse: never fails, counts what it had to drop.
pub fn parse_generation_with(text: &str, seps: &Separators) -> ParsedGeneration {
    let mut parsed = ParsedGeneration::default();
    if let Some(segment) = seps.segment(text, &seps.belief) {
        let (items, skipped) = bracket_items(segment);
        parsed.skipped += skipped;
        for item in items {
            match item.as_slice() {
                [d, s, v] if !d.is_empty() && !s.is_empty() && !v.is_empty() => {
                    parsed.output.belief.insert(BeliefTriplet::raw(d, s, v));
                }
                _ => parsed.skipped += 1,
            }
        }
    }
    if let Some(segment) = seps.segment(text, &seps.action) {
        let (items, skipped) = bracket_items(segment);
        parsed.skipped += skipped;
        for item in items {
            match item.as_slice() {
                [d, a, s] if !d.is_empty() && !a.is_empty() && !s.is_empty() && !s.contains(',') => {
                    let slot = if s == EMPTY_SLOT { "" } else { s.as_str() };
                    parsed.output.acts.insert(DialogueAct::new(d, a, slot));
                }
                _ => parsed.skipped += 1,
            }
        }
    }
    if let Some(segment) = seps.segment(text, &seps.response) {
        parsed.output.response = segment.trim().to_string();
    }
    parsed
}

/// Strict parse: any dropped fragment is an error.
pub fn parse_generation_strict(text: &str) -> Result<GenerationOutput, SimpleTodError> {
    let parsed = parse_generation(text);
    if parsed.skipped > 0 {
        return Err(SimpleTodError::Malformed { skipped: parsed.skipped });
    }
    Ok(parsed.output)
}

/// One line of a predictions file: either a raw `generation` or pre-split fields.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub dialogue_id: String,
    /// Index of the system turn the prediction is for.
    pub turn_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub belief: Option<BTreeSet<BeliefTriplet>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acts: Option<BTreeSet<DialogueAct>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
}

impl PredictionRecord {
    pub fn to_output(&self) -> ParsedGeneration {
        if let Some(g) = &self.generation {
            return parse_generation(g);
        }
        ParsedGeneration {
            output: GenerationOutput {
                belief: self.belief.clone().unwrap_or_default(),
                acts: self.acts.clone().unwrap_or_default(),
                response: self.response.clone().unwrap_or_default(),
            },
            skipped: 0,
        }
    }
}

/// Predictions keyed by `(dialogue_id, system turn index)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Predictions {
    pub turns: BTreeMap<(String, usize), GenerationOutput>,
    pub skipped_items: usize,
}

impl Predictions {
    pub fn get(&self, dialogue_id: &str, turn_index: usize) -> Option<&GenerationOutput> {
        self.turns.get(&(dialogue_id.to_string(), turn_index))
    }

    pub fn from_jsonl(text: &str, origin: &str) -> Result<Self, SimpleTodError> {
        let mut out = Predictions::default();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: PredictionRecord = serde_json::from_str(line).map_err(|e| SimpleTodError::Predictions {
                path: origin.to_string(),
                message: format!("line {}: {e}", n + 1),
            })?;
            let parsed = rec.to_output();
            out.skipped_items += parsed.skipped;
            out.turns.insert((rec.dialogue_id, rec.turn_index), parsed.output);
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self, SimpleTodError> {
        let origin = path.display().to_string();
        let bytes = fs::read(path).map_err(|e| SimpleTodError::Predictions {
            path: origin.clone(),
            message: e.to_string(),
        })?;
        Self::from_jsonl(&String::from_utf8_lossy(&bytes), &origin)
    }

    /// Gold annotations of `dialogues` in prediction form; evaluating these
    /// measures the references against themselves.
    pub fn oracle<'a>(dialogues: impl IntoIterator<Item = &'a Dialogue>) -> Self {
        let mut out = Predictions::default();
        for d in dialogues {
            for (i, t) in d.turns.iter().enumerate().filter(|(i, t)| *i > 0 && t.speaker == Speaker::System) {
                out.turns.insert(
                    (d.id.clone(), i),
                    GenerationOutput {
                        belief: d.turns[i - 1].belief.clone(),
                        acts: t.acts.clone(),
                        response: t.delex_text.clone().unwrap_or_else(|| t.text.clone()),
                    },
                );
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use proptest::collection::btree_set;
    use proptest::prelude::*;

    use super::*;

    fn history() -> Vec<Turn> {
        vec![Turn::user("I want indian food.")]
    }

    #[test]
    fn renders_bracketed_belief() {
        let belief = BTreeSet::from([BeliefTriplet::raw("restaurant", "food", "indian")]);
        let acts = BTreeSet::from([DialogueAct::new("restaurant", "inform", "name")]);
        let s = render_sequence(&history(), &belief, &acts, "[name] serves indian food.").unwrap();
        assert_eq!(
            s,
            "<|context|> U: I want indian food. <|belief|> [restaurant, food, indian] <|action|> [restaurant, inform, name] <|response|> [name] serves indian food. <|endofsequence|>"
        );
        let parsed = parse_generation_strict(&s).unwrap();
        assert_eq!(parsed.belief, belief);
        assert_eq!(parsed.acts, acts);
        assert_eq!(parsed.response, "[name] serves indian food.");
    }

    #[test]
    fn empty_segments_stay_in_place() {
        let s = render_sequence(&history(), &BTreeSet::new(), &BTreeSet::new(), "Hello.").unwrap();
        assert!(s.contains("<|belief|> <|action|> <|response|> Hello."));
        assert_eq!(parse_generation_strict(&s).unwrap().response, "Hello.");
        assert_eq!(
            render_sequence(&[], &BTreeSet::new(), &BTreeSet::new(), ""),
            Err(SimpleTodError::EmptyHistory)
        );
    }

    #[test]
    fn slotless_act_uses_none() {
        let acts = BTreeSet::from([DialogueAct::new("general", "greet", "")]);
        let s = render_sequence(&history(), &BTreeSet::new(), &acts, "Hi").unwrap();
        assert!(s.contains("[general, greet, none]"));
        assert_eq!(parse_generation(&s).output.acts, acts);
    }

    #[test]
    fn garbage_is_counted_not_fatal() {
        let p = parse_generation("<|belief|> blah [a, b] ]] <|action|> [x, y <|response|>");
        assert!(p.output.belief.is_empty());
        assert!(p.output.acts.is_empty());
        assert!(p.skipped > 0);
        assert!(parse_generation_strict("<|belief|> junk <|response|> ok").is_err());
        assert_eq!(parse_generation("").output, GenerationOutput::default());
    }

    #[test]
    fn alternate_separators_end_segments() {
        let text = "<|belief|> [hotel, area, north] <|endofbelief|> <|action|> [hotel, request, price] <|endofaction|> <|response|> What price range? <|endofresponse|>";
        let p = parse_generation(text);
        assert_eq!(p.skipped, 0);
        assert_eq!(p.output.response, "What price range?");
        assert_eq!(p.output.belief.len(), 1);
    }

    #[test]
    fn predictions_from_jsonl() {
        let text = concat!(
            r#"{"dialogue_id": "D1", "turn_index": 1, "generation": "<|belief|> [taxi, leaveat, 17:45] <|action|> [taxi, inform, car] <|response|> Booked [car]. <|endofsequence|>"}"#,
            "\n\n",
            r#"{"dialogue_id": "D1", "turn_index": 3, "belief": [["taxi", "leaveat", "17:45"]], "acts": [], "response": "Bye."}"#,
        );
        let p = Predictions::from_jsonl(text, "mem").unwrap();
        assert_eq!(p.turns.len(), 2);
        assert_eq!(p.get("D1", 1).unwrap().response, "Booked [car].");
        assert_eq!(p.get("D1", 3).unwrap().belief.len(), 1);
        let err = Predictions::from_jsonl("{\"dialogue_id\": 3}", "preds.jsonl").unwrap_err();
        assert!(err.to_string().contains("line 1"));
    }

    fn word() -> impl Strategy<Value = String> {
        "[a-z][a-z0-9 :']{0,12}[a-z0-9]".prop_map(|s| s)
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(
            belief in btree_set((word(), word(), word()), 0..5),
            acts in btree_set((word(), word(), prop_oneof![Just(String::new()), word()]), 0..5),
            response in "[a-zA-Z\\[\\]., ]{0,40}",
        ) {
            let belief: BTreeSet<_> = belief.iter().map(|(d, s, v)| BeliefTriplet::raw(d, s, v)).collect();
            let acts: BTreeSet<_> = acts
                .iter()
                .filter(|(_, _, s)| s != EMPTY_SLOT)
                .map(|(d, a, s)| DialogueAct::new(d, a, s))
                .collect();
            let text = render_sequence(&history(), &belief, &acts, &response).unwrap();
            let parsed = parse_generation_strict(&text).unwrap();
            prop_assert_eq!(parsed.belief, belief);
            prop_assert_eq!(parsed.acts, acts);
            prop_assert_eq!(parsed.response, response.trim());
        }

        #[test]
        fn lenient_parse_is_total(s in "\\PC{0,200}") {
            let _ = parse_generation(&s);
        }
    }
}
