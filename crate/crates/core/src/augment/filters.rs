use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::similarity::levenshtein_similarity;
use crate::corpus::{Dialogue, Speaker, VenueDatabase};
use crate::prompts::StructureError;
use crate::text::{collapse_whitespace, normalize_text, ValueNormalizer};

/// Slots whose values must never appear in generated chitchat.
pub const REQUESTABLE_SLOTS: [&str; 5] = ["phone", "address", "postcode", "reference", "id"];

pub const FILTER_STRUCTURE: &str = "structure";
pub const FILTER_LEAKAGE_BACKSTORY: &str = "leakage_backstory";
pub const FILTER_LEAKAGE_REACTION: &str = "leakage_reaction";
pub const FILTER_SIMILARITY_BACKSTORY: &str = "similarity_backstory";
pub const FILTER_SIMILARITY_REACTION: &str = "similarity_reaction";

pub const FILTER_NAMES: [&str; 5] = [
    FILTER_STRUCTURE,
    FILTER_LEAKAGE_BACKSTORY,
    FILTER_LEAKAGE_REACTION,
    FILTER_SIMILARITY_BACKSTORY,
    FILTER_SIMILARITY_REACTION,
];

const MIN_VALUE_CHARS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail(String),
}

impl Verdict {
    pub fn fail(reason: impl Into<String>) -> Self {
        Verdict::Fail(reason.into())
    }

    pub fn passed(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pass => f.write_str("pass"),
            Verdict::Fail(reason) => write!(f, "fail ({reason})"),
        }
    }
}

impl From<Result<(), StructureError>> for Verdict {
    fn from(r: Result<(), StructureError>) -> Self {
        match r {
            Ok(()) => Verdict::Pass,
            Err(e) => Verdict::Fail(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotPattern {
    pub name: String,
    pub pattern: String,
    /// Only count matches containing at least one ASCII digit.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub require_digit: bool,
}

impl SlotPattern {
    pub fn new(name: &str, pattern: &str) -> Self {
        Self {
            name: name.into(),
            pattern: pattern.into(),
            require_digit: false,
        }
    }

    pub fn requiring_digit(mut self) -> Self {
        self.require_digit = true;
        self
    }
}

fn default_patterns() -> Vec<SlotPattern> {
    vec![
        SlotPattern::new("phone", r"\b(?:\d[ -]?){9,10}\d\b"),
        SlotPattern::new("reference", r"\b[A-Z0-9]{8}\b").requiring_digit(),
        SlotPattern::new("postcode", r"(?i)\b[a-z]{2}\d{1,2}\s?\d[a-z]{2}\b"),
        SlotPattern::new("trainid", r"(?i)\btr\d{4}\b"),
    ]
}

fn default_threshold() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    #[serde(default = "default_threshold")]
    pub levenshtein_threshold: f64,
    pub requestable_slot_patterns: Vec<SlotPattern>,
    /// Normalized requestable values per dialogue id.
    #[serde(skip)]
    pub requestable_slot_values: BTreeMap<String, BTreeSet<String>>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            levenshtein_threshold: default_threshold(),
            requestable_slot_patterns: default_patterns(),
            requestable_slot_values: BTreeMap::new(),
        }
    }
}

/// Filter settings with compiled patterns.
#[derive(Debug, Clone)]
pub struct Filters {
    config: FilterConfig,
    patterns: Vec<(String, Regex, bool)>,
}

impl Filters {
    pub fn new(config: FilterConfig) -> Result<Self, String> {
        if !(0.0..=1.0).contains(&config.levenshtein_threshold) {
            return Err(format!(
                "levenshtein_threshold must be in [0, 1], got {}",
                config.levenshtein_threshold
            ));
        }
        let mut patterns = Vec::new();
        for p in &config.requestable_slot_patterns {
            let re = Regex::new(&p.pattern).map_err(|e| format!("pattern `{}`: {e}", p.name))?;
            patterns.push((p.name.clone(), re, p.require_digit));
        }
        Ok(Self { config, patterns })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    /// Collects the requestable values of `d` from its gold turns and from
    /// the database entities it mentions.
    pub fn register_dialogue(&mut self, d: &Dialogue, db: Option<&VenueDatabase>) {
        let values = requestable_values(d, db);
        self.config.requestable_slot_values.insert(d.id.clone(), values);
    }

    /// Fails when `text` matches a slot pattern or repeats a known requestable value.
    pub fn check_slot_leakage(&self, text: &str, dialogue_id: &str) -> Verdict {
        for (name, re, require_digit) in &self.patterns {
            let hit = if *require_digit {
                re.find_iter(text).any(|m| m.as_str().chars().any(|c| c.is_ascii_digit()))
            } else {
                re.is_match(text)
            };
            if hit {
                return Verdict::fail(format!("pattern:{name}"));
            }
        }
        if let Some(values) = self.config.requestable_slot_values.get(dialogue_id) {
            let haystack = collapse_whitespace(&text.to_lowercase());
            if let Some(v) = values.iter().find(|v| contains_word(&haystack, v)) {
                return Verdict::fail(format!("value:{v}"));
            }
        }
        Verdict::Pass
    }

    /// Fails when the candidate is too close to the original or contains it.
    pub fn check_similarity(&self, candidate: &str, original: &str) -> Verdict {
        let cand = collapse_whitespace(&candidate.to_lowercase());
        let orig = collapse_whitespace(&original.to_lowercase());
        if !orig.is_empty() && cand.contains(&orig) {
            return Verdict::fail("contains original");
        }
        let ratio = levenshtein_similarity(candidate, original);
        if ratio >= self.config.levenshtein_threshold {
            return Verdict::fail(format!("similarity {ratio:.3}"));
        }
        Verdict::Pass
    }

    pub fn backstory_verdicts(&self, backstory: &str, original_user_utt: &str, dialogue_id: &str) -> Vec<(&'static str, Verdict)> {
        vec![
            (FILTER_LEAKAGE_BACKSTORY, self.check_slot_leakage(backstory, dialogue_id)),
            (FILTER_SIMILARITY_BACKSTORY, self.check_similarity(backstory, original_user_utt)),
        ]
    }

    pub fn reaction_verdicts(&self, reaction: &str, original_sys_resp: &str, dialogue_id: &str) -> Vec<(&'static str, Verdict)> {
        vec![
            (FILTER_LEAKAGE_REACTION, self.check_slot_leakage(reaction, dialogue_id)),
            (FILTER_SIMILARITY_REACTION, self.check_similarity(reaction, original_sys_resp)),
        ]
    }

    /// Verdicts for a successfully parsed backstory and reaction.
    pub fn apply_filters(
        &self,
        backstory: &str,
        reaction: &str,
        original_user_utt: &str,
        original_sys_resp: &str,
        dialogue_id: &str,
    ) -> BTreeMap<String, Verdict> {
        let mut out = BTreeMap::from([(FILTER_STRUCTURE.to_string(), Verdict::Pass)]);
        out.extend(
            self.backstory_verdicts(backstory, original_user_utt, dialogue_id)
                .into_iter()
                .chain(self.reaction_verdicts(reaction, original_sys_resp, dialogue_id))
                .map(|(k, v)| (k.to_string(), v)),
        );
        out
    }
}

fn contains_word(haystack: &str, needle: &str) -> bool {
    haystack.match_indices(needle).any(|(i, m)| {
        let before = haystack[..i].chars().next_back();
        let after = haystack[i + m.len()..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
    })
}

fn requestable_slot(key: &str) -> Option<&'static str> {
    match key.to_ascii_lowercase().as_str() {
        "phone" => Some("phone"),
        "address" => Some("address"),
        "postcode" => Some("postcode"),
        "ref" | "reference" => Some("reference"),
        "id" | "trainid" => Some("id"),
        _ => None,
    }
}

fn placeholder_regex() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[([a-z_]+)\]").expect("static pattern"))
}

/// Recovers `(slot, value)` pairs by aligning a delexicalized response with its surface text.
pub fn aligned_slot_values(text: &str, delex: &str) -> Vec<(String, String)> {
    let re = placeholder_regex();
    let delex = collapse_whitespace(delex);
    let mut pattern = String::from("(?is)^");
    let mut slots = Vec::new();
    let mut last = 0;
    for caps in re.captures_iter(&delex) {
        let m = caps.get(0).expect("whole match");
        pattern.push_str(&literal_pattern(&delex[last..m.start()]));
        pattern.push_str("(.+?)");
        slots.push(caps[1].to_string());
        last = m.end();
    }
    if slots.is_empty() {
        return Vec::new();
    }
    pattern.push_str(&literal_pattern(&delex[last..]));
    pattern.push('$');
    let Ok(aligner) = Regex::new(&pattern) else {
        return Vec::new();
    };
    let text = collapse_whitespace(text);
    let Some(caps) = aligner.captures(&text) else {
        return Vec::new();
    };
    slots
        .into_iter()
        .zip(caps.iter().skip(1))
        .filter_map(|(slot, m)| m.map(|m| (slot, m.as_str().trim().to_string())))
        .collect()
}

fn literal_pattern(literal: &str) -> String {
    literal
        .split(' ')
        .map(regex::escape)
        .collect::<Vec<_>>()
        .join(r"\s+")
}

fn requestable_values(d: &Dialogue, db: Option<&VenueDatabase>) -> BTreeSet<String> {
    let norm = ValueNormalizer::default();
    let mut values = BTreeSet::new();
    let mut names = BTreeSet::new();
    let keep = |values: &mut BTreeSet<String>, v: &str| {
        let v = normalize_text(v);
        if v.chars().count() >= MIN_VALUE_CHARS {
            values.insert(v);
        }
    };
    for t in d.turns.iter().filter(|t| t.speaker == Speaker::System) {
        let Some(delex) = &t.delex_text else { continue };
        for (slot, value) in aligned_slot_values(&t.text, delex) {
            if requestable_slot(&slot).is_some() {
                keep(&mut values, &value);
            }
            if slot == "name" || slot == "trainid" {
                names.insert(norm.normalize(&value));
            }
        }
    }
    for t in &d.turns {
        for b in &t.belief {
            if b.slot == "name" || b.slot == "trainid" {
                names.insert(norm.normalize(&b.value));
            }
        }
    }
    for goal in d.goal.values() {
        for (slot, v) in &goal.constraints {
            if slot == "name" || slot == "trainid" {
                names.insert(norm.normalize(v));
            }
        }
    }
    if let Some(db) = db {
        for (_, entity) in db.all_entities() {
            let referenced = VenueDatabase::primary_id(entity).is_some_and(|id| names.contains(&norm.normalize(id)));
            if !referenced {
                continue;
            }
            for (k, v) in entity {
                if requestable_slot(k).is_some() {
                    keep(&mut values, v);
                }
            }
        }
    }
    values
}
