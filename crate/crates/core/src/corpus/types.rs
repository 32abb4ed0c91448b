use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::text::ValueNormalizer;

/// Act domains that appear inside every task segment and never start a new one.
pub const NEUTRAL_DOMAINS: [&str; 2] = ["general", "booking"];

pub fn is_neutral_domain(domain: &str) -> bool {
    NEUTRAL_DOMAINS.contains(&domain)
}

fn identifier(s: &str) -> String {
    s.trim().to_lowercase()
}

/// `[domain, act, slot]`; an empty slot means the act carries no slot.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "[String; 3]")]
pub struct DialogueAct {
    pub domain: String,
    pub act: String,
    pub slot: String,
}

impl DialogueAct {
    pub fn new(domain: &str, act: &str, slot: &str) -> Self {
        Self {
            domain: identifier(domain),
            act: identifier(act),
            slot: identifier(slot),
        }
    }

    /// True for concrete domains (anything except `general` and `booking`).
    pub fn is_concrete(&self) -> bool {
        !is_neutral_domain(&self.domain)
    }
}

impl TryFrom<Vec<String>> for DialogueAct {
    type Error = String;

    fn try_from(v: Vec<String>) -> Result<Self, Self::Error> {
        let act = match v.as_slice() {
            [d, a, s] => DialogueAct::new(d, a, s),
            [d, a] => DialogueAct::new(d, a, ""),
            _ => return Err(format!("expected [domain, act, slot], got {} elements", v.len())),
        };
        if act.domain.is_empty() {
            return Err("act domain must be non-empty".into());
        }
        Ok(act)
    }
}

impl From<DialogueAct> for [String; 3] {
    fn from(a: DialogueAct) -> Self {
        [a.domain, a.act, a.slot]
    }
}

impl fmt::Display for DialogueAct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}]", self.domain, self.act, self.slot)
    }
}

/// `[domain, slot, value]` user constraint. Values are stored canonical.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "[String; 3]")]
pub struct BeliefTriplet {
    pub domain: String,
    pub slot: String,
    pub value: String,
}

impl BeliefTriplet {
    /// Builds a triplet with the value canonicalized by the default normalizer.
    pub fn new(domain: &str, slot: &str, value: &str) -> Self {
        Self::with_normalizer(domain, slot, value, &ValueNormalizer::default())
    }

    pub fn with_normalizer(domain: &str, slot: &str, value: &str, norm: &ValueNormalizer) -> Self {
        Self {
            domain: identifier(domain),
            slot: identifier(slot),
            value: norm.normalize(value),
        }
    }

    /// Keeps the value exactly as given (used for model predictions before scoring).
    pub fn raw(domain: &str, slot: &str, value: &str) -> Self {
        Self {
            domain: domain.to_string(),
            slot: slot.to_string(),
            value: value.to_string(),
        }
    }
}

impl TryFrom<Vec<String>> for BeliefTriplet {
    type Error = String;

    fn try_from(v: Vec<String>) -> Result<Self, Self::Error> {
        let [d, s, val] = v.as_slice() else {
            return Err(format!("expected [domain, slot, value], got {} elements", v.len()));
        };
        let t = BeliefTriplet::new(d, s, val);
        if t.domain.is_empty() || t.slot.is_empty() || t.value.is_empty() {
            return Err("belief triplet fields must be non-empty".into());
        }
        Ok(t)
    }
}

impl From<BeliefTriplet> for [String; 3] {
    fn from(t: BeliefTriplet) -> Self {
        [t.domain, t.slot, t.value]
    }
}

impl fmt::Display for BeliefTriplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}]", self.domain, self.slot, self.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    #[serde(alias = "USER", alias = "User")]
    User,
    #[serde(alias = "SYSTEM", alias = "System")]
    System,
}

impl Speaker {
    pub fn label(self) -> &'static str {
        match self {
            Speaker::User => "User",
            Speaker::System => "System",
        }
    }

    pub fn other(self) -> Speaker {
        match self {
            Speaker::User => Speaker::System,
            Speaker::System => Speaker::User,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnMode {
    #[default]
    Task,
    Chitchat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    /// Position within its turn list; assigned on load.
    #[serde(skip)]
    pub index: usize,
    pub speaker: Speaker,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delex_text: Option<String>,
    #[serde(default)]
    pub acts: BTreeSet<DialogueAct>,
    /// Cumulative user constraints; empty on system turns.
    #[serde(default)]
    pub belief: BTreeSet<BeliefTriplet>,
    #[serde(default)]
    pub mode: TurnMode,
}

impl Turn {
    pub fn user(text: &str) -> Self {
        Self {
            index: 0,
            speaker: Speaker::User,
            text: text.to_string(),
            delex_text: None,
            acts: BTreeSet::new(),
            belief: BTreeSet::new(),
            mode: TurnMode::Task,
        }
    }

    pub fn system(text: &str, delex: &str) -> Self {
        Self {
            speaker: Speaker::System,
            delex_text: Some(delex.to_string()),
            ..Self::user(text)
        }
    }

    pub fn with_acts<'a>(mut self, acts: impl IntoIterator<Item = (&'a str, &'a str, &'a str)>) -> Self {
        self.acts
            .extend(acts.into_iter().map(|(d, a, s)| DialogueAct::new(d, a, s)));
        self
    }

    pub fn with_belief<'a>(mut self, belief: impl IntoIterator<Item = (&'a str, &'a str, &'a str)>) -> Self {
        self.belief
            .extend(belief.into_iter().map(|(d, s, v)| BeliefTriplet::new(d, s, v)));
        self
    }

    pub fn chitchat(mut self) -> Self {
        self.mode = TurnMode::Chitchat;
        self
    }
}

/// Goal for one domain: informable constraints and the attributes the user asks for.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainGoal {
    #[serde(default)]
    pub constraints: BTreeMap<String, String>,
    #[serde(default)]
    pub requested: BTreeSet<String>,
}

/// Per-dialogue record written by the augmentation pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationMeta {
    /// Index of the augmented user turn; the reaction sits on the turn after it.
    pub exchange_index: usize,
    pub situation: String,
    pub backstory: String,
    pub reaction: String,
    pub seeds: AugmentationSeeds,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub backend_id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub config_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentationSeeds {
    pub run_seed: u64,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    #[serde(default)]
    pub goal: BTreeMap<String, DomainGoal>,
    pub turns: Vec<Turn>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub prepended_chitchat: Vec<Turn>,
    /// Concrete act domains in order of first appearance; derived on load.
    #[serde(skip)]
    pub domains: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augmentation: Option<AugmentationMeta>,
}

impl Dialogue {
    /// Assembles and validates a dialogue with derived fields filled in.
    pub fn new(id: &str, turns: Vec<Turn>) -> Result<Self, super::CorpusError> {
        let mut d = Dialogue {
            id: id.to_string(),
            goal: BTreeMap::new(),
            turns,
            prepended_chitchat: Vec::new(),
            domains: Vec::new(),
            augmentation: None,
        };
        d.finalize()?;
        Ok(d)
    }

    pub fn with_goal(mut self, domain: &str, goal: DomainGoal) -> Self {
        self.goal.insert(domain.to_string(), goal);
        self
    }

    pub fn with_prepended(mut self, chitchat: Vec<Turn>) -> Result<Self, super::CorpusError> {
        self.prepended_chitchat = chitchat;
        self.finalize()?;
        Ok(self)
    }

    /// Re-derives indices and domains, then checks every structural invariant.
    pub fn finalize(&mut self) -> Result<(), super::CorpusError> {
        for (i, t) in self.turns.iter_mut().enumerate() {
            t.index = i;
        }
        for (i, t) in self.prepended_chitchat.iter_mut().enumerate() {
            t.index = i;
        }
        self.domains = first_appearance_domains(&self.turns);
        self.validate()
    }

    fn malformed(&self, field: String, message: &str) -> super::CorpusError {
        super::CorpusError::Malformed {
            dialogue_id: self.id.clone(),
            field,
            message: message.to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), super::CorpusError> {
        if self.id.trim().is_empty() {
            return Err(self.malformed("id".into(), "dialogue id must be non-empty"));
        }
        if self.turns.is_empty() {
            return Err(self.malformed("turns".into(), "dialogue has no turns"));
        }
        check_turns(self, &self.turns, "turns")?;
        if self.turns[0].speaker != Speaker::User {
            return Err(self.malformed("turns[0].speaker".into(), "first task turn must be a user turn"));
        }
        check_turns(self, &self.prepended_chitchat, "prepended_chitchat")?;
        for (i, t) in self.prepended_chitchat.iter().enumerate() {
            if t.mode != TurnMode::Chitchat {
                return Err(self.malformed(
                    format!("prepended_chitchat[{i}].mode"),
                    "prepended turns must be chitchat",
                ));
            }
        }
        if let Some(aug) = &self.augmentation {
            let ok = aug.exchange_index + 1 < self.turns.len()
                && self.turns[aug.exchange_index].speaker == Speaker::User;
            if !ok {
                return Err(self.malformed(
                    "augmentation.exchange_index".into(),
                    "must point at a user turn followed by a system turn",
                ));
            }
        }
        Ok(())
    }

    /// Iterates over (user turn, following system turn) pairs.
    pub fn exchanges(&self) -> impl Iterator<Item = (&Turn, &Turn)> {
        self.turns
            .windows(2)
            .filter(|w| w[0].speaker == Speaker::User && w[1].speaker == Speaker::System)
            .map(|w| (&w[0], &w[1]))
    }
}

fn check_turns(d: &Dialogue, turns: &[Turn], list: &str) -> Result<(), super::CorpusError> {
    for (i, t) in turns.iter().enumerate() {
        if i > 0 && t.speaker == turns[i - 1].speaker {
            return Err(d.malformed(format!("{list}[{i}].speaker"), "speakers must alternate"));
        }
        match (t.speaker, &t.delex_text) {
            (Speaker::User, Some(_)) => {
                return Err(d.malformed(format!("{list}[{i}].delex_text"), "user turns carry no delexicalized text"))
            }
            (Speaker::System, None) if t.mode == TurnMode::Task => {
                return Err(d.malformed(format!("{list}[{i}].delex_text"), "system turns need delexicalized text"))
            }
            _ => {}
        }
        if t.speaker == Speaker::System && !t.belief.is_empty() {
            return Err(d.malformed(format!("{list}[{i}].belief"), "belief state is stored on user turns only"));
        }
    }
    Ok(())
}

fn first_appearance_domains(turns: &[Turn]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for t in turns {
        for a in t.acts.iter().filter(|a| a.is_concrete()) {
            if !out.contains(&a.domain) {
                out.push(a.domain.clone());
            }
        }
    }
    out
}
