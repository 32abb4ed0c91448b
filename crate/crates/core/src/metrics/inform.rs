use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::corpus::{Dialogue, DialogueAct, Entity, Speaker, VenueDatabase};
use crate::simpletod::{GenerationOutput, Predictions};
use crate::text::ValueNormalizer;

/// Goal domains whose entity must be offered for a dialogue to count as informed.
pub const ENTITY_DOMAINS: [&str; 4] = ["restaurant", "hotel", "attraction", "train"];
pub const KNOWN_DOMAINS: [&str; 8] = [
    "restaurant", "hotel", "attraction", "train", "taxi", "police", "hospital", "bus",
];

/// Placeholder that must appear for a requested slot to count as delivered.
/// Requested slots outside this list are not scored.
pub fn requested_placeholder(slot: &str) -> Option<&'static str> {
    match slot {
        "phone" => Some("[phone]"),
        "address" => Some("[address]"),
        "postcode" => Some("[postcode]"),
        "reference" | "ref" => Some("[ref]"),
        "trainid" | "id" => Some("[trainid]"),
        _ => None,
    }
}

fn offer_placeholder(domain: &str) -> &'static str {
    if domain == "train" {
        "[trainid]"
    } else {
        "[name]"
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueOutcome {
    pub dialogue_id: String,
    pub informed: bool,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub uninformed_domains: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing_slots: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformSuccess {
    /// Percent of dialogues informed.
    pub inform: f64,
    /// Percent of dialogues successful.
    pub success: f64,
    pub dialogues: Vec<DialogueOutcome>,
}

fn concrete_domains(acts: &BTreeSet<DialogueAct>) -> BTreeSet<&str> {
    acts.iter().filter(|a| a.is_concrete()).map(|a| a.domain.as_str()).collect()
}

fn same_entity(a: &Entity, b: &Entity) -> bool {
    std::ptr::eq(a, b)
}

/// Scores one dialogue against its goal using per-turn predictions.
pub fn evaluate_dialogue(
    d: &Dialogue,
    preds: &Predictions,
    db: &VenueDatabase,
    norm: &ValueNormalizer,
) -> Result<DialogueOutcome, MetricsError> {
    for domain in d.goal.keys() {
        if !KNOWN_DOMAINS.contains(&domain.as_str()) {
            return Err(MetricsError::UnknownDomain {
                dialogue_id: d.id.clone(),
                domain: domain.clone(),
            });
        }
    }
    let entity_goals: Vec<&str> = d
        .goal
        .keys()
        .map(String::as_str)
        .filter(|dom| ENTITY_DOMAINS.contains(dom))
        .collect();
    for dom in &entity_goals {
        if !db.has_domain(dom) {
            return Err(MetricsError::MissingDatabase(dom.to_string()));
        }
    }

    let empty = GenerationOutput::default();
    let mut informed: BTreeSet<&str> = BTreeSet::new();
    let mut responses = Vec::new();
    for (i, turn) in d.turns.iter().enumerate() {
        if i == 0 || turn.speaker != Speaker::System {
            continue;
        }
        let pred = preds.get(&d.id, i).unwrap_or(&empty);
        responses.push(pred.response.as_str());
        let mut domains = concrete_domains(&pred.acts);
        if domains.is_empty() {
            domains = concrete_domains(&turn.acts);
        }
        for dom in entity_goals.iter().filter(|dom| domains.contains(**dom)) {
            if informed.contains(dom) || !pred.response.contains(offer_placeholder(dom)) {
                continue;
            }
            let constraints: Vec<(String, String)> = pred
                .belief
                .iter()
                .filter(|b| b.domain == *dom)
                .map(|b| (b.slot.clone(), b.value.clone()))
                .collect();
            let goal: Vec<(String, String)> = d.goal[*dom].constraints.clone().into_iter().collect();
            let offered = db.query(dom, &constraints, norm);
            let wanted = db.query(dom, &goal, norm);
            if offered.iter().any(|o| wanted.iter().any(|w| same_entity(o, w))) {
                informed.insert(dom);
            }
        }
    }

    let uninformed: Vec<String> = entity_goals
        .iter()
        .filter(|dom| !informed.contains(*dom))
        .map(|dom| dom.to_string())
        .collect();
    let mut missing = Vec::new();
    for (dom, goal) in &d.goal {
        for slot in &goal.requested {
            if let Some(ph) = requested_placeholder(slot) {
                if !responses.iter().any(|r| r.contains(ph)) {
                    missing.push(format!("{dom}-{slot}"));
                }
            }
        }
    }
    let is_informed = uninformed.is_empty();
    Ok(DialogueOutcome {
        dialogue_id: d.id.clone(),
        informed: is_informed,
        success: is_informed && missing.is_empty(),
        uninformed_domains: uninformed,
        missing_slots: missing,
    })
}

/// Inform and success rates (percent of dialogues).
pub fn inform_success(
    dialogues: &[Dialogue],
    preds: &Predictions,
    db: &VenueDatabase,
    norm: &ValueNormalizer,
) -> Result<InformSuccess, MetricsError> {
    if dialogues.is_empty() {
        return Err(MetricsError::Empty("dialogues"));
    }
    let mut outcomes = dialogues
        .iter()
        .map(|d| evaluate_dialogue(d, preds, db, norm))
        .collect::<Result<Vec<_>, _>>()?;
    outcomes.sort_by(|a, b| a.dialogue_id.cmp(&b.dialogue_id));
    let n = outcomes.len() as f64;
    let pct = |k: usize| 100.0 * k as f64 / n;
    Ok(InformSuccess {
        inform: pct(outcomes.iter().filter(|o| o.informed).count()),
        success: pct(outcomes.iter().filter(|o| o.success).count()),
        dialogues: outcomes,
    })
}
