//! Converts raw MultiWOZ 2.2 and FusedChat distributions into canonical split files.
//!
//! MultiWOZ 2.2 layout: `<root>/{train,dev,test}/dialogues_*.json` plus
//! `<root>/dialog_acts.json`. System turns are delexicalized from the act
//! span annotations, then against the venue database when one is given.
//! Goals are derived from the final belief state and the union of requested
//! slots, since 2.2 ships no goal annotation.
//!
//! FusedChat: one JSON object keyed by dialogue id. Each entry either has a
//! `"prepended"` array of alternating user/system strings, or a `"log"`
//! array of `{"text", "type"}` items where the leading chitchat items form
//! the prepended exchange. Chitchat after the task (appended) is ignored.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;

use super::{
    BeliefTriplet, CorpusError, Delexicalizer, Dialogue, DialogueAct, DomainGoal, Result, Speaker, Split, Turn,
    TurnMode, VenueDatabase,
};

#[derive(Debug, Deserialize)]
struct RawDialogue {
    dialogue_id: String,
    turns: Vec<RawTurn>,
}

#[derive(Debug, Deserialize)]
struct RawTurn {
    speaker: String,
    turn_id: Value,
    utterance: String,
    #[serde(default)]
    frames: Vec<RawFrame>,
}

#[derive(Debug, Deserialize)]
struct RawFrame {
    service: String,
    #[serde(default)]
    state: Option<RawState>,
}

#[derive(Debug, Deserialize)]
struct RawState {
    #[serde(default)]
    requested_slots: Vec<String>,
    #[serde(default)]
    slot_values: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
struct RawActs {
    #[serde(default)]
    dialog_act: BTreeMap<String, Vec<Vec<String>>>,
    #[serde(default)]
    span_info: Vec<Vec<Value>>,
}

/// Counts reported by an import run.
#[derive(Debug, Clone, Default, PartialEq, Eq, serde::Serialize)]
pub struct ImportStats {
    pub dialogues: BTreeMap<String, usize>,
    pub with_prepended: usize,
    pub without_prepended: usize,
    pub fusedchat_unmatched: usize,
    pub dropped_invalid: Vec<String>,
}

pub fn strip_json_suffix(id: &str) -> &str {
    id.strip_suffix(".json").unwrap_or(id)
}

fn split_slot(key: &str) -> (String, String) {
    match key.split_once('-') {
        Some((d, s)) => (d.to_lowercase(), s.to_lowercase()),
        None => (String::new(), key.to_lowercase()),
    }
}

fn span_placeholder(slot: &str) -> String {
    match slot.to_lowercase().as_str() {
        "reference" => "[ref]".into(),
        s => format!("[{s}]"),
    }
}

fn delex_from_spans(text: &str, spans: &[Vec<Value>]) -> String {
    let mut marks: Vec<(usize, usize, String)> = spans
        .iter()
        .filter_map(|s| {
            let slot = s.get(1)?.as_str()?;
            let start = s.get(3)?.as_u64()? as usize;
            let end = s.get(4)?.as_u64()? as usize;
            (start < end && end <= text.len() && text.is_char_boundary(start) && text.is_char_boundary(end))
                .then(|| (start, end, span_placeholder(slot)))
        })
        .collect();
    marks.sort();
    let mut out = String::new();
    let mut cursor = 0;
    for (s, e, ph) in marks {
        if s < cursor {
            continue;
        }
        out.push_str(&text[cursor..s]);
        out.push_str(&ph);
        cursor = e;
    }
    out.push_str(&text[cursor..]);
    out
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CorpusError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn convert(raw: RawDialogue, acts: Option<&BTreeMap<String, RawActs>>, delex: Option<&Delexicalizer>) -> Result<Dialogue> {
    let id = strip_json_suffix(&raw.dialogue_id).to_string();
    let mut turns = Vec::with_capacity(raw.turns.len());
    let mut goal: BTreeMap<String, DomainGoal> = BTreeMap::new();
    let mut last_belief = BTreeSet::new();
    for rt in &raw.turns {
        let speaker = match rt.speaker.to_ascii_uppercase().as_str() {
            "USER" => Speaker::User,
            "SYSTEM" => Speaker::System,
            other => {
                return Err(CorpusError::Malformed {
                    dialogue_id: id.clone(),
                    field: "turns.speaker".into(),
                    message: format!("unknown speaker `{other}`"),
                })
            }
        };
        let turn_key = match &rt.turn_id {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        let turn_acts = acts.and_then(|a| a.get(&turn_key));
        let mut turn = match speaker {
            Speaker::User => Turn::user(&rt.utterance),
            Speaker::System => {
                let spans = turn_acts.map(|a| a.span_info.as_slice()).unwrap_or(&[]);
                let mut d = delex_from_spans(&rt.utterance, spans);
                if let Some(dx) = delex {
                    d = dx.delexicalize(&d, None);
                }
                Turn::system(&rt.utterance, &d)
            }
        };
        if let Some(ta) = turn_acts {
            for (name, pairs) in &ta.dialog_act {
                let (domain, act) = name.split_once('-').unwrap_or(("general", name));
                if pairs.is_empty() {
                    turn.acts.insert(DialogueAct::new(domain, act, ""));
                }
                for pair in pairs {
                    let slot = pair.first().map(String::as_str).unwrap_or("");
                    let slot = if slot.eq_ignore_ascii_case("none") { "" } else { slot };
                    turn.acts.insert(DialogueAct::new(domain, act, slot));
                }
            }
        }
        if speaker == Speaker::User {
            let mut belief = BTreeSet::new();
            for frame in &rt.frames {
                let Some(state) = &frame.state else { continue };
                for (key, values) in &state.slot_values {
                    let (domain, slot) = split_slot(key);
                    let domain = if domain.is_empty() { frame.service.to_lowercase() } else { domain };
                    if let Some(v) = values.first().filter(|v| !v.trim().is_empty()) {
                        belief.insert(BeliefTriplet::new(&domain, &slot, v));
                    }
                }
                for key in &state.requested_slots {
                    let (domain, slot) = split_slot(key);
                    let domain = if domain.is_empty() { frame.service.to_lowercase() } else { domain };
                    goal.entry(domain).or_default().requested.insert(slot);
                }
            }
            turn.belief = belief.clone();
            last_belief = belief;
        }
        turns.push(turn);
    }
    for t in last_belief {
        goal.entry(t.domain.clone())
            .or_default()
            .constraints
            .insert(t.slot, t.value);
    }
    let mut d = Dialogue::new(&id, turns)?;
    d.goal = goal;
    Ok(d)
}

fn split_dir(root: &Path, split: Split) -> Option<PathBuf> {
    let candidates: &[&str] = match split {
        Split::Train => &["train"],
        Split::Dev => &["dev", "val", "validation"],
        Split::Test => &["test"],
    };
    candidates
        .iter()
        .map(|c| root.join(c))
        .find(|p| p.is_dir())
}

/// Reads every split found under a MultiWOZ 2.2 root.
pub fn import_multiwoz(root: &Path, db: Option<&VenueDatabase>, stats: &mut ImportStats) -> Result<BTreeMap<Split, Vec<Dialogue>>> {
    if !root.is_dir() {
        return Err(CorpusError::NotFound(root.to_path_buf()));
    }
    let acts_path = root.join("dialog_acts.json");
    let acts: BTreeMap<String, BTreeMap<String, RawActs>> = if acts_path.is_file() {
        serde_json::from_value(read_json(&acts_path)?).map_err(|source| CorpusError::Json {
            path: acts_path.clone(),
            source,
        })?
    } else {
        BTreeMap::new()
    };
    let delex = db.map(Delexicalizer::new);

    let mut out = BTreeMap::new();
    for split in Split::ALL {
        let Some(dir) = split_dir(root, split) else { continue };
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|source| CorpusError::Io {
                path: dir.clone(),
                source,
            })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        let mut dialogues = Vec::new();
        for file in files {
            let raws: Vec<RawDialogue> = serde_json::from_value(read_json(&file)?).map_err(|source| CorpusError::Json {
                path: file.clone(),
                source,
            })?;
            for raw in raws {
                let key = raw.dialogue_id.clone();
                let turn_acts = acts.get(&key).or_else(|| acts.get(strip_json_suffix(&key)));
                match convert(raw, turn_acts, delex.as_ref()) {
                    Ok(d) => dialogues.push(d),
                    Err(e) => {
                        tracing::warn!("skipping {key}: {e}");
                        stats.dropped_invalid.push(strip_json_suffix(&key).to_string());
                    }
                }
            }
        }
        dialogues.sort_by(|a, b| a.id.cmp(&b.id));
        stats.dialogues.insert(split.name().to_string(), dialogues.len());
        out.insert(split, dialogues);
    }
    if out.is_empty() {
        return Err(CorpusError::Import(format!("no split directories under {}", root.display())));
    }
    Ok(out)
}

fn is_chitchat_label(v: &Value) -> bool {
    v.as_str()
        .map(|s| matches!(s.to_ascii_lowercase().as_str(), "chitchat" | "chit-chat" | "chat" | "cc"))
        .unwrap_or(false)
}

fn prepended_texts(entry: &Value) -> Vec<String> {
    if let Some(Value::Array(items)) = entry.get("prepended") {
        return items.iter().filter_map(|v| v.as_str().map(str::to_string)).collect();
    }
    let Some(Value::Array(log)) = entry.get("log") else {
        return Vec::new();
    };
    log.iter()
        .take_while(|item| ["type", "turn_type", "mode"].iter().any(|k| item.get(*k).is_some_and(is_chitchat_label)))
        .filter_map(|item| item.get("text").and_then(Value::as_str).map(str::to_string))
        .collect()
}

/// Attaches prepended chitchat from a FusedChat file to already imported dialogues.
pub fn attach_fusedchat(path: &Path, splits: &mut BTreeMap<Split, Vec<Dialogue>>, stats: &mut ImportStats) -> Result<()> {
    let Value::Object(entries) = read_json(path)? else {
        return Err(CorpusError::Import(format!("{}: expected an object keyed by dialogue id", path.display())));
    };
    let by_id: BTreeMap<&str, &Value> = entries.iter().map(|(k, v)| (strip_json_suffix(k), v)).collect();
    let mut matched = 0;
    for dialogues in splits.values_mut() {
        for d in dialogues.iter_mut() {
            let Some(entry) = by_id.get(d.id.as_str()) else {
                stats.without_prepended += 1;
                continue;
            };
            matched += 1;
            let mut texts = prepended_texts(entry);
            // Keep whole exchanges so the task still opens with a user turn.
            texts.truncate(texts.len() / 2 * 2);
            if texts.is_empty() {
                stats.without_prepended += 1;
                continue;
            }
            let chitchat = texts
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let mut turn = if i % 2 == 0 { Turn::user(t) } else { Turn::system(t, t) };
                    turn.delex_text = None;
                    turn.mode = TurnMode::Chitchat;
                    turn
                })
                .collect();
            d.prepended_chitchat = chitchat;
            d.finalize()?;
            stats.with_prepended += 1;
        }
    }
    stats.fusedchat_unmatched = by_id.len().saturating_sub(matched);
    Ok(())
}
