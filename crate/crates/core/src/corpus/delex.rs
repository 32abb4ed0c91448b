use std::collections::BTreeMap;

use aho_corasick::AhoCorasick;

use super::{DomainGoal, Turn, VenueDatabase};
use crate::text::normalize_text;

/// Entity slots replaced by placeholders.
pub const DELEX_SLOTS: [&str; 7] = ["name", "address", "phone", "postcode", "trainid", "reference", "ref"];

fn placeholder(slot: &str) -> String {
    match slot {
        "reference" => "[ref]".to_string(),
        other => format!("[{other}]"),
    }
}

/// Text lowercased with whitespace runs collapsed, plus a byte map back to the source.
struct Folded {
    text: String,
    spans: Vec<(usize, usize)>,
}

fn fold(source: &str) -> Folded {
    let mut text = String::with_capacity(source.len());
    let mut spans = Vec::with_capacity(source.len());
    let mut chars = source.char_indices().peekable();
    while let Some((start, c)) = chars.next() {
        if c.is_whitespace() {
            let mut end = start + c.len_utf8();
            while let Some(&(i, n)) = chars.peek() {
                if !n.is_whitespace() {
                    break;
                }
                end = i + n.len_utf8();
                chars.next();
            }
            text.push(' ');
            spans.push((start, end));
        } else {
            let end = start + c.len_utf8();
            for lc in c.to_lowercase() {
                for _ in 0..lc.len_utf8() {
                    spans.push((start, end));
                }
                text.push(lc);
            }
        }
    }
    Folded { text, spans }
}

fn is_word_char(c: Option<char>) -> bool {
    c.is_some_and(char::is_alphanumeric)
}

/// Replaces database values in system responses with `[slot]` placeholders.
///
/// Matching is done on case-folded, whitespace-collapsed text with word
/// boundaries. Overlapping candidates are resolved longest first; existing
/// placeholders are never touched, which makes the operation idempotent.
pub struct Delexicalizer {
    matcher: Option<AhoCorasick>,
    slots: Vec<String>,
}

fn collect_values(db: &VenueDatabase) -> BTreeMap<String, String> {
    let mut values = BTreeMap::new();
    for (_, entity) in db.all_entities() {
        for (slot, raw) in entity {
            if DELEX_SLOTS.contains(&slot.as_str()) {
                let v = normalize_text(raw);
                if v.chars().count() >= 2 {
                    values.entry(v).or_insert_with(|| slot.clone());
                }
            }
        }
    }
    values
}

impl Delexicalizer {
    pub fn new(db: &VenueDatabase) -> Self {
        let values = collect_values(db);
        let (values, slots): (Vec<String>, Vec<String>) = values.into_iter().unzip();
        let matcher = (!values.is_empty()).then(|| AhoCorasick::new(&values).expect("automaton builds"));
        Self { matcher, slots }
    }

    pub fn delexicalize(&self, text: &str, goal: Option<&BTreeMap<String, DomainGoal>>) -> String {
        let folded = fold(text);
        let mut candidates: Vec<(usize, usize, String)> = Vec::new();
        if let Some(matcher) = &self.matcher {
            for m in matcher.find_overlapping_iter(&folded.text) {
                candidates.push((m.start(), m.end(), self.slots[m.pattern().as_usize()].clone()));
            }
        }
        if let Some(goal) = goal {
            for dg in goal.values() {
                for (slot, raw) in &dg.constraints {
                    let v = normalize_text(raw);
                    if !DELEX_SLOTS.contains(&slot.as_str()) || v.chars().count() < 2 {
                        continue;
                    }
                    for (start, _) in folded.text.match_indices(&v) {
                        candidates.push((start, start + v.len(), slot.clone()));
                    }
                }
            }
        }

        let mut claimed: Vec<(usize, usize)> = existing_placeholders(&folded.text);
        candidates.sort_by(|a, b| (b.1 - b.0).cmp(&(a.1 - a.0)).then(a.0.cmp(&b.0)));
        let mut chosen: Vec<(usize, usize, String)> = Vec::new();
        for (s, e, slot) in candidates {
            let before = folded.text[..s].chars().next_back();
            let after = folded.text[e..].chars().next();
            if is_word_char(before) || is_word_char(after) {
                continue;
            }
            if claimed.iter().any(|&(cs, ce)| s < ce && cs < e) {
                continue;
            }
            claimed.push((s, e));
            chosen.push((s, e, slot));
        }
        chosen.sort_by_key(|c| c.0);

        let mut out = String::with_capacity(text.len());
        let mut cursor = 0;
        for (s, e, slot) in chosen {
            let (src_start, src_end) = (folded.spans[s].0, folded.spans[e - 1].1);
            out.push_str(&text[cursor..src_start]);
            out.push_str(&placeholder(&slot));
            cursor = src_end;
        }
        out.push_str(&text[cursor..]);
        out
    }
}

fn existing_placeholders(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'[' {
            if let Some(len) = text[i + 1..].find(']') {
                let inner = &text[i + 1..i + 1 + len];
                if !inner.is_empty() && inner.chars().all(|c| c.is_alphanumeric() || c == '_') {
                    spans.push((i, i + len + 2));
                    i += len + 2;
                    continue;
                }
            }
        }
        i += 1;
    }
    spans
}

/// Delexicalizes a system turn's text against the database and the dialogue goal.
pub fn delexicalize(turn: &Turn, db: &VenueDatabase, goal: &BTreeMap<String, DomainGoal>) -> String {
    Delexicalizer::new(db).delexicalize(&turn.text, Some(goal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Entity;

    fn db() -> VenueDatabase {
        let mut db = VenueDatabase::new();
        let e = |pairs: &[(&str, &str)]| -> Entity { pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect() };
        db.insert_domain(
            "restaurant",
            vec![
                e(&[("name", "the golden curry"), ("phone", "01223329432"), ("address", "mill road city centre"), ("food", "indian")]),
                e(&[("name", "golden house"), ("phone", "01842753771")]),
            ],
        )
        .unwrap();
        db.insert_domain("train", vec![e(&[("trainID", "TR7447")])]).unwrap();
        db
    }

    fn goal_with_ref(reference: &str) -> BTreeMap<String, DomainGoal> {
        let mut g = DomainGoal::default();
        g.constraints.insert("reference".into(), reference.into());
        BTreeMap::from([("restaurant".to_string(), g)])
    }

    #[test]
    fn replaces_restaurant_name() {
        let turn = Turn::system("The name of the restaurant is The Golden Curry", "");
        assert_eq!(
            delexicalize(&turn, &db(), &BTreeMap::new()),
            "The name of the restaurant is [name]"
        );
    }

    #[test]
    fn unrelated_text_is_unchanged() {
        let turn = Turn::system("Is there anything else I can help with?", "");
        assert_eq!(delexicalize(&turn, &db(), &BTreeMap::new()), turn.text);
    }

    #[test]
    fn phone_and_reference_replaced_other_tokens_kept() {
        let turn = Turn::system("Booked!  Call 01223329432, reference ABCD1234.", "");
        assert_eq!(
            delexicalize(&turn, &db(), &goal_with_ref("abcd1234")),
            "Booked!  Call [phone], reference [ref]."
        );
    }

    #[test]
    fn longest_match_wins_and_boundaries_respected() {
        let d = Delexicalizer::new(&db());
        assert_eq!(d.delexicalize("Try the Golden  Curry on Mill Road City Centre.", None), "Try [name] on [address].");
        assert_eq!(d.delexicalize("Train TR7447 or TR74470", None), "Train [trainid] or TR74470");
    }

    #[test]
    fn idempotent() {
        let d = Delexicalizer::new(&db());
        for text in [
            "The Golden Curry phone is 01223329432",
            "golden house and the golden curry",
            "[name] is at mill road city centre",
        ] {
            let once = d.delexicalize(text, None);
            assert_eq!(d.delexicalize(&once, None), once);
        }
    }
}
