//! Text normalization and the pinned tokenizer shared by filters and metrics.
//!
//! Tokenizer: lowercase, split on whitespace, every punctuation or symbol
//! character is its own token. Bracketed placeholders such as `[name]` are
//! kept whole so delexicalized responses count one token per slot.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;

/// Collapses every run of whitespace into a single space and trims the ends.
pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Case-fold, collapse whitespace and strip surrounding punctuation.
pub fn normalize_text(s: &str) -> String {
    let collapsed = collapse_whitespace(&s.to_lowercase());
    collapsed
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_string()
}

fn placeholder_at(chars: &[char], start: usize) -> Option<usize> {
    if chars[start] != '[' {
        return None;
    }
    let mut end = start + 1;
    while end < chars.len() && (chars[end].is_alphanumeric() || chars[end] == '_') {
        end += 1;
    }
    (end > start + 1 && end < chars.len() && chars[end] == ']').then_some(end + 1)
}

/// Splits text into lowercase tokens.
pub fn tokenize(s: &str) -> Vec<String> {
    let lower: Vec<char> = s.to_lowercase().chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < lower.len() {
        let c = lower[i];
        if c.is_whitespace() {
            i += 1;
        } else if let Some(end) = placeholder_at(&lower, i) {
            tokens.push(lower[i..end].iter().collect());
            i = end;
        } else if c.is_alphanumeric() {
            let start = i;
            while i < lower.len() && lower[i].is_alphanumeric() {
                i += 1;
            }
            tokens.push(lower[start..i].iter().collect());
        } else {
            tokens.push(c.to_string());
            i += 1;
        }
    }
    tokens
}

fn time_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^(\d{1,2})\s*[:.]\s*(\d{2})(?:\s*([ap])\.?\s*m\.?)?$").expect("valid regex")
    })
}

/// Rewrites `8:30`, `8.30`, `8:30 pm` and similar into zero-padded 24h `hh:mm`.
/// Returns `None` when the value is not a clock time.
pub fn canonical_time(value: &str) -> Option<String> {
    let caps = time_pattern().captures(value.trim())?;
    let mut hour: u32 = caps[1].parse().ok()?;
    let minute: u32 = caps[2].parse().ok()?;
    match caps.get(3).map(|m| m.as_str()) {
        Some("p") if hour < 12 => hour += 12,
        Some("a") if hour == 12 => hour = 0,
        _ => {}
    }
    (hour < 24 && minute < 60).then(|| format!("{hour:02}:{minute:02}"))
}

const ARTICLES: [&str; 3] = ["the ", "a ", "an "];

/// Slot-value canonicalizer used for belief states and database lookups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueNormalizer {
    synonyms: BTreeMap<String, String>,
}

impl Default for ValueNormalizer {
    fn default() -> Self {
        let synonyms = [
            ("center", "centre"),
            ("don't care", "dontcare"),
            ("dont care", "dontcare"),
            ("do n't care", "dontcare"),
            ("do not care", "dontcare"),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        Self { synonyms }
    }
}

impl ValueNormalizer {
    /// A normalizer without any synonym entries.
    pub fn without_synonyms() -> Self {
        Self {
            synonyms: BTreeMap::new(),
        }
    }

    pub fn with_synonym(mut self, from: &str, to: &str) -> Self {
        self.synonyms
            .insert(normalize_text(from), normalize_text(to));
        self
    }

    pub fn synonyms(&self) -> &BTreeMap<String, String> {
        &self.synonyms
    }

    /// Case-fold, collapse whitespace, strip surrounding punctuation, canonicalize
    /// clock times, drop a leading article and apply the synonym table.
    /// Idempotent for the default table.
    pub fn normalize(&self, value: &str) -> String {
        if let Some(t) = canonical_time(value) {
            return t;
        }
        let mut v = normalize_text(value);
        while let Some(rest) = ARTICLES.iter().find_map(|a| v.strip_prefix(a)) {
            v = rest.to_string();
        }
        if let Some(t) = canonical_time(&v) {
            return t;
        }
        match self.synonyms.get(&v) {
            Some(canonical) => canonical.clone(),
            None => v,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_splits_punctuation_and_keeps_placeholders() {
        assert_eq!(
            tokenize("Hello, World! It's [name]."),
            vec!["hello", ",", "world", "!", "it", "'", "s", "[name]", "."]
        );
        assert_eq!(tokenize("  "), Vec::<String>::new());
        assert_eq!(tokenize("[ broken ]"), vec!["[", "broken", "]"]);
    }

    #[test]
    fn times_are_zero_padded_24h() {
        assert_eq!(canonical_time("8:30").as_deref(), Some("08:30"));
        assert_eq!(canonical_time("08:30").as_deref(), Some("08:30"));
        assert_eq!(canonical_time("8.30 pm").as_deref(), Some("20:30"));
        assert_eq!(canonical_time("12:05 am").as_deref(), Some("00:05"));
        assert_eq!(canonical_time("25:00"), None);
        assert_eq!(canonical_time("cheap"), None);
    }

    #[test]
    fn value_normalization() {
        let n = ValueNormalizer::default();
        assert_eq!(n.normalize("  The Golden   Curry. "), "golden curry");
        assert_eq!(n.normalize("Center"), "centre");
        assert_eq!(n.normalize("8:30"), n.normalize("08:30"));
        assert_eq!(n.normalize("the"), "the");
        for v in ["The Golden Curry", "8:30 pm", "don't care", "a b"] {
            let once = n.normalize(v);
            assert_eq!(n.normalize(&once), once);
        }
    }
}
