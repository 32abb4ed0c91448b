use thiserror::Error;

use super::sanitize_wrapped;
use crate::text::collapse_whitespace;

pub const BACKSTORY_MARKER: &str = "<Backstory:";
pub const REACTION_MARKER: &str = "<Reaction:";
pub const TERMINATOR: &str = "[END]";
const ECHO: &str = "**";

/// Strings that must never appear inside a parsed backstory or reaction.
pub const MARKERS: [&str; 4] = [BACKSTORY_MARKER, REACTION_MARKER, ECHO, TERMINATOR];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedBackstory {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedReaction {
    pub text: String,
}

/// A completion that does not follow the prompt's separator structure.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StructureError {
    #[error("missing `{0}` marker")]
    MissingMarker(&'static str),
    #[error("`{0}` marker is not closed with `>`")]
    UnclosedMarker(&'static str),
    #[error("missing `[END]` terminator")]
    MissingTerminator,
    #[error("missing `**`-wrapped echo of the original text")]
    MissingEcho,
    #[error("echoed text does not match the original")]
    EchoMismatch,
    #[error("generated text is empty")]
    EmptyBody,
    #[error("generated text contains separator `{0}`")]
    MarkerInBody(&'static str),
    #[error("reaction must come before the echoed response")]
    OrderViolation,
    #[error("unexpected text before `{0}`")]
    StrayText(&'static str),
}

fn strip_speaker<'a>(s: &'a str, label: &str) -> &'a str {
    let s = s.trim_start();
    s.strip_prefix(label).map(str::trim_start).unwrap_or(s)
}

fn strip_joiner(s: &str) -> &str {
    let s = s.trim_end();
    s.strip_suffix('+').map(str::trim_end).unwrap_or(s)
}

fn strip_joiner_front(s: &str) -> &str {
    let s = s.trim_start();
    s.strip_prefix('+').map(str::trim_start).unwrap_or(s)
}

fn unwrap_echo(s: &str) -> Option<&str> {
    let s = s.trim();
    if s.len() >= 2 * ECHO.len() {
        s.strip_prefix(ECHO)?.strip_suffix(ECHO)
    } else {
        None
    }
}

fn check_echo(echo: &str, original: &str) -> Result<(), StructureError> {
    if collapse_whitespace(echo) == collapse_whitespace(&sanitize_wrapped(original)) {
        Ok(())
    } else {
        Err(StructureError::EchoMismatch)
    }
}

/// Text of a `... >` body with the closing bracket removed and whitespace trimmed.
fn close_body(raw: &str, marker: &'static str) -> Result<String, StructureError> {
    let body = raw
        .trim_end()
        .strip_suffix('>')
        .ok_or(StructureError::UnclosedMarker(marker))?
        .trim();
    if body.is_empty() {
        return Err(StructureError::EmptyBody);
    }
    if let Some(m) = MARKERS.iter().find(|m| body.contains(**m)) {
        return Err(StructureError::MarkerInBody(m));
    }
    Ok(body.to_string())
}

/// Parses `**<utterance>** + <Backstory: ...> [END]`, checking the echo.
pub fn parse_backstory(completion: &str, original_utt: &str) -> Result<ParsedBackstory, StructureError> {
    let s = strip_speaker(completion, "User:");
    let marker = s
        .find(BACKSTORY_MARKER)
        .ok_or(StructureError::MissingMarker(BACKSTORY_MARKER))?;
    let echo = unwrap_echo(strip_joiner(&s[..marker])).ok_or(StructureError::MissingEcho)?;
    check_echo(echo, original_utt)?;
    let rest = &s[marker + BACKSTORY_MARKER.len()..];
    let end = rest.find(TERMINATOR).ok_or(StructureError::MissingTerminator)?;
    let text = close_body(&rest[..end], BACKSTORY_MARKER)?;
    Ok(ParsedBackstory { text })
}

/// Parses `<Reaction: ...> + **<response>** [END]`, checking order and echo.
pub fn parse_reaction(completion: &str, orig_response: &str) -> Result<ParsedReaction, StructureError> {
    let s = strip_speaker(completion, "System:");
    let marker = s
        .find(REACTION_MARKER)
        .ok_or(StructureError::MissingMarker(REACTION_MARKER))?;
    let before = s[..marker].trim();
    if before.contains(ECHO) {
        return Err(StructureError::OrderViolation);
    }
    if !before.is_empty() {
        return Err(StructureError::StrayText(REACTION_MARKER));
    }
    let rest = &s[marker + REACTION_MARKER.len()..];
    let end = rest.find(TERMINATOR).ok_or(StructureError::MissingTerminator)?;
    let segment = &rest[..end];
    let echo_start = segment.find(ECHO).ok_or(StructureError::MissingEcho)?;
    let text = close_body(strip_joiner(&segment[..echo_start]), REACTION_MARKER)?;
    let echo = unwrap_echo(strip_joiner_front(&segment[echo_start..])).ok_or(StructureError::MissingEcho)?;
    check_echo(echo, orig_response)?;
    Ok(ParsedReaction { text })
}

/// The completion a well-behaved model returns for the backstory prompt.
pub fn render_backstory_completion(utterance: &str, backstory: &str) -> String {
    format!("{} + {BACKSTORY_MARKER} {backstory}> {TERMINATOR}", super::wrap(utterance))
}

/// The completion a well-behaved model returns for the reaction prompt.
pub fn render_reaction_completion(response: &str, reaction: &str) -> String {
    format!("{REACTION_MARKER} {reaction}> + {} {TERMINATOR}", super::wrap(response))
}
