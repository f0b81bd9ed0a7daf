//! Prompt rendering and response parsing.
//!
//! Two built-in templates ask for a single-word label or a one-to-three
//! word label and instruct the model to answer as `topic: <topic label>`.
//! Parsing extracts the text after that marker and normalization makes
//! labels comparable for the distinctness and stability metrics.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Topic;
use crate::error::{Error, Result};

pub const KEYWORDS_PLACEHOLDER: &str = "[KEYWORDS]";
pub const DEFAULT_CORPUS_DESCRIPTOR: &str = "Biology with 100 topics";
const LABEL_MARKER: &str = "topic:";

/// Which of the two label-length contracts a prompt asks for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Short,
    Long,
}

impl PromptKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::Short => "short",
            PromptKind::Long => "long",
        }
    }

    pub const ALL: [PromptKind; 2] = [PromptKind::Short, PromptKind::Long];
}

impl fmt::Display for PromptKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "short" => Ok(PromptKind::Short),
            "long" => Ok(PromptKind::Long),
            other => Err(Error::InvalidConfig(format!(
                "unknown prompt kind {other:?} (expected \"short\" or \"long\")"
            ))),
        }
    }
}

/// A prompt template with a `[KEYWORDS]` placeholder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub kind: PromptKind,
    pub body: String,
    pub corpus_descriptor: String,
}

impl PromptTemplate {
    /// The built-in template for `kind`, with the default corpus descriptor.
    pub fn builtin(kind: PromptKind) -> Self {
        Self::builtin_with_descriptor(kind, DEFAULT_CORPUS_DESCRIPTOR)
    }

    /// The built-in template with a custom corpus descriptor (the default
    /// text is kept verbatim for replication runs).
    pub fn builtin_with_descriptor(kind: PromptKind, corpus_descriptor: &str) -> Self {
        let length_clause = match kind {
            PromptKind::Short => "of a single word",
            PromptKind::Long => "between one and three words",
        };
        let body = format!(
            "I have a corpus of {corpus_descriptor}. I have a topic that is described by the following keywords: {KEYWORDS_PLACEHOLDER}\n\nBased on the information above, extract a short topic label {length_clause} that can accurately represent the topic, in the following format:\n\ntopic: <topic label>"
        );
        Self {
            kind,
            body,
            corpus_descriptor: corpus_descriptor.to_string(),
        }
    }

    /// Load a custom template body from a text file. The body must contain
    /// `[KEYWORDS]` exactly once.
    pub fn from_file(kind: PromptKind, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let body = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let t = Self {
            kind,
            body,
            corpus_descriptor: String::new(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let count = self.body.matches(KEYWORDS_PLACEHOLDER).count();
        if count != 1 {
            return Err(Error::BadPlaceholderCount(count));
        }
        Ok(())
    }
}

/// Replace the placeholder with the topic's keywords joined by ", ".
/// Deterministic: same template and topic give byte-identical output.
pub fn render_prompt(template: &PromptTemplate, topic: &Topic) -> String {
    let joined = topic.keywords.join(", ");
    template.body.replace(KEYWORDS_PLACEHOLDER, &joined)
}

/// The parse result for one raw model response, before normalization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedLabel {
    pub raw_label: String,
    pub word_count: usize,
    pub conformant: bool,
    pub parse_fallback: bool,
}

/// Connector words that don't count toward label length: "Carbon Cycle in
/// Forests" is a three-word label.
const CONNECTOR_WORDS: [&str; 12] = [
    "a", "an", "the", "of", "in", "on", "for", "and", "or", "to", "with", "by",
];

/// Label length in words. Whitespace tokens are counted, except connector
/// words (articles, short prepositions, conjunctions). A label made of
/// connector words alone falls back to its full token count.
pub fn label_word_count(raw_label: &str) -> usize {
    let tokens: Vec<&str> = raw_label.split_whitespace().collect();
    let content = tokens
        .iter()
        .filter(|t| {
            let lower = t.to_lowercase();
            let bare = lower.trim_matches(|c: char| !c.is_alphanumeric());
            !CONNECTOR_WORDS.contains(&bare)
        })
        .count();
    if content == 0 {
        tokens.len()
    } else {
        content
    }
}

/// Extract a label from a raw response.
///
/// The text after the `topic:` marker (case-insensitive, first line that
/// carries one; repeated markers on that line are skipped so the marker
/// never leaks into the label) is trimmed and stripped of one layer of
/// surrounding quotes or angle brackets. Responses without a marker fall
/// back to their first non-empty line with `parse_fallback` set.
pub fn parse_label(raw_response: &str, kind: PromptKind) -> Result<ParsedLabel> {
    let mut extracted: Option<String> = None;
    let mut fallback = false;

    for line in raw_response.lines() {
        if let Some(rest) = text_after_last_marker(line) {
            extracted = Some(rest);
            break;
        }
    }
    if extracted.is_none() {
        fallback = true;
        extracted = raw_response
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty())
            .map(str::to_string);
    }

    let candidate = extracted.unwrap_or_default();
    let raw_label = strip_wrapping(candidate.trim()).trim().to_string();
    if raw_label.is_empty() {
        return Err(Error::EmptyAfterParse);
    }
    let word_count = label_word_count(&raw_label);
    let conformant = match kind {
        PromptKind::Short => word_count == 1,
        PromptKind::Long => (1..=3).contains(&word_count),
    };
    Ok(ParsedLabel {
        raw_label,
        word_count,
        conformant,
        parse_fallback: fallback,
    })
}

/// Text after the last `topic:` occurrence on this line, if any.
/// The marker is ASCII, so a char-level scan with ASCII case folding
/// is exact and avoids byte-offset pitfalls on non-ASCII responses.
fn text_after_last_marker(line: &str) -> Option<String> {
    let chars: Vec<char> = line.chars().collect();
    let marker: Vec<char> = LABEL_MARKER.chars().collect();
    if chars.len() < marker.len() {
        return None;
    }
    let mut last_end = None;
    for start in 0..=(chars.len() - marker.len()) {
        let hit = chars[start..start + marker.len()]
            .iter()
            .zip(&marker)
            .all(|(c, m)| c.eq_ignore_ascii_case(m));
        if hit {
            last_end = Some(start + marker.len());
        }
    }
    last_end.map(|end| chars[end..].iter().collect())
}

/// Strip one layer of matching surrounding quotes or angle brackets.
fn strip_wrapping(s: &str) -> &str {
    let pairs = [('"', '"'), ('\'', '\''), ('<', '>'), ('`', '`')];
    for (open, close) in pairs {
        if s.len() >= 2 && s.starts_with(open) && s.ends_with(close) {
            return &s[open.len_utf8()..s.len() - close.len_utf8()];
        }
    }
    s
}

/// Canonical form for distinctness and stability: lowercase, trimmed,
/// internal whitespace collapsed, terminal punctuation stripped.
pub fn normalize_label(raw_label: &str) -> Result<String> {
    let lowered = raw_label.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    let stripped = collapsed
        .trim_end_matches(['.', ',', ';', ':', '!', '?'])
        .trim()
        .to_string();
    if stripped.is_empty() {
        return Err(Error::EmptyAfterNormalize(raw_label.to_string()));
    }
    Ok(stripped)
}

/// One parsed label for one (backend, prompt, iteration, topic) cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub backend_id: String,
    pub prompt_kind: PromptKind,
    pub iteration: u32,
    pub topic_id: u64,
    pub raw_label: String,
    pub normalized_label: String,
    pub word_count: usize,
    pub conformant: bool,
    pub parse_fallback: bool,
}

impl LabelRecord {
    /// Parse + normalize a raw response into a full record.
    pub fn from_response(
        backend_id: &str,
        prompt_kind: PromptKind,
        iteration: u32,
        topic_id: u64,
        raw_response: &str,
    ) -> Result<Self> {
        let parsed = parse_label(raw_response, prompt_kind)?;
        let normalized_label = normalize_label(&parsed.raw_label)?;
        Ok(Self {
            backend_id: backend_id.to_string(),
            prompt_kind,
            iteration,
            topic_id,
            raw_label: parsed.raw_label,
            normalized_label,
            word_count: parsed.word_count,
            conformant: parsed.conformant,
            parse_fallback: parsed.parse_fallback,
        })
    }
}
