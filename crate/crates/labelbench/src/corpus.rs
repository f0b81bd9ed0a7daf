//! Topic-model export ingestion.
//!
//! Input is a UTF-8 line-delimited file, one JSON record per topic:
//! `{"id": 32, "keywords": ["carbon", "forests", ...]}`. Keywords are
//! stored verbatim (no case folding) so prompts show exactly what the
//! topic model produced.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One topic: its id and the ranked keyword list that represents it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub id: u64,
    pub keywords: Vec<String>,
}

impl Topic {
    pub fn new(id: u64, keywords: Vec<String>) -> Self {
        Self { id, keywords }
    }
}

/// A validated set of topics, iterated in ascending id order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicSet {
    topics: Vec<Topic>,
    pub source_path: String,
    #[serde(default)]
    pub corpus_note: Option<String>,
}

impl TopicSet {
    /// Build a set from loose topics, enforcing all invariants.
    pub fn from_topics(topics: Vec<Topic>, source_path: impl Into<String>) -> Result<Self> {
        let source_path = source_path.into();
        if topics.is_empty() {
            return Err(Error::EmptyTopicSet(PathBuf::from(&source_path)));
        }
        let mut by_id: BTreeMap<u64, Topic> = BTreeMap::new();
        for t in topics {
            validate_topic(&t)?;
            if by_id.insert(t.id, t.clone()).is_some() {
                return Err(Error::DuplicateTopicId(t.id));
            }
        }
        Ok(Self {
            topics: by_id.into_values().collect(),
            source_path,
            corpus_note: None,
        })
    }

    /// Topics sorted by id.
    pub fn topics(&self) -> &[Topic] {
        &self.topics
    }

    pub fn len(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&Topic> {
        self.topics
            .binary_search_by_key(&id, |t| t.id)
            .ok()
            .map(|i| &self.topics[i])
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.topics.iter().map(|t| t.id)
    }
}

fn validate_topic(t: &Topic) -> Result<()> {
    let bad = |reason: String| Error::MalformedTopicRecord {
        path: PathBuf::new(),
        line: 0,
        reason,
    };
    if t.keywords.is_empty() {
        return Err(bad(format!("topic {} has no keywords", t.id)));
    }
    for (i, kw) in t.keywords.iter().enumerate() {
        if kw.trim().is_empty() {
            return Err(bad(format!("topic {} keyword {} is empty", t.id, i)));
        }
    }
    for i in 0..t.keywords.len() {
        for j in (i + 1)..t.keywords.len() {
            if t.keywords[i] == t.keywords[j] {
                return Err(bad(format!(
                    "topic {} has duplicate keyword {:?}",
                    t.id, t.keywords[i]
                )));
            }
        }
    }
    Ok(())
}

/// Load and validate a topic file. Topics come back sorted by id
/// regardless of file order.
pub fn load_topics(path: impl AsRef<Path>) -> Result<TopicSet> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::TopicFileMissing(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut topics = Vec::new();
    let mut seen = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let topic: Topic = serde_json::from_str(line).map_err(|e| Error::MalformedTopicRecord {
            path: path.to_path_buf(),
            line: lineno + 1,
            reason: e.to_string(),
        })?;
        validate_topic(&topic).map_err(|e| match e {
            Error::MalformedTopicRecord { reason, .. } => Error::MalformedTopicRecord {
                path: path.to_path_buf(),
                line: lineno + 1,
                reason,
            },
            other => other,
        })?;
        if let Some(prev) = seen.insert(topic.id, lineno + 1) {
            let _ = prev;
            return Err(Error::DuplicateTopicId(topic.id));
        }
        topics.push(topic);
    }
    if topics.is_empty() {
        return Err(Error::EmptyTopicSet(path.to_path_buf()));
    }
    topics.sort_by_key(|t| t.id);
    Ok(TopicSet {
        topics,
        source_path: path.display().to_string(),
        corpus_note: None,
    })
}

/// Write a topic set back out in the normalized (id-sorted) form.
pub fn save_topics(ts: &TopicSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for t in ts.topics() {
        out.push_str(&serde_json::to_string(t)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Non-fatal checks: the reference setting uses 10 keywords per topic,
/// so other counts are reported but accepted.
pub fn validate_topic_set(ts: &TopicSet) -> Vec<String> {
    let mut warnings = Vec::new();
    for t in ts.topics() {
        if t.keywords.len() != 10 {
            warnings.push(format!(
                "topic {}: keyword count {} != 10",
                t.id,
                t.keywords.len()
            ));
        }
    }
    warnings
}
