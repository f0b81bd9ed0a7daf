//! On-disk run store.
//!
//! `config.snapshot` holds the resolved config plus the topic set, so a run
//! directory is self-contained. `completions.log` and `failures.log` are
//! append-only JSONL written as cells finish; a prefix of either is a valid
//! crash state. `labels.log` is a deterministic projection of the
//! completions, rewritten whole and sorted by cell key, so identical runs
//! produce byte-identical label files regardless of scheduling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::CompletionRecord;
use crate::prompt::{LabelRecord, PromptKind};

use super::{project_labels, ProjectedLabels, RunSnapshot};

pub const SNAPSHOT_FILE: &str = "config.snapshot";
pub const COMPLETIONS_FILE: &str = "completions.log";
pub const LABELS_FILE: &str = "labels.log";
pub const FAILURES_FILE: &str = "failures.log";
pub const ANNOTATIONS_FILE: &str = "annotations.tsv";

/// One (backend, prompt, iteration, topic) unit of work.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub backend_id: String,
    pub prompt_kind: PromptKind,
    pub iteration: u32,
    pub topic_id: u64,
}

impl CellKey {
    fn sort_tuple(&self) -> (&str, &str, u32, u64) {
        (
            &self.backend_id,
            self.prompt_kind.as_str(),
            self.iteration,
            self.topic_id,
        )
    }
}

impl PartialOrd for CellKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for CellKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sort_tuple().cmp(&other.sort_tuple())
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/iter{}/topic{}",
            self.backend_id, self.prompt_kind, self.iteration, self.topic_id
        )
    }
}

impl From<&CompletionRecord> for CellKey {
    fn from(rec: &CompletionRecord) -> Self {
        Self {
            backend_id: rec.backend_id.clone(),
            prompt_kind: rec.prompt_kind,
            iteration: rec.iteration,
            topic_id: rec.topic_id,
        }
    }
}

impl From<&LabelRecord> for CellKey {
    fn from(rec: &LabelRecord) -> Self {
        Self {
            backend_id: rec.backend_id.clone(),
            prompt_kind: rec.prompt_kind,
            iteration: rec.iteration,
            topic_id: rec.topic_id,
        }
    }
}

/// A cell that gave up (transport retries or unparseable completions).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailureRecord {
    pub backend_id: String,
    pub prompt_kind: PromptKind,
    pub iteration: u32,
    pub topic_id: u64,
    pub reason: String,
    pub attempts: u32,
    pub timestamp: DateTime<Utc>,
}

impl From<&FailureRecord> for CellKey {
    fn from(rec: &FailureRecord) -> Self {
        Self {
            backend_id: rec.backend_id.clone(),
            prompt_kind: rec.prompt_kind,
            iteration: rec.iteration,
            topic_id: rec.topic_id,
        }
    }
}

/// Successful cells / expected cells, with failures broken out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub expected: usize,
    pub successful: usize,
    pub failed: usize,
}

impl Coverage {
    pub fn missing(&self) -> usize {
        self.expected - self.successful - self.failed
    }
}

impl fmt::Display for Coverage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{} cells successful ({} failed, {} missing)",
            self.successful,
            self.expected,
            self.failed,
            self.missing()
        )
    }
}

/// In-memory view of a run directory plus its append handles.
#[derive(Debug)]
pub struct RunStore {
    run_dir: PathBuf,
    snapshot: RunSnapshot,
    completions: Vec<CompletionRecord>,
    failures: Vec<FailureRecord>,
    successful: BTreeSet<CellKey>,
    failed: BTreeMap<CellKey, String>,
    completions_out: Option<BufWriter<File>>,
    failures_out: Option<BufWriter<File>>,
}

impl RunStore {
    /// Initialize a fresh run directory and persist the snapshot.
    pub fn create(run_dir: &Path, snapshot: RunSnapshot) -> Result<Self> {
        fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
        let snapshot_path = run_dir.join(SNAPSHOT_FILE);
        let body = serde_json::to_string_pretty(&snapshot)?;
        fs::write(&snapshot_path, body).map_err(|e| Error::io(&snapshot_path, e))?;
        Ok(Self {
            run_dir: run_dir.to_path_buf(),
            snapshot,
            completions: Vec::new(),
            failures: Vec::new(),
            successful: BTreeSet::new(),
            failed: BTreeMap::new(),
            completions_out: None,
            failures_out: None,
        })
    }

    /// Load an existing run directory: snapshot, logs, status index. Records
    /// outside the snapshot's grid mean the snapshot no longer matches the
    /// data and are rejected.
    pub fn open(run_dir: &Path) -> Result<Self> {
        if !run_dir.is_dir() {
            return Err(Error::RunDirMissing(run_dir.to_path_buf()));
        }
        let snapshot_path = run_dir.join(SNAPSHOT_FILE);
        if !snapshot_path.exists() {
            return Err(Error::SnapshotMissing(run_dir.to_path_buf()));
        }
        let body = fs::read_to_string(&snapshot_path).map_err(|e| Error::io(&snapshot_path, e))?;
        let snapshot: RunSnapshot = serde_json::from_str(&body)
            .map_err(|e| Error::CorruptStore(format!("unreadable config snapshot: {e}")))?;

        let completions: Vec<CompletionRecord> = read_jsonl(&run_dir.join(COMPLETIONS_FILE))?;
        let failures: Vec<FailureRecord> = read_jsonl(&run_dir.join(FAILURES_FILE))?;

        let expected = expected_cells(&snapshot);
        let mut successful = BTreeSet::new();
        for rec in &completions {
            let key = CellKey::from(rec);
            if !expected.contains(&key) {
                return Err(Error::ConfigMismatch(format!(
                    "completion record {key} is outside the snapshot's grid"
                )));
            }
            if !successful.insert(key.clone()) {
                return Err(Error::CorruptStore(format!(
                    "duplicate successful record for cell {key}"
                )));
            }
        }
        let mut failed = BTreeMap::new();
        for rec in &failures {
            let key = CellKey::from(rec);
            if !expected.contains(&key) {
                return Err(Error::ConfigMismatch(format!(
                    "failure record {key} is outside the snapshot's grid"
                )));
            }
            if !successful.contains(&key) {
                failed.insert(key, rec.reason.clone());
            }
        }

        Ok(Self {
            run_dir: run_dir.to_path_buf(),
            snapshot,
            completions,
            failures,
            successful,
            failed,
            completions_out: None,
            failures_out: None,
        })
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    pub fn snapshot(&self) -> &RunSnapshot {
        &self.snapshot
    }

    pub fn completions(&self) -> &[CompletionRecord] {
        &self.completions
    }

    pub fn failures(&self) -> &[FailureRecord] {
        &self.failures
    }

    pub fn successful_cells(&self) -> &BTreeSet<CellKey> {
        &self.successful
    }

    pub fn expected_cells(&self) -> BTreeSet<CellKey> {
        expected_cells(&self.snapshot)
    }

    /// Cells still to execute: expected minus successful. Previously failed
    /// cells stay pending so a resume retries them.
    pub fn pending_cells(&self) -> Vec<CellKey> {
        expected_cells(&self.snapshot)
            .into_iter()
            .filter(|k| !self.successful.contains(k))
            .collect()
    }

    pub fn coverage(&self) -> Coverage {
        Coverage {
            expected: expected_cells(&self.snapshot).len(),
            successful: self.successful.len(),
            failed: self.failed.len(),
        }
    }

    pub fn append_completion(&mut self, rec: CompletionRecord) -> Result<()> {
        let key = CellKey::from(&rec);
        if self.successful.contains(&key) {
            return Err(Error::CorruptStore(format!(
                "cell {key} already has a successful record"
            )));
        }
        let path = self.run_dir.join(COMPLETIONS_FILE);
        if self.completions_out.is_none() {
            self.completions_out = Some(open_append(&path)?);
        }
        let out = self.completions_out.as_mut().unwrap();
        let line = serde_json::to_string(&rec)?;
        writeln!(out, "{line}").map_err(|e| Error::io(&path, e))?;
        out.flush().map_err(|e| Error::io(&path, e))?;
        self.failed.remove(&key);
        self.successful.insert(key);
        self.completions.push(rec);
        Ok(())
    }

    pub fn append_failure(&mut self, rec: FailureRecord) -> Result<()> {
        let key = CellKey::from(&rec);
        let path = self.run_dir.join(FAILURES_FILE);
        if self.failures_out.is_none() {
            self.failures_out = Some(open_append(&path)?);
        }
        let out = self.failures_out.as_mut().unwrap();
        let line = serde_json::to_string(&rec)?;
        writeln!(out, "{line}").map_err(|e| Error::io(&path, e))?;
        out.flush().map_err(|e| Error::io(&path, e))?;
        self.failed.insert(key, rec.reason.clone());
        self.failures.push(rec);
        Ok(())
    }

    /// Project labels from completions and rewrite `labels.log` atomically.
    pub fn write_labels(&self) -> Result<ProjectedLabels> {
        let projected = project_labels(&self.completions);
        let path = self.run_dir.join(LABELS_FILE);
        let tmp = self.run_dir.join(format!("{LABELS_FILE}.tmp"));
        let mut body = String::new();
        for label in &projected.labels {
            body.push_str(&serde_json::to_string(label)?);
            body.push('\n');
        }
        fs::write(&tmp, body).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(projected)
    }

    /// Current label projection without touching disk.
    pub fn labels(&self) -> ProjectedLabels {
        project_labels(&self.completions)
    }

    pub fn labels_path(&self) -> PathBuf {
        self.run_dir.join(LABELS_FILE)
    }

    pub fn annotations_path(&self) -> PathBuf {
        self.run_dir.join(ANNOTATIONS_FILE)
    }
}

/// The full grid implied by a snapshot.
pub fn expected_cells(snapshot: &RunSnapshot) -> BTreeSet<CellKey> {
    let mut cells = BTreeSet::new();
    for backend in &snapshot.config.backends {
        for &prompt_kind in &snapshot.config.prompt_kinds {
            for iteration in 0..snapshot.config.iterations {
                for topic in &snapshot.topics {
                    cells.insert(CellKey {
                        backend_id: backend.id.clone(),
                        prompt_kind,
                        iteration,
                        topic_id: topic.id,
                    });
                }
            }
        }
    }
    cells
}

fn open_append(path: &Path) -> Result<BufWriter<File>> {
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    Ok(BufWriter::new(file))
}

/// Read a JSONL file. A torn final line without a trailing newline (an
/// interrupted append) is ignored; anything else malformed is an error.
fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(rec) => out.push(rec),
            Err(e) => {
                let is_last = i + 1 == lines.len();
                if is_last && !text.ends_with('\n') {
                    break;
                }
                return Err(Error::CorruptStore(format!(
                    "{}:{}: {e}",
                    path.display(),
                    i + 1
                )));
            }
        }
    }
    Ok(out)
}
