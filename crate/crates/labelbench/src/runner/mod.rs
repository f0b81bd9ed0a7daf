//! Grid orchestration: run every (backend, prompt, iteration, topic) cell,
//! persist each outcome as it lands, and resume interrupted runs.

pub mod store;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use chrono::Utc;
use serde::{Deserialize, Serialize};

use crate::corpus::Topic;
use crate::embed::EmbeddingProviderSpec;
use crate::error::{Error, Result};
use crate::gateway::{BackendSpec, CellRef, CompletionRecord, Gateway};
use crate::prompt::{render_prompt, LabelRecord, PromptKind, PromptTemplate};

pub use store::{CellKey, Coverage, FailureRecord, RunStore};

fn default_iterations() -> u32 {
    20
}

fn default_parallel() -> usize {
    4
}

fn default_corpus_descriptor() -> String {
    crate::prompt::DEFAULT_CORPUS_DESCRIPTOR.to_string()
}

/// Resolved experiment description. Together with the topic set this
/// defines the full cell grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub topics_path: String,
    pub backends: Vec<BackendSpec>,
    pub prompt_kinds: Vec<PromptKind>,
    #[serde(default = "default_iterations")]
    pub iterations: u32,
    pub run_dir: PathBuf,
    #[serde(default)]
    pub global_seed: u64,
    #[serde(default = "default_parallel")]
    pub max_parallel_backends: usize,
    #[serde(default = "default_corpus_descriptor")]
    pub corpus_descriptor: String,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.backends.is_empty() {
            return Err(Error::InvalidConfig("at least one backend required".into()));
        }
        let mut ids = std::collections::BTreeSet::new();
        for backend in &self.backends {
            backend.validate()?;
            if !ids.insert(&backend.id) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate backend id {:?}",
                    backend.id
                )));
            }
        }
        if self.prompt_kinds.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one prompt kind required".into(),
            ));
        }
        let mut kinds = std::collections::BTreeSet::new();
        for kind in &self.prompt_kinds {
            if !kinds.insert(kind) {
                return Err(Error::InvalidConfig(format!(
                    "duplicate prompt kind {kind}"
                )));
            }
        }
        if self.iterations < 1 {
            return Err(Error::InvalidConfig("iterations must be >= 1".into()));
        }
        if self.max_parallel_backends < 1 {
            return Err(Error::InvalidConfig(
                "max_parallel_backends must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Everything a run directory needs to be self-contained: the config, the
/// topic set it was launched with, and the embedding provider for analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub config: ExperimentConfig,
    pub topics: Vec<Topic>,
    #[serde(default)]
    pub provider: EmbeddingProviderSpec,
}

impl RunSnapshot {
    pub fn new(
        config: ExperimentConfig,
        topics: Vec<Topic>,
        provider: EmbeddingProviderSpec,
    ) -> Self {
        Self {
            config,
            topics,
            provider,
        }
    }

    /// The grid-defining parts of the snapshot. Pacing, retry and
    /// parallelism settings may change between run and resume; these
    /// may not.
    pub fn grid_fingerprint(&self) -> serde_json::Value {
        let backends: Vec<serde_json::Value> = self
            .config
            .backends
            .iter()
            .map(|b| {
                serde_json::json!({
                    "id": b.id,
                    "kind": b.kind,
                    "endpoint_or_command": b.endpoint_or_command,
                    "model_name": b.model_name,
                    "mock_seed": b.mock_seed,
                    "mock_variants": b.mock_variants,
                    "extra_params": b.extra_params,
                })
            })
            .collect();
        serde_json::json!({
            "backends": backends,
            "prompt_kinds": self.config.prompt_kinds,
            "iterations": self.config.iterations,
            "global_seed": self.config.global_seed,
            "corpus_descriptor": self.config.corpus_descriptor,
            "topics": self.topics,
        })
    }
}

/// Labels projected from completions, sorted by cell key, plus the cells
/// whose stored response no longer parses.
#[derive(Debug, Clone)]
pub struct ProjectedLabels {
    pub labels: Vec<LabelRecord>,
    pub unparseable: Vec<(CellKey, String)>,
}

/// Pure projection: parse + normalize every completion. Deterministic for
/// a given completion set regardless of input order.
pub fn project_labels(completions: &[CompletionRecord]) -> ProjectedLabels {
    let mut labels = Vec::with_capacity(completions.len());
    let mut unparseable = Vec::new();
    for rec in completions {
        match LabelRecord::from_response(
            &rec.backend_id,
            rec.prompt_kind,
            rec.iteration,
            rec.topic_id,
            &rec.raw_response,
        ) {
            Ok(label) => labels.push(label),
            Err(e) => unparseable.push((CellKey::from(rec), e.to_string())),
        }
    }
    labels.sort_by(|a, b| CellKey::from(a).cmp(&CellKey::from(b)));
    unparseable.sort_by(|a, b| a.0.cmp(&b.0));
    ProjectedLabels {
        labels,
        unparseable,
    }
}

/// Execute a configured experiment. Re-running over an existing run
/// directory with the same grid resumes it; a different grid is rejected.
pub fn run_experiment(snapshot: RunSnapshot, gateway: &Gateway) -> Result<RunStore> {
    snapshot.config.validate()?;
    snapshot.provider.validate()?;
    if snapshot.topics.is_empty() {
        return Err(Error::InvalidConfig("topic set is empty".into()));
    }
    let run_dir = snapshot.config.run_dir.clone();
    let mut store = if run_dir.join(store::SNAPSHOT_FILE).exists() {
        let existing = RunStore::open(&run_dir)?;
        if existing.snapshot().grid_fingerprint() != snapshot.grid_fingerprint() {
            return Err(Error::ConfigMismatch(format!(
                "run directory {} was created with a different grid configuration",
                run_dir.display()
            )));
        }
        existing
    } else {
        RunStore::create(&run_dir, snapshot)?
    };
    execute_pending(&mut store, gateway)?;
    store.write_labels()?;
    Ok(store)
}

/// Pick up an interrupted run: execute only missing or failed cells,
/// never touching existing successful records.
pub fn resume_run(run_dir: &Path, gateway: &Gateway) -> Result<RunStore> {
    let mut store = RunStore::open(run_dir)?;
    execute_pending(&mut store, gateway)?;
    store.write_labels()?;
    Ok(store)
}

enum CellOutcome {
    Done(CompletionRecord),
    Failed(FailureRecord),
}

fn execute_pending(store: &mut RunStore, gateway: &Gateway) -> Result<()> {
    let pending = store.pending_cells();
    if pending.is_empty() {
        return Ok(());
    }

    let snapshot = store.snapshot().clone();
    let topics: BTreeMap<u64, &Topic> = snapshot.topics.iter().map(|t| (t.id, t)).collect();
    let templates: BTreeMap<PromptKind, PromptTemplate> = snapshot
        .config
        .prompt_kinds
        .iter()
        .map(|&kind| {
            (
                kind,
                PromptTemplate::builtin_with_descriptor(kind, &snapshot.config.corpus_descriptor),
            )
        })
        .collect();

    // cells grouped per backend, in config order
    let mut per_backend: Vec<(&BackendSpec, Vec<&CellKey>)> = snapshot
        .config
        .backends
        .iter()
        .map(|b| (b, Vec::new()))
        .collect();
    for cell in &pending {
        if let Some((_, cells)) = per_backend
            .iter_mut()
            .find(|(b, _)| b.id == cell.backend_id)
        {
            cells.push(cell);
        }
    }

    for chunk in per_backend.chunks(snapshot.config.max_parallel_backends.max(1)) {
        let (tx, rx) = mpsc::channel::<CellOutcome>();
        std::thread::scope(|scope| -> Result<()> {
            for (backend, cells) in chunk {
                if cells.is_empty() {
                    continue;
                }
                let tx = tx.clone();
                let topics = &topics;
                let templates = &templates;
                scope.spawn(move || {
                    run_backend_cells(gateway, backend, cells, topics, templates, &tx);
                });
            }
            drop(tx);
            for outcome in rx {
                match outcome {
                    CellOutcome::Done(rec) => store.append_completion(rec)?,
                    CellOutcome::Failed(rec) => store.append_failure(rec)?,
                }
            }
            Ok(())
        })?;
    }
    Ok(())
}

/// Worker loop for one backend. Within a backend, dispatch is strictly
/// sequential so the gateway's pacing interval is honored.
fn run_backend_cells(
    gateway: &Gateway,
    backend: &BackendSpec,
    cells: &[&CellKey],
    topics: &BTreeMap<u64, &Topic>,
    templates: &BTreeMap<PromptKind, PromptTemplate>,
    tx: &mpsc::Sender<CellOutcome>,
) {
    let mut abort_reason: Option<String> = None;
    for &cell in cells {
        if let Some(reason) = &abort_reason {
            let _ = tx.send(CellOutcome::Failed(failure(cell, reason.clone(), 0)));
            continue;
        }
        let Some(topic) = topics.get(&cell.topic_id) else {
            let _ = tx.send(CellOutcome::Failed(failure(
                cell,
                "topic missing from snapshot".into(),
                0,
            )));
            continue;
        };
        let template = &templates[&cell.prompt_kind];
        let prompt = render_prompt(template, topic);
        let cell_ref = CellRef {
            prompt_kind: cell.prompt_kind,
            iteration: cell.iteration,
            topic,
        };

        // degenerate completions (nothing parseable after the marker) are
        // retried with fresh completions up to the backend's retry budget
        let mut calls = 0u32;
        let outcome = loop {
            calls += 1;
            match gateway.complete(backend, &prompt, cell_ref) {
                Ok(rec) => match LabelRecord::from_response(
                    &rec.backend_id,
                    rec.prompt_kind,
                    rec.iteration,
                    rec.topic_id,
                    &rec.raw_response,
                ) {
                    Ok(_) => break CellOutcome::Done(rec),
                    Err(e) => {
                        if calls > backend.max_retries {
                            break CellOutcome::Failed(failure(
                                cell,
                                format!("degenerate completion: {e}"),
                                calls,
                            ));
                        }
                    }
                },
                Err(e @ (Error::AuthFailure { .. } | Error::MissingApiKey { .. })) => {
                    // credentials won't heal mid-run; fail the rest fast
                    let reason = e.to_string();
                    abort_reason = Some(reason.clone());
                    break CellOutcome::Failed(failure(cell, reason, calls));
                }
                Err(e) => {
                    break CellOutcome::Failed(failure(cell, e.to_string(), calls));
                }
            }
        };
        if tx.send(outcome).is_err() {
            return;
        }
    }
}

fn failure(cell: &CellKey, reason: String, attempts: u32) -> FailureRecord {
    FailureRecord {
        backend_id: cell.backend_id.clone(),
        prompt_kind: cell.prompt_kind,
        iteration: cell.iteration,
        topic_id: cell.topic_id,
        reason,
        attempts,
        timestamp: Utc::now(),
    }
}
