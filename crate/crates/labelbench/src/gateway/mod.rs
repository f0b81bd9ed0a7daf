//! Uniform completion interface over HTTP chat backends, local commands and
//! a deterministic mock, with retry, pacing and token accounting.

mod cost;
mod http;
mod local;
pub mod mock;
mod pacing;

use std::sync::Arc;

use chrono::{DateTime, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Topic;
use crate::error::{Error, Result};
use crate::prompt::PromptKind;

pub use cost::{estimate_cost, run_cost_report, CostRow, Usd};
pub use mock::mock_complete;
pub use pacing::{Clock, PacingGate, SystemClock};

/// How a backend is reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpChat,
    LocalCommand,
    Mock,
}

/// Exponential backoff parameters: full jitter on base * 2^(attempt-1),
/// capped. Delays only affect wall time, never persisted results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub base_ms: u64,
    pub cap_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            base_ms: 1_000,
            cap_ms: 30_000,
        }
    }
}

fn default_max_retries() -> u32 {
    3
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_mock_variants() -> u32 {
    1
}

/// Declarative description of one completion backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub id: String,
    pub kind: BackendKind,
    /// Full request URL for `http_chat`, shell command for `local_command`.
    #[serde(default)]
    pub endpoint_or_command: String,
    #[serde(default)]
    pub model_name: String,
    /// Name of the environment variable holding the API key. Keys never
    /// live in config files.
    #[serde(default)]
    pub api_key_env: String,
    #[serde(default)]
    pub price_input_per_1m: f64,
    #[serde(default)]
    pub price_output_per_1m: f64,
    #[serde(default)]
    pub min_request_interval_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub mock_seed: u64,
    #[serde(default = "default_mock_variants")]
    pub mock_variants: u32,
    /// Extra keys merged into the chat request body (temperature etc).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra_params: Option<serde_json::Map<String, serde_json::Value>>,
    #[serde(default)]
    pub retry: RetryPolicy,
}

impl BackendSpec {
    pub fn mock(id: &str, mock_seed: u64) -> Self {
        Self {
            id: id.to_string(),
            kind: BackendKind::Mock,
            endpoint_or_command: String::new(),
            model_name: String::new(),
            api_key_env: String::new(),
            price_input_per_1m: 0.0,
            price_output_per_1m: 0.0,
            min_request_interval_ms: 0,
            max_retries: default_max_retries(),
            timeout_ms: default_timeout_ms(),
            mock_seed,
            mock_variants: 1,
            extra_params: None,
            retry: RetryPolicy::default(),
        }
    }

    pub fn http_chat(id: &str, endpoint: &str, model_name: &str) -> Self {
        Self {
            id: id.to_string(),
            kind: BackendKind::HttpChat,
            endpoint_or_command: endpoint.to_string(),
            model_name: model_name.to_string(),
            ..Self::mock(id, 0)
        }
    }

    pub fn local_command(id: &str, command: &str) -> Self {
        Self {
            id: id.to_string(),
            kind: BackendKind::LocalCommand,
            endpoint_or_command: command.to_string(),
            ..Self::mock(id, 0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidConfig("backend id must not be empty".into()));
        }
        if self.price_input_per_1m < 0.0 || self.price_output_per_1m < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "backend {}: prices must be >= 0",
                self.id
            )));
        }
        if self.mock_variants < 1 {
            return Err(Error::InvalidConfig(format!(
                "backend {}: mock_variants must be >= 1",
                self.id
            )));
        }
        match self.kind {
            BackendKind::HttpChat | BackendKind::LocalCommand => {
                if self.endpoint_or_command.is_empty() {
                    return Err(Error::InvalidConfig(format!(
                        "backend {}: endpoint_or_command must be set",
                        self.id
                    )));
                }
            }
            BackendKind::Mock => {}
        }
        Ok(())
    }
}

/// Raw LLM exchange for one cell of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRecord {
    pub backend_id: String,
    pub prompt_kind: PromptKind,
    pub iteration: u32,
    pub topic_id: u64,
    pub prompt_text: String,
    pub raw_response: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Set when the backend reported no usage and counts were estimated
    /// as ceil(chars / 4).
    pub estimated_tokens: bool,
    pub latency_ms: u64,
    pub attempts: u32,
    pub timestamp: DateTime<Utc>,
}

/// The cell being completed: prompt kind, iteration index and the topic
/// (the mock backend derives its response from the keywords).
#[derive(Debug, Clone, Copy)]
pub struct CellRef<'a> {
    pub prompt_kind: PromptKind,
    pub iteration: u32,
    pub topic: &'a Topic,
}

pub(crate) struct RawCompletion {
    text: String,
    input_tokens: Option<u64>,
    output_tokens: Option<u64>,
}

pub(crate) enum DispatchError {
    /// Never retried: bad credentials, unusable endpoint, no text.
    Fatal(Error),
    /// Retried with backoff: timeouts, rate limits, 5xx.
    Transient(String),
}

/// Shared completion front-end. Per-backend dispatch is paced through a
/// single gate; records are immutable once produced.
pub struct Gateway {
    pacing: PacingGate,
    http: reqwest::blocking::Client,
}

impl Gateway {
    pub fn new() -> Self {
        Self::with_clock(Arc::new(SystemClock::new()))
    }

    pub fn with_clock(clock: Arc<dyn Clock>) -> Self {
        Self {
            pacing: PacingGate::new(clock),
            http: reqwest::blocking::Client::new(),
        }
    }

    /// Complete one cell. Transient failures are retried with exponential
    /// backoff up to `max_retries`; auth failures are never retried.
    pub fn complete(
        &self,
        backend: &BackendSpec,
        prompt: &str,
        cell: CellRef<'_>,
    ) -> Result<CompletionRecord> {
        let started = self.pacing.clock().now_ms();
        let max_attempts = backend.max_retries + 1;
        let mut attempts = 0u32;
        loop {
            attempts += 1;
            self.pacing
                .acquire(&backend.id, backend.min_request_interval_ms);
            let outcome = match backend.kind {
                BackendKind::Mock => Ok(RawCompletion {
                    text: mock_complete(backend, cell.topic, cell.prompt_kind, cell.iteration),
                    input_tokens: None,
                    output_tokens: None,
                }),
                BackendKind::HttpChat => http::dispatch_http_chat(&self.http, backend, prompt),
                BackendKind::LocalCommand => local::dispatch_local_command(backend, prompt),
            };
            match outcome {
                Ok(raw) => {
                    return Ok(self.build_record(backend, prompt, cell, raw, attempts, started))
                }
                Err(DispatchError::Fatal(e)) => return Err(e),
                Err(DispatchError::Transient(msg)) => {
                    if attempts >= max_attempts {
                        return Err(Error::RetriesExhausted {
                            backend_id: backend.id.clone(),
                            attempts,
                            last_error: msg,
                        });
                    }
                    let delay = backoff_delay_ms(&backend.retry, attempts);
                    self.pacing.clock().sleep_ms(delay);
                }
            }
        }
    }

    fn build_record(
        &self,
        backend: &BackendSpec,
        prompt: &str,
        cell: CellRef<'_>,
        raw: RawCompletion,
        attempts: u32,
        started_ms: u64,
    ) -> CompletionRecord {
        let estimated = raw.input_tokens.is_none() || raw.output_tokens.is_none();
        let input_tokens = raw.input_tokens.unwrap_or_else(|| estimate_tokens(prompt));
        let output_tokens = raw
            .output_tokens
            .unwrap_or_else(|| estimate_tokens(&raw.text));
        CompletionRecord {
            backend_id: backend.id.clone(),
            prompt_kind: cell.prompt_kind,
            iteration: cell.iteration,
            topic_id: cell.topic.id,
            prompt_text: prompt.to_string(),
            raw_response: raw.text,
            input_tokens,
            output_tokens,
            estimated_tokens: estimated,
            latency_ms: self.pacing.clock().now_ms().saturating_sub(started_ms),
            attempts,
            timestamp: Utc::now(),
        }
    }
}

impl Default for Gateway {
    fn default() -> Self {
        Self::new()
    }
}

/// ceil(chars / 4) — coarse fallback when a backend reports no usage.
fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

fn backoff_delay_ms(retry: &RetryPolicy, attempt: u32) -> u64 {
    let exp = retry
        .base_ms
        .saturating_mul(1u64 << (attempt - 1).min(20))
        .min(retry.cap_ms);
    rand::rng().random_range(0..=exp)
}
