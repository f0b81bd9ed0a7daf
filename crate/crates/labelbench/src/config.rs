//! Declarative experiment config (TOML).
//!
//! One file drives `run`; every other subcommand works off the run
//! directory, which carries a self-contained snapshot of this config.
//!
//! ```toml
//! topics = "topics.jsonl"
//! run_dir = "runs/demo"
//! prompts = ["short", "long"]
//! iterations = 20
//! seed = 42
//! max_parallel_backends = 3
//!
//! [[backends]]
//! id = "mock-a"
//! kind = "mock"
//! mock_variants = 3
//!
//! [provider]
//! kind = "hash_embedder"
//! dim = 256
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::corpus::load_topics;
use crate::embed::{EmbeddingProviderKind, EmbeddingProviderSpec};
use crate::error::{Error, Result};
use crate::gateway::{BackendKind, BackendSpec, RetryPolicy};
use crate::prompt::PromptKind;
use crate::runner::{ExperimentConfig, RunSnapshot};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    topics: String,
    run_dir: String,
    prompts: Vec<String>,
    #[serde(default)]
    iterations: Option<u32>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    max_parallel_backends: Option<usize>,
    #[serde(default)]
    corpus_descriptor: Option<String>,
    backends: Vec<RawBackend>,
    #[serde(default)]
    provider: Option<RawProvider>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBackend {
    id: String,
    kind: BackendKind,
    #[serde(default)]
    endpoint: Option<String>,
    #[serde(default)]
    command: Option<String>,
    #[serde(default)]
    model_name: Option<String>,
    #[serde(default)]
    api_key_env: Option<String>,
    #[serde(default)]
    price_input_per_1m: Option<f64>,
    #[serde(default)]
    price_output_per_1m: Option<f64>,
    #[serde(default)]
    min_request_interval_ms: Option<u64>,
    #[serde(default)]
    max_retries: Option<u32>,
    #[serde(default)]
    timeout_ms: Option<u64>,
    #[serde(default)]
    mock_seed: Option<u64>,
    #[serde(default)]
    mock_variants: Option<u32>,
    #[serde(default)]
    extra_params: Option<serde_json::Map<String, serde_json::Value>>,
    #[serde(default)]
    backoff_base_ms: Option<u64>,
    #[serde(default)]
    backoff_cap_ms: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProvider {
    kind: EmbeddingProviderKind,
    #[serde(default)]
    endpoint: Option<String>,
    #[serde(default)]
    model_name: Option<String>,
    #[serde(default)]
    dim: Option<usize>,
    #[serde(default)]
    cache_path: Option<String>,
    #[serde(default)]
    api_key_env: Option<String>,
    #[serde(default)]
    timeout_ms: Option<u64>,
}

impl RawBackend {
    /// Mocks without an explicit seed derive one from the global seed and
    /// their position, so multi-mock configs don't answer in lockstep.
    fn resolve(self, index: usize, global_seed: u64) -> Result<BackendSpec> {
        let mut spec = BackendSpec::mock(&self.id, 0);
        spec.kind = self.kind;
        spec.endpoint_or_command = match self.kind {
            BackendKind::HttpChat => self.endpoint.unwrap_or_default(),
            BackendKind::LocalCommand => self.command.unwrap_or_default(),
            BackendKind::Mock => String::new(),
        };
        spec.model_name = self.model_name.unwrap_or_default();
        spec.api_key_env = self.api_key_env.unwrap_or_default();
        spec.price_input_per_1m = self.price_input_per_1m.unwrap_or(0.0);
        spec.price_output_per_1m = self.price_output_per_1m.unwrap_or(0.0);
        spec.min_request_interval_ms = self.min_request_interval_ms.unwrap_or(0);
        if let Some(v) = self.max_retries {
            spec.max_retries = v;
        }
        if let Some(v) = self.timeout_ms {
            spec.timeout_ms = v;
        }
        spec.mock_seed = self
            .mock_seed
            .unwrap_or_else(|| global_seed.wrapping_add(index as u64));
        spec.mock_variants = self.mock_variants.unwrap_or(1);
        spec.extra_params = self.extra_params;
        let default_retry = RetryPolicy::default();
        spec.retry = RetryPolicy {
            base_ms: self.backoff_base_ms.unwrap_or(default_retry.base_ms),
            cap_ms: self.backoff_cap_ms.unwrap_or(default_retry.cap_ms),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl RawProvider {
    fn resolve(self, base: &Path) -> Result<EmbeddingProviderSpec> {
        let mut spec = EmbeddingProviderSpec::hash_embedder(self.dim.unwrap_or(256));
        spec.kind = self.kind;
        if let Some(endpoint) = self.endpoint {
            spec.endpoint = endpoint;
        }
        if let Some(model) = self.model_name {
            spec.model_name = model;
        }
        if let Some(cache) = self.cache_path {
            spec.cache_path = Some(resolve_path(base, &cache));
        }
        if let Some(var) = self.api_key_env {
            spec.api_key_env = var;
        }
        if let Some(timeout) = self.timeout_ms {
            spec.timeout_ms = timeout;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn resolve_path(base: &Path, raw: &str) -> PathBuf {
    let p = PathBuf::from(raw);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

/// Parse a config file, load its topic set and produce the run snapshot.
/// Relative paths are resolved against the config file's directory.
pub fn load_config(path: &Path) -> Result<RunSnapshot> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: RawConfig = toml::from_str(&text).map_err(|e| Error::Toml(e.to_string()))?;
    let base = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();

    let topics_path = resolve_path(&base, &raw.topics);
    let topic_set = load_topics(&topics_path)?;

    let mut prompt_kinds = Vec::new();
    for p in &raw.prompts {
        prompt_kinds.push(PromptKind::from_str(p)?);
    }

    let global_seed = raw.seed;
    let backends = raw
        .backends
        .into_iter()
        .enumerate()
        .map(|(i, b)| b.resolve(i, global_seed))
        .collect::<Result<Vec<_>>>()?;

    let run_dir = resolve_path(&base, &raw.run_dir);
    let provider = match raw.provider {
        Some(p) => p.resolve(&base)?,
        None => EmbeddingProviderSpec::default(),
    };

    let config = ExperimentConfig {
        topics_path: topics_path.display().to_string(),
        backends,
        prompt_kinds,
        iterations: raw.iterations.unwrap_or(20),
        run_dir,
        global_seed,
        max_parallel_backends: raw.max_parallel_backends.unwrap_or(4),
        corpus_descriptor: raw
            .corpus_descriptor
            .unwrap_or_else(|| crate::prompt::DEFAULT_CORPUS_DESCRIPTOR.to_string()),
    };
    config.validate()?;

    Ok(RunSnapshot::new(
        config,
        topic_set.topics().to_vec(),
        provider,
    ))
}

/// Parse a standalone provider spec file (TOML with the same fields as the
/// `[provider]` section).
pub fn load_provider(path: &Path) -> Result<EmbeddingProviderSpec> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: RawProvider = toml::from_str(&text).map_err(|e| Error::Toml(e.to_string()))?;
    let base = path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    raw.resolve(&base)
}
