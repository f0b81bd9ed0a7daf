//! HTTP embeddings provider speaking the standard embeddings-endpoint
//! shape: request `{model, input: [text]}`, response `{data: [{embedding}]}`.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::error::{Error, Result};

use super::EmbeddingProviderSpec;

#[derive(Debug, Deserialize)]
struct EmbeddingsResponse {
    #[serde(default)]
    data: Vec<EmbeddingItem>,
}

#[derive(Debug, Deserialize)]
struct EmbeddingItem {
    embedding: Vec<f64>,
}

pub(super) fn fetch_embedding(
    client: &reqwest::blocking::Client,
    spec: &EmbeddingProviderSpec,
    text: &str,
) -> Result<Vec<f64>> {
    let body = json!({
        "model": spec.model_name,
        "input": [text],
    });
    let mut req = client
        .post(&spec.endpoint)
        .timeout(Duration::from_millis(spec.timeout_ms))
        .json(&body);
    if !spec.api_key_env.is_empty() {
        let key = std::env::var(&spec.api_key_env).map_err(|_| {
            Error::ProviderUnreachable(format!(
                "missing API key environment variable {}",
                spec.api_key_env
            ))
        })?;
        req = req.header("authorization", format!("Bearer {key}"));
    }
    let response = req
        .send()
        .map_err(|e| Error::ProviderUnreachable(e.to_string()))?;
    let status = response.status();
    if !status.is_success() {
        let body = response.text().unwrap_or_default();
        return Err(Error::ProviderUnreachable(format!(
            "status {status}: {}",
            body.chars().take(200).collect::<String>()
        )));
    }
    let parsed: EmbeddingsResponse = response
        .json()
        .map_err(|e| Error::ProviderUnreachable(format!("bad response body: {e}")))?;
    let vector = parsed
        .data
        .into_iter()
        .next()
        .map(|d| d.embedding)
        .ok_or_else(|| Error::ProviderUnreachable("response carried no embedding".into()))?;
    if vector.is_empty() {
        return Err(Error::ProviderUnreachable("empty embedding vector".into()));
    }
    Ok(vector)
}
