//! Chat-completions HTTP backend.
//!
//! Sends a single user message to a config-driven endpoint and reads the
//! standard chat-completion response shape (first choice's message content
//! plus usage counters). Any compatible gateway works.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::error::Error;

use super::{BackendSpec, DispatchError, RawCompletion};

#[derive(Debug, Deserialize)]
struct ChatResponse {
    #[serde(default)]
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    #[serde(default)]
    message: Message,
}

#[derive(Debug, Default, Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

pub(super) fn dispatch_http_chat(
    client: &reqwest::blocking::Client,
    backend: &BackendSpec,
    prompt: &str,
) -> Result<RawCompletion, DispatchError> {
    let mut body = json!({
        "model": backend.model_name,
        "messages": [{"role": "user", "content": prompt}],
    });
    if let Some(extra) = &backend.extra_params {
        let obj = body.as_object_mut().unwrap();
        for (k, v) in extra {
            obj.insert(k.clone(), v.clone());
        }
    }

    let mut req = client
        .post(&backend.endpoint_or_command)
        .timeout(Duration::from_millis(backend.timeout_ms))
        .json(&body);
    if !backend.api_key_env.is_empty() {
        let key = std::env::var(&backend.api_key_env).map_err(|_| {
            DispatchError::Fatal(Error::MissingApiKey {
                backend_id: backend.id.clone(),
                var: backend.api_key_env.clone(),
            })
        })?;
        req = req.header("authorization", format!("Bearer {key}"));
    }

    let response = req
        .send()
        .map_err(|e| DispatchError::Transient(format!("request failed: {e}")))?;

    let status = response.status();
    if status.as_u16() == 401 || status.as_u16() == 403 {
        let body = response.text().unwrap_or_default();
        return Err(DispatchError::Fatal(Error::AuthFailure {
            backend_id: backend.id.clone(),
            reason: format!("status {status}: {}", truncate(&body, 200)),
        }));
    }
    if status.as_u16() == 408 || status.as_u16() == 429 || status.is_server_error() {
        let body = response.text().unwrap_or_default();
        return Err(DispatchError::Transient(format!(
            "status {status}: {}",
            truncate(&body, 200)
        )));
    }
    if !status.is_success() {
        let body = response.text().unwrap_or_default();
        return Err(DispatchError::Fatal(Error::Http(format!(
            "backend {}: unexpected status {status}: {}",
            backend.id,
            truncate(&body, 200)
        ))));
    }

    let parsed: ChatResponse = response
        .json()
        .map_err(|e| DispatchError::Transient(format!("unreadable response body: {e}")))?;
    let text = parsed
        .choices
        .first()
        .and_then(|c| c.message.content.clone())
        .unwrap_or_default();
    if text.trim().is_empty() {
        return Err(DispatchError::Fatal(Error::MalformedResponse {
            backend_id: backend.id.clone(),
            reason: "response carried no message text".to_string(),
        }));
    }
    let (input_tokens, output_tokens) = match parsed.usage {
        Some(u) => (Some(u.prompt_tokens), Some(u.completion_tokens)),
        None => (None, None),
    };
    Ok(RawCompletion {
        text,
        input_tokens,
        output_tokens,
    })
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((idx, _)) => &s[..idx],
        None => s,
    }
}
