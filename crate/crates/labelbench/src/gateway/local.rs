//! Local-command backend: the prompt goes to the command's stdin, the
//! completion is read from its stdout. Hosts any local text2text model
//! wrapper without binding the harness to an ML runtime.

use std::io::Write;
use std::process::{Command, Stdio};

use crate::error::Error;

use super::{BackendSpec, DispatchError, RawCompletion};

pub(super) fn dispatch_local_command(
    backend: &BackendSpec,
    prompt: &str,
) -> Result<RawCompletion, DispatchError> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&backend.endpoint_or_command)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| DispatchError::Transient(format!("spawn failed: {e}")))?;

    if let Some(mut stdin) = child.stdin.take() {
        // the command may exit without reading stdin; a broken pipe is fine
        let _ = stdin.write_all(prompt.as_bytes());
    }
    let output = child
        .wait_with_output()
        .map_err(|e| DispatchError::Transient(format!("wait failed: {e}")))?;

    if !output.status.success() {
        let code = output.status.code().unwrap_or(-1);
        let stderr = String::from_utf8_lossy(&output.stderr);
        let msg = format!(
            "command exited with status {code}: {}",
            stderr.trim().chars().take(200).collect::<String>()
        );
        // 126/127 mean the command itself is unusable; retrying won't help
        if code == 126 || code == 127 {
            return Err(DispatchError::Fatal(Error::Http(format!(
                "backend {}: {msg}",
                backend.id
            ))));
        }
        return Err(DispatchError::Transient(msg));
    }

    let text = String::from_utf8_lossy(&output.stdout).to_string();
    if text.trim().is_empty() {
        return Err(DispatchError::Fatal(Error::MalformedResponse {
            backend_id: backend.id.clone(),
            reason: "command produced no stdout".to_string(),
        }));
    }
    Ok(RawCompletion {
        text,
        input_tokens: None,
        output_tokens: None,
    })
}
