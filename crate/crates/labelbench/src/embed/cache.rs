//! File-backed embedding cache: a versioned header line followed by one
//! JSON record per (text, vector). Warm and cold caches give identical
//! results (vectors round-trip exactly through JSON).

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::EmbeddingVector;

const CACHE_VERSION: &str = "labelbench-embed-cache v1";

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    text: String,
    values: Vec<f64>,
}

pub(super) struct FileCache {
    path: PathBuf,
    writer: File,
}

impl FileCache {
    /// Open (or create) a cache file for a provider identity, loading any
    /// existing entries. A file written by a different provider is rejected.
    pub fn open(
        path: &Path,
        identity: &str,
    ) -> Result<(Self, HashMap<String, Arc<EmbeddingVector>>)> {
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            let mut lines = BufReader::new(file).lines();
            let header = lines
                .next()
                .transpose()
                .map_err(|e| Error::io(path, e))?
                .unwrap_or_default();
            let expected = format!("{CACHE_VERSION} {identity}");
            if header != expected {
                return Err(Error::ConfigMismatch(format!(
                    "embedding cache {} belongs to {:?}, expected {:?}",
                    path.display(),
                    header,
                    expected
                )));
            }
            for line in lines {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                // a torn final record from an interrupted run is recomputed
                let Ok(rec) = serde_json::from_str::<CacheRecord>(&line) else {
                    continue;
                };
                entries.insert(rec.text, Arc::new(EmbeddingVector { values: rec.values }));
            }
        }
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        let fresh = !path.exists();
        let mut writer = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        if fresh {
            writeln!(writer, "{CACHE_VERSION} {identity}").map_err(|e| Error::io(path, e))?;
        }
        Ok((
            Self {
                path: path.to_path_buf(),
                writer,
            },
            entries,
        ))
    }

    pub fn append(&mut self, text: &str, vector: &EmbeddingVector) -> Result<()> {
        let rec = CacheRecord {
            text: text.to_string(),
            values: vector.values.clone(),
        };
        let line = serde_json::to_string(&rec)?;
        writeln!(self.writer, "{line}").map_err(|e| Error::io(&self.path, e))?;
        Ok(())
    }
}
