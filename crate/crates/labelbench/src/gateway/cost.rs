//! Token cost metering.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{BackendKind, BackendSpec, CompletionRecord};

/// US dollar amount. The exact value is kept; displays round to 4 decimals.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Usd(pub f64);

impl Usd {
    pub fn rounded4(self) -> f64 {
        (self.0 * 10_000.0).round() / 10_000.0
    }
}

impl fmt::Display for Usd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${:.4}", self.rounded4())
    }
}

/// Linear per-token pricing: tokens x price-per-million / 1e6.
pub fn estimate_cost(input_tokens: u64, output_tokens: u64, backend: &BackendSpec) -> Usd {
    Usd(input_tokens as f64 * backend.price_input_per_1m / 1e6
        + output_tokens as f64 * backend.price_output_per_1m / 1e6)
}

/// One row of the per-backend cost table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostRow {
    pub backend_id: String,
    pub kind: BackendKind,
    pub records: usize,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub tokens_estimated: bool,
    pub usd: Usd,
    pub free: bool,
}

impl CostRow {
    /// "Free" for mock/local backends, otherwise the dollar amount.
    pub fn display_cost(&self) -> String {
        if self.free {
            "Free".to_string()
        } else {
            self.usd.to_string()
        }
    }
}

/// Sum tokens and dollars per backend. Mock and local-command backends are
/// reported as free regardless of configured prices.
pub fn run_cost_report(
    records: &[CompletionRecord],
    backends: &[BackendSpec],
) -> Result<Vec<CostRow>> {
    let by_id: BTreeMap<&str, &BackendSpec> = backends.iter().map(|b| (b.id.as_str(), b)).collect();
    let mut rows: BTreeMap<&str, CostRow> = BTreeMap::new();
    for rec in records {
        let backend = by_id
            .get(rec.backend_id.as_str())
            .ok_or_else(|| Error::UnknownBackend(rec.backend_id.clone()))?;
        let row = rows.entry(backend.id.as_str()).or_insert_with(|| CostRow {
            backend_id: backend.id.clone(),
            kind: backend.kind,
            records: 0,
            input_tokens: 0,
            output_tokens: 0,
            tokens_estimated: false,
            usd: Usd(0.0),
            free: !matches!(backend.kind, BackendKind::HttpChat),
        });
        row.records += 1;
        row.input_tokens += rec.input_tokens;
        row.output_tokens += rec.output_tokens;
        row.tokens_estimated |= rec.estimated_tokens;
    }
    let mut out: Vec<CostRow> = rows.into_values().collect();
    for row in &mut out {
        if !row.free {
            let backend = by_id[row.backend_id.as_str()];
            row.usd = estimate_cost(row.input_tokens, row.output_tokens, backend);
        }
    }
    Ok(out)
}
