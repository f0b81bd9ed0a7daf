//! Consolidated report: distinct-label stats, stability stats, the
//! similarity matrix, qualitative aggregates and the cost table, emitted
//! as plot-ready CSV, JSON and plain-text tables.
//!
//! Section bodies contain no timestamps, so regenerating a report from the
//! same store is byte-identical; the optional header line carries the only
//! timestamp and can be suppressed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotate::GroupScore;
use crate::error::{Error, Result};
use crate::gateway::CostRow;
use crate::metrics::{DistinctLabelStat, SimilarityMatrix, StabilityStat};
use crate::runner::Coverage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    TableText,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table_text" | "text" | "txt" => Ok(ReportFormat::TableText),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::InvalidConfig(format!(
                "unknown report format {other:?} (expected table_text, csv or json)"
            ))),
        }
    }
}

impl ReportFormat {
    fn extension(self) -> &'static str {
        match self {
            ReportFormat::TableText => "txt",
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

/// Everything the run produced, in emit-ready form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub run_id: String,
    pub coverage: Coverage,
    pub distinct: Vec<DistinctLabelStat>,
    pub stability: Vec<StabilityStat>,
    pub similarity: Option<SimilarityMatrix>,
    pub qualitative: Vec<GroupScore>,
    /// Why a section is empty, when it is.
    pub notes: Vec<String>,
    pub costs: Vec<CostRow>,
}

/// Assemble the report. Missing inputs (no annotations yet, no similarity
/// provider) degrade to explicitly empty sections with a note.
pub fn build_report(
    run_id: &str,
    coverage: Coverage,
    distinct: Vec<DistinctLabelStat>,
    stability: Vec<StabilityStat>,
    similarity: Option<SimilarityMatrix>,
    qualitative: Vec<GroupScore>,
    costs: Vec<CostRow>,
) -> MetricReport {
    let mut notes = Vec::new();
    if similarity.is_none() {
        notes.push("similarity: no embedding provider available".to_string());
    }
    if qualitative.is_empty() {
        notes.push("qualitative: no annotations".to_string());
    }
    if coverage.failed > 0 || coverage.missing() > 0 {
        notes.push(format!(
            "coverage gaps: {} failed, {} missing cells are excluded from statistics",
            coverage.failed,
            coverage.missing()
        ));
    }
    MetricReport {
        run_id: run_id.to_string(),
        coverage,
        distinct,
        stability,
        similarity,
        qualitative,
        notes,
        costs,
    }
}

impl MetricReport {
    /// Plain-text rendering of the distinct-labels section.
    pub fn distinct_text(&self) -> String {
        fig1a_text(self)
    }

    pub fn stability_text(&self) -> String {
        fig1b_text(self)
    }

    pub fn similarity_text(&self) -> String {
        fig1c_text(self)
    }

    pub fn qualitative_text(&self) -> String {
        fig1d_text(self)
    }

    pub fn costs_text(&self) -> String {
        costs_text(self)
    }
}

const SECTIONS: [&str; 5] = ["fig1a", "fig1b", "fig1c", "fig1d", "costs"];

/// Write one file per section per requested format into `out_dir`.
/// Returns the paths written.
pub fn emit(
    report: &MetricReport,
    out_dir: &Path,
    formats: &[ReportFormat],
    include_timestamp: bool,
) -> Result<Vec<PathBuf>> {
    if formats.is_empty() {
        return Err(Error::NoFormats);
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let header = |fmt: ReportFormat| -> String {
        if include_timestamp && fmt != ReportFormat::Json {
            format!(
                "# run {} generated {}\n",
                report.run_id,
                chrono::Utc::now().to_rfc3339()
            )
        } else {
            String::new()
        }
    };
    let mut written = Vec::new();
    for &fmt in formats {
        for section in SECTIONS {
            let body = match (section, fmt) {
                ("fig1a", ReportFormat::Csv) => fig1a_csv(report),
                ("fig1a", ReportFormat::TableText) => fig1a_text(report),
                ("fig1a", ReportFormat::Json) => serde_json::to_string_pretty(&report.distinct)?,
                ("fig1b", ReportFormat::Csv) => fig1b_csv(report),
                ("fig1b", ReportFormat::TableText) => fig1b_text(report),
                ("fig1b", ReportFormat::Json) => serde_json::to_string_pretty(&report.stability)?,
                ("fig1c", ReportFormat::Csv) => fig1c_csv(report),
                ("fig1c", ReportFormat::TableText) => fig1c_text(report),
                ("fig1c", ReportFormat::Json) => serde_json::to_string_pretty(&report.similarity)?,
                ("fig1d", ReportFormat::Csv) => fig1d_csv(report),
                ("fig1d", ReportFormat::TableText) => fig1d_text(report),
                ("fig1d", ReportFormat::Json) => serde_json::to_string_pretty(&report.qualitative)?,
                ("costs", ReportFormat::Csv) => costs_csv(report),
                ("costs", ReportFormat::TableText) => costs_text(report),
                ("costs", ReportFormat::Json) => serde_json::to_string_pretty(&report.costs)?,
                _ => unreachable!(),
            };
            let path = out_dir.join(format!("{section}.{}", fmt.extension()));
            let mut content = header(fmt);
            content.push_str(&body);
            if !content.ends_with('\n') {
                content.push('\n');
            }
            fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    // machine-readable coverage and notes ride along with every emit
    let summary = serde_json::json!({
        "run_id": report.run_id,
        "coverage": report.coverage,
        "notes": report.notes,
    });
    let path = out_dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)?).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

fn fig1a_csv(report: &MetricReport) -> String {
    let mut s = String::from(
        "backend_id,prompt_kind,iterations,mean_distinct,ci95_lo,ci95_hi,pooled_distinct\n",
    );
    for stat in &report.distinct {
        let _ = writeln!(
            s,
            "{},{},{},{:.6},{:.6},{:.6},{}",
            stat.backend_id,
            stat.prompt_kind,
            stat.per_iteration_counts.len(),
            stat.mean,
            stat.ci95.lo,
            stat.ci95.hi,
            stat.pooled_distinct
        );
    }
    s
}

fn fig1a_text(report: &MetricReport) -> String {
    let mut s = String::from("Distinct labels per iteration (mean, 95% CI, pooled unique)\n");
    if report.distinct.is_empty() {
        s.push_str("  (no label records)\n");
    }
    for stat in &report.distinct {
        let _ = writeln!(
            s,
            "  {:<24} {:>8.3}  [{:.3}, {:.3}]  pooled {}",
            format!("{}:{}", stat.backend_id, stat.prompt_kind),
            stat.mean,
            stat.ci95.lo,
            stat.ci95.hi,
            stat.pooled_distinct
        );
    }
    s
}

fn fig1b_csv(report: &MetricReport) -> String {
    let mut s = String::from("backend_id,prompt_kind,topics,mean_stability,ci95_lo,ci95_hi\n");
    for stat in &report.stability {
        let _ = writeln!(
            s,
            "{},{},{},{:.6},{:.6},{:.6}",
            stat.backend_id,
            stat.prompt_kind,
            stat.per_topic_counts.len(),
            stat.mean,
            stat.ci95.lo,
            stat.ci95.hi
        );
    }
    s
}

fn fig1b_text(report: &MetricReport) -> String {
    let mut s = String::from("Distinct labels per topic across iterations (mean, 95% CI)\n");
    if report.stability.is_empty() {
        s.push_str("  (no label records)\n");
    }
    for stat in &report.stability {
        let _ = writeln!(
            s,
            "  {:<24} {:>8.3}  [{:.3}, {:.3}]  over {} topics",
            format!("{}:{}", stat.backend_id, stat.prompt_kind),
            stat.mean,
            stat.ci95.lo,
            stat.ci95.hi,
            stat.per_topic_counts.len()
        );
    }
    s
}

fn fig1c_csv(report: &MetricReport) -> String {
    let Some(matrix) = &report.similarity else {
        return "group\n".to_string();
    };
    let mut s = String::from("group");
    for key in &matrix.axis {
        let _ = write!(s, ",{key}");
    }
    s.push('\n');
    for (i, key) in matrix.axis.iter().enumerate() {
        let _ = write!(s, "{key}");
        for j in 0..matrix.axis.len() {
            match matrix.values[i][j] {
                Some(v) => {
                    let _ = write!(s, ",{v:.6}");
                }
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}

fn fig1c_text(report: &MetricReport) -> String {
    let Some(matrix) = &report.similarity else {
        return "Similarity matrix\n  (not computed)\n".to_string();
    };
    let mut s = String::from("Mean cosine similarity between groups\n");
    let width = matrix
        .axis
        .iter()
        .map(|k| k.to_string().len())
        .max()
        .unwrap_or(8)
        .max(8);
    let _ = write!(s, "  {:<width$}", "");
    for key in &matrix.axis {
        let _ = write!(s, " {:>width$}", key.to_string());
    }
    s.push('\n');
    for (i, key) in matrix.axis.iter().enumerate() {
        let _ = write!(s, "  {:<width$}", key.to_string());
        for j in 0..matrix.axis.len() {
            match matrix.values[i][j] {
                Some(v) => {
                    let _ = write!(s, " {v:>width$.4}");
                }
                None => {
                    let _ = write!(s, " {:>width$}", "-");
                }
            }
        }
        s.push('\n');
    }
    s
}

fn fig1d_csv(report: &MetricReport) -> String {
    let mut s = String::from(
        "backend_id,prompt_kind,cells,annotations,mean_score,ci95_lo,ci95_hi,fraction_acceptable,below_threshold\n",
    );
    for score in &report.qualitative {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6},{}",
            score.backend_id,
            score.prompt_kind,
            score.cells,
            score.annotations,
            score.mean,
            score.ci95.lo,
            score.ci95.hi,
            score.fraction_at_or_above,
            score.below_threshold
        );
    }
    s
}

fn fig1d_text(report: &MetricReport) -> String {
    let mut s = String::from("Qualitative accuracy (1-5 rubric, 3 = acceptable)\n");
    if report.qualitative.is_empty() {
        s.push_str("  (no annotations)\n");
    }
    for score in &report.qualitative {
        let flag = if score.below_threshold {
            "  BELOW ACCEPTANCE THRESHOLD"
        } else {
            ""
        };
        let _ = writeln!(
            s,
            "  {:<24} {:>6.3}  [{:.3}, {:.3}]  >=3: {:.0}%{flag}",
            format!("{}:{}", score.backend_id, score.prompt_kind),
            score.mean,
            score.ci95.lo,
            score.ci95.hi,
            score.fraction_at_or_above * 100.0
        );
    }
    s
}

fn costs_csv(report: &MetricReport) -> String {
    let mut s = String::from(
        "backend_id,kind,records,input_tokens,output_tokens,tokens_estimated,cost_usd,cost_display\n",
    );
    for row in &report.costs {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{:.4},{}",
            row.backend_id,
            serde_json::to_value(row.kind)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default(),
            row.records,
            row.input_tokens,
            row.output_tokens,
            row.tokens_estimated,
            row.usd.rounded4(),
            row.display_cost()
        );
    }
    s
}

fn costs_text(report: &MetricReport) -> String {
    let mut s = String::from("Costs per backend\n");
    if report.costs.is_empty() {
        s.push_str("  (no completions)\n");
    }
    for row in &report.costs {
        let estimated = if row.tokens_estimated {
            " (token counts estimated)"
        } else {
            ""
        };
        let _ = writeln!(
            s,
            "  {:<16} {:>10} in / {:>8} out tokens -> {}{estimated}",
            row.backend_id,
            row.input_tokens,
            row.output_tokens,
            row.display_cost()
        );
    }
    s
}
