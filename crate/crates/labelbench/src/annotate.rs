//! Human accuracy scoring.
//!
//! Labels are shown with their topic keywords and scored 1-5 against a
//! fixed five-level rubric; 3 is the acceptance threshold. Sessions are
//! resumable and single-owner per run directory (lock file). Annotations
//! live in a UTF-8 tab-separated file.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::Topic;
use crate::error::{Error, Result};
use crate::metrics::{confidence_interval_95, Ci95};
use crate::prompt::{LabelRecord, PromptKind};

/// One level of the scoring rubric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RubricLevel {
    pub score: u8,
    pub name: &'static str,
    pub description: &'static str,
}

/// The built-in 1-5 accuracy rubric shown during sessions.
pub const RUBRIC: [RubricLevel; 5] = [
    RubricLevel {
        score: 1,
        name: "bad labelling",
        description: "Inadequate to identify the topic",
    },
    RubricLevel {
        score: 2,
        name: "insufficient labelling",
        description:
            "Globally refers to the topic but is too generic to provide a distinct categorization",
    },
    RubricLevel {
        score: 3,
        name: "acceptable labelling",
        description: "Indicative enough to identify the topic, but still lacking precision",
    },
    RubricLevel {
        score: 4,
        name: "good labelling",
        description: "Depicts the topic with significant precision",
    },
    RubricLevel {
        score: 5,
        name: "perfect labelling",
        description: "Very precisely describes the topics, outperforming labels with a score of 4",
    },
];

/// Scores at or above this are acceptable for use.
pub const ACCEPTANCE_THRESHOLD: f64 = 3.0;

/// One human judgment of one displayed label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub backend_id: String,
    pub prompt_kind: PromptKind,
    pub topic_id: u64,
    /// The normalized label that was shown.
    pub label: String,
    pub score: u8,
    pub annotator_id: String,
    pub timestamp: DateTime<Utc>,
    #[serde(default)]
    pub note: Option<String>,
}

impl Annotation {
    /// Identity for duplicate detection: one score per (cell, annotator).
    pub fn key(&self) -> (String, PromptKind, u64, String, String) {
        (
            self.backend_id.clone(),
            self.prompt_kind,
            self.topic_id,
            self.label.clone(),
            self.annotator_id.clone(),
        )
    }

    fn key_display(&self) -> String {
        format!(
            "{}/{}/topic{}/{:?} by {}",
            self.backend_id, self.prompt_kind, self.topic_id, self.label, self.annotator_id
        )
    }
}

/// Which cells a session walks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingSpec {
    /// One representative label per backend x prompt x topic: the modal
    /// normalized label across iterations (ties broken lexicographically).
    Modal,
    /// Every distinct normalized label of every backend x prompt x topic.
    All,
}

impl FromStr for SamplingSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "modal" => Ok(SamplingSpec::Modal),
            "all" => Ok(SamplingSpec::All),
            other => Err(Error::InvalidConfig(format!(
                "unknown sampling spec {other:?} (expected \"modal\" or \"all\")"
            ))),
        }
    }
}

/// A label queued for scoring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionCell {
    pub backend_id: String,
    pub prompt_kind: PromptKind,
    pub topic_id: u64,
    pub label: String,
    pub raw_label: String,
}

// normalized label -> (count, earliest iteration, raw label)
type LabelTally<'a> = BTreeMap<&'a str, (usize, u32, &'a str)>;

/// Derive the scoring queue from projected labels, deterministically.
pub fn session_cells(labels: &[LabelRecord], sampling: SamplingSpec) -> Vec<SessionCell> {
    let mut grouped: BTreeMap<(String, PromptKind, u64), LabelTally<'_>> = BTreeMap::new();
    for rec in labels {
        let group = grouped
            .entry((rec.backend_id.clone(), rec.prompt_kind, rec.topic_id))
            .or_default();
        let entry = group.entry(rec.normalized_label.as_str()).or_insert((
            0,
            rec.iteration,
            rec.raw_label.as_str(),
        ));
        entry.0 += 1;
        if rec.iteration < entry.1 {
            entry.1 = rec.iteration;
            entry.2 = rec.raw_label.as_str();
        }
    }
    let mut cells = Vec::new();
    for ((backend_id, prompt_kind, topic_id), by_label) in grouped {
        match sampling {
            SamplingSpec::All => {
                for (label, (_, _, raw)) in by_label {
                    cells.push(SessionCell {
                        backend_id: backend_id.clone(),
                        prompt_kind,
                        topic_id,
                        label: label.to_string(),
                        raw_label: raw.to_string(),
                    });
                }
            }
            SamplingSpec::Modal => {
                // highest count wins; ties go to the lexicographically
                // smallest label — BTreeMap order makes `>` do exactly that
                let mut best: Option<(&str, usize, &str)> = None;
                for (label, (count, _, raw)) in &by_label {
                    if best.map(|(_, c, _)| *count > c).unwrap_or(true) {
                        best = Some((label, *count, raw));
                    }
                }
                if let Some((label, _, raw)) = best {
                    cells.push(SessionCell {
                        backend_id: backend_id.clone(),
                        prompt_kind,
                        topic_id,
                        label: label.to_string(),
                        raw_label: raw.to_string(),
                    });
                }
            }
        }
    }
    cells
}

/// Lock guarding one interactive session per run directory.
pub struct SessionLock {
    path: PathBuf,
}

impl SessionLock {
    pub fn acquire(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join("annotate.lock");
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::SessionLocked(path))
            }
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for SessionLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn rubric_text() -> String {
    let mut s = String::from("Rubric:\n");
    for level in RUBRIC {
        s.push_str(&format!(
            "  {} {:<24} {}\n",
            level.score, level.name, level.description
        ));
    }
    s
}

/// Walk the queue, collecting scores. Cells already scored by this
/// annotator are skipped, so interrupted sessions resume where they left
/// off. Every accepted annotation is handed to `sink` immediately.
pub fn annotate_session(
    cells: &[SessionCell],
    topics: &[Topic],
    annotator_id: &str,
    existing: &[Annotation],
    input: &mut dyn BufRead,
    output: &mut dyn Write,
    sink: &mut dyn FnMut(&Annotation) -> Result<()>,
) -> Result<usize> {
    let keywords: BTreeMap<u64, String> = topics
        .iter()
        .map(|t| (t.id, t.keywords.join(", ")))
        .collect();
    let scored: std::collections::BTreeSet<_> = existing
        .iter()
        .filter(|a| a.annotator_id == annotator_id)
        .map(|a| {
            (
                a.backend_id.clone(),
                a.prompt_kind,
                a.topic_id,
                a.label.clone(),
            )
        })
        .collect();

    let io_err = |e: std::io::Error| Error::io("<session>", e);
    writeln!(output, "{}", rubric_text()).map_err(io_err)?;
    let todo: Vec<&SessionCell> = cells
        .iter()
        .filter(|c| {
            !scored.contains(&(
                c.backend_id.clone(),
                c.prompt_kind,
                c.topic_id,
                c.label.clone(),
            ))
        })
        .collect();
    writeln!(
        output,
        "{} of {} cells to score (annotator: {annotator_id})\n",
        todo.len(),
        cells.len()
    )
    .map_err(io_err)?;

    let mut count = 0usize;
    for cell in todo {
        let kw = keywords
            .get(&cell.topic_id)
            .map(String::as_str)
            .unwrap_or("<keywords unavailable>");
        writeln!(output, "Topic {} [{kw}]", cell.topic_id).map_err(io_err)?;
        writeln!(
            output,
            "{} / {} -> label: {:?}",
            cell.backend_id, cell.prompt_kind, cell.raw_label
        )
        .map_err(io_err)?;
        loop {
            write!(output, "score [1-5, s=skip, q=quit]: ").map_err(io_err)?;
            output.flush().map_err(io_err)?;
            let mut line = String::new();
            let n = input.read_line(&mut line).map_err(io_err)?;
            if n == 0 {
                // end of input: treat like quit
                writeln!(output, "\nsession ended ({count} scored)").map_err(io_err)?;
                return Ok(count);
            }
            match line.trim() {
                "q" => {
                    writeln!(output, "session ended ({count} scored)").map_err(io_err)?;
                    return Ok(count);
                }
                "s" => break,
                entry => match entry.parse::<u8>() {
                    Ok(score) if (1..=5).contains(&score) => {
                        let annotation = Annotation {
                            backend_id: cell.backend_id.clone(),
                            prompt_kind: cell.prompt_kind,
                            topic_id: cell.topic_id,
                            label: cell.label.clone(),
                            score,
                            annotator_id: annotator_id.to_string(),
                            timestamp: Utc::now(),
                            note: None,
                        };
                        sink(&annotation)?;
                        count += 1;
                        break;
                    }
                    _ => {
                        writeln!(output, "invalid entry {entry:?}; enter 1-5, s, or q")
                            .map_err(io_err)?;
                    }
                },
            }
        }
    }
    writeln!(output, "session complete ({count} scored)").map_err(io_err)?;
    Ok(count)
}

const TSV_HEADER: [&str; 8] = [
    "backend_id",
    "prompt_kind",
    "topic_id",
    "label",
    "score",
    "annotator_id",
    "timestamp",
    "note",
];

/// Append one annotation to a TSV file, writing the header first when the
/// file is new.
pub fn append_annotation(path: &Path, annotation: &Annotation) -> Result<()> {
    let fresh = !path.exists();
    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut writer = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .has_headers(false)
        .from_writer(file);
    if fresh {
        writer
            .write_record(TSV_HEADER)
            .map_err(|e| Error::MalformedAnnotation {
                line: 0,
                reason: e.to_string(),
            })?;
    }
    write_row(&mut writer, annotation)?;
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn write_row<W: std::io::Write>(writer: &mut csv::Writer<W>, a: &Annotation) -> Result<()> {
    writer
        .write_record([
            a.backend_id.as_str(),
            a.prompt_kind.as_str(),
            &a.topic_id.to_string(),
            a.label.as_str(),
            &a.score.to_string(),
            a.annotator_id.as_str(),
            &a.timestamp.to_rfc3339(),
            a.note.as_deref().unwrap_or(""),
        ])
        .map_err(|e| Error::MalformedAnnotation {
            line: 0,
            reason: e.to_string(),
        })
}

/// Write a complete annotation set (header plus one row per annotation).
pub fn export_annotations(path: &Path, annotations: &[Annotation]) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .from_path(path)
        .map_err(|e| Error::MalformedAnnotation {
            line: 0,
            reason: e.to_string(),
        })?;
    writer
        .write_record(TSV_HEADER)
        .map_err(|e| Error::MalformedAnnotation {
            line: 0,
            reason: e.to_string(),
        })?;
    for a in annotations {
        write_row(&mut writer, a)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Read an annotation file, rejecting malformed rows and duplicate
/// (cell, annotator) pairs.
pub fn import_annotations(path: &Path) -> Result<Vec<Annotation>> {
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "annotation file not found"),
        ));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::MalformedAnnotation {
            line: 0,
            reason: e.to_string(),
        })?;
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2; // 1-based, after the header
        let row = row.map_err(|e| Error::MalformedAnnotation {
            line,
            reason: e.to_string(),
        })?;
        if row.len() < 7 {
            return Err(Error::MalformedAnnotation {
                line,
                reason: format!("expected {} columns, got {}", TSV_HEADER.len(), row.len()),
            });
        }
        let field = |idx: usize| row.get(idx).unwrap_or("").to_string();
        let prompt_kind =
            PromptKind::from_str(&field(1)).map_err(|e| Error::MalformedAnnotation {
                line,
                reason: e.to_string(),
            })?;
        let topic_id = field(2)
            .parse::<u64>()
            .map_err(|_| Error::MalformedAnnotation {
                line,
                reason: format!("non-integer topic id {:?}", field(2)),
            })?;
        let score = field(4)
            .parse::<u8>()
            .map_err(|_| Error::MalformedAnnotation {
                line,
                reason: format!("non-integer score {:?}", field(4)),
            })?;
        if !(1..=5).contains(&score) {
            return Err(Error::MalformedAnnotation {
                line,
                reason: format!("score {score} out of range 1-5"),
            });
        }
        let timestamp = DateTime::parse_from_rfc3339(&field(6))
            .map_err(|e| Error::MalformedAnnotation {
                line,
                reason: format!("bad timestamp: {e}"),
            })?
            .with_timezone(&Utc);
        let note_text = field(7);
        let annotation = Annotation {
            backend_id: field(0),
            prompt_kind,
            topic_id,
            label: field(3),
            score,
            annotator_id: field(5),
            timestamp,
            note: if note_text.is_empty() {
                None
            } else {
                Some(note_text)
            },
        };
        if !seen.insert(annotation.key()) {
            return Err(Error::DuplicateAnnotation(annotation.key_display()));
        }
        out.push(annotation);
    }
    Ok(out)
}

/// Aggregated scores for one backend x prompt group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupScore {
    pub backend_id: String,
    pub prompt_kind: PromptKind,
    pub cells: usize,
    pub annotations: usize,
    pub mean: f64,
    pub ci95: Ci95,
    pub fraction_at_or_above: f64,
    pub below_threshold: bool,
    /// (annotator, annotation count, mean of their raw scores)
    pub per_annotator: Vec<(String, usize, f64)>,
}

impl fmt::Display for GroupScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{} mean {:.3} ({} cells)",
            self.backend_id, self.prompt_kind, self.mean, self.cells
        )
    }
}

// (topic, label) -> scores given to that cell
type CellScores = BTreeMap<(u64, String), Vec<f64>>;

/// Aggregate per backend x prompt. Cells with several annotators use the
/// mean of their scores; the acceptable fraction counts raw annotations.
pub fn aggregate_scores(annotations: &[Annotation], threshold: f64) -> Result<Vec<GroupScore>> {
    let mut groups: BTreeMap<(String, PromptKind), CellScores> = BTreeMap::new();
    let mut annotators: BTreeMap<(String, PromptKind), BTreeMap<String, Vec<f64>>> =
        BTreeMap::new();
    for a in annotations {
        let group = (a.backend_id.clone(), a.prompt_kind);
        groups
            .entry(group.clone())
            .or_default()
            .entry((a.topic_id, a.label.clone()))
            .or_default()
            .push(f64::from(a.score));
        annotators
            .entry(group)
            .or_default()
            .entry(a.annotator_id.clone())
            .or_default()
            .push(f64::from(a.score));
    }

    let mut out = Vec::new();
    for ((backend_id, prompt_kind), cells) in groups {
        let cell_scores: Vec<f64> = cells
            .values()
            .map(|scores| scores.iter().sum::<f64>() / scores.len() as f64)
            .collect();
        let all_scores: Vec<f64> = cells.values().flatten().copied().collect();
        let mean = cell_scores.iter().sum::<f64>() / cell_scores.len() as f64;
        let at_or_above = all_scores.iter().filter(|&&s| s >= threshold).count();
        let per_annotator = annotators
            .remove(&(backend_id.clone(), prompt_kind))
            .unwrap_or_default()
            .into_iter()
            .map(|(annotator, scores)| {
                let m = scores.iter().sum::<f64>() / scores.len() as f64;
                (annotator, scores.len(), m)
            })
            .collect();
        out.push(GroupScore {
            backend_id,
            prompt_kind,
            cells: cell_scores.len(),
            annotations: all_scores.len(),
            mean,
            ci95: confidence_interval_95(&cell_scores)?,
            fraction_at_or_above: at_or_above as f64 / all_scores.len() as f64,
            below_threshold: mean < threshold,
            per_annotator,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn annotation(
        backend: &str,
        kind: PromptKind,
        topic: u64,
        label: &str,
        score: u8,
        annotator: &str,
    ) -> Annotation {
        Annotation {
            backend_id: backend.to_string(),
            prompt_kind: kind,
            topic_id: topic,
            label: label.to_string(),
            score,
            annotator_id: annotator.to_string(),
            timestamp: "2024-08-01T12:00:00Z".parse().unwrap(),
            note: None,
        }
    }

    fn label_record(
        backend: &str,
        kind: PromptKind,
        iteration: u32,
        topic: u64,
        raw: &str,
    ) -> LabelRecord {
        LabelRecord {
            backend_id: backend.to_string(),
            prompt_kind: kind,
            iteration,
            topic_id: topic,
            raw_label: raw.to_string(),
            normalized_label: raw.to_lowercase(),
            word_count: raw.split_whitespace().count(),
            conformant: true,
            parse_fallback: false,
        }
    }

    #[test]
    fn rubric_has_five_levels_in_order() {
        assert_eq!(RUBRIC.len(), 5);
        for (i, level) in RUBRIC.iter().enumerate() {
            assert_eq!(level.score as usize, i + 1);
        }
        assert_eq!(RUBRIC[0].name, "bad labelling");
        assert_eq!(RUBRIC[4].name, "perfect labelling");
    }

    #[test]
    fn aggregate_all_threes() {
        let annotations = vec![
            annotation("m", PromptKind::Short, 1, "a", 3, "x"),
            annotation("m", PromptKind::Short, 2, "b", 3, "x"),
            annotation("m", PromptKind::Short, 3, "c", 3, "x"),
        ];
        let scores = aggregate_scores(&annotations, 3.0).unwrap();
        assert_eq!(scores.len(), 1);
        assert_eq!(scores[0].mean, 3.0);
        assert_eq!(scores[0].fraction_at_or_above, 1.0);
        assert!(!scores[0].below_threshold);
    }

    #[test]
    fn aggregate_split_scores() {
        let annotations = vec![
            annotation("m", PromptKind::Short, 1, "a", 1, "x"),
            annotation("m", PromptKind::Short, 2, "b", 5, "x"),
        ];
        let scores = aggregate_scores(&annotations, 3.0).unwrap();
        assert_eq!(scores[0].mean, 3.0);
        assert_eq!(scores[0].fraction_at_or_above, 0.5);
    }

    #[test]
    fn aggregate_flags_below_threshold() {
        let annotations: Vec<Annotation> = (1..=4)
            .map(|t| annotation("m", PromptKind::Short, t, "generic", 2, "x"))
            .collect();
        let scores = aggregate_scores(&annotations, 3.0).unwrap();
        assert_eq!(scores[0].mean, 2.0);
        assert!(scores[0].below_threshold);
    }

    #[test]
    fn multi_annotator_cells_average() {
        let annotations = vec![
            annotation("m", PromptKind::Long, 1, "soil fauna", 4, "ann-a"),
            annotation("m", PromptKind::Long, 1, "soil fauna", 2, "ann-b"),
        ];
        let scores = aggregate_scores(&annotations, 3.0).unwrap();
        assert_eq!(scores[0].cells, 1);
        assert_eq!(scores[0].annotations, 2);
        assert_eq!(scores[0].mean, 3.0);
        assert_eq!(scores[0].per_annotator.len(), 2);
    }

    #[test]
    fn aggregation_is_order_invariant() {
        let mut annotations = vec![
            annotation("m", PromptKind::Short, 1, "a", 1, "x"),
            annotation("m", PromptKind::Short, 2, "b", 4, "x"),
            annotation("m", PromptKind::Short, 3, "c", 5, "y"),
        ];
        let forward = aggregate_scores(&annotations, 3.0).unwrap();
        annotations.reverse();
        let backward = aggregate_scores(&annotations, 3.0).unwrap();
        assert_eq!(forward[0].mean, backward[0].mean);
        assert_eq!(
            forward[0].fraction_at_or_above,
            backward[0].fraction_at_or_above
        );
    }

    #[test]
    fn export_import_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("annotations.tsv");
        let mut original = vec![
            annotation("m", PromptKind::Short, 1, "soil", 3, "x"),
            annotation("m", PromptKind::Long, 1, "soil fauna", 5, "x"),
        ];
        original[1].note = Some("nice and precise".to_string());
        export_annotations(&path, &original).unwrap();
        let loaded = import_annotations(&path).unwrap();
        assert_eq!(loaded, original);
    }

    #[test]
    fn import_rejects_non_integer_score() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("annotations.tsv");
        fs::write(
            &path,
            "backend_id\tprompt_kind\ttopic_id\tlabel\tscore\tannotator_id\ttimestamp\tnote\n\
             m\tshort\t1\tsoil\tperfect\tx\t2024-08-01T12:00:00+00:00\t\n",
        )
        .unwrap();
        match import_annotations(&path) {
            Err(Error::MalformedAnnotation { line, reason }) => {
                assert_eq!(line, 2);
                assert!(reason.contains("non-integer score"));
            }
            other => panic!("expected MalformedAnnotation, got {other:?}"),
        }
    }

    #[test]
    fn import_rejects_out_of_range_score() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("annotations.tsv");
        fs::write(
            &path,
            "backend_id\tprompt_kind\ttopic_id\tlabel\tscore\tannotator_id\ttimestamp\tnote\n\
             m\tshort\t1\tsoil\t6\tx\t2024-08-01T12:00:00+00:00\t\n",
        )
        .unwrap();
        assert!(matches!(
            import_annotations(&path),
            Err(Error::MalformedAnnotation { .. })
        ));
    }

    #[test]
    fn import_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("annotations.tsv");
        let a = annotation("m", PromptKind::Short, 1, "soil", 3, "x");
        export_annotations(&path, &[a.clone(), a]).unwrap();
        assert!(matches!(
            import_annotations(&path),
            Err(Error::DuplicateAnnotation(_))
        ));
    }

    #[test]
    fn modal_sampling_picks_most_common_label() {
        let labels = vec![
            label_record("m", PromptKind::Short, 0, 1, "soil"),
            label_record("m", PromptKind::Short, 1, 1, "carbon"),
            label_record("m", PromptKind::Short, 2, 1, "soil"),
        ];
        let cells = session_cells(&labels, SamplingSpec::Modal);
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].label, "soil");
    }

    #[test]
    fn modal_sampling_breaks_ties_lexicographically() {
        let labels = vec![
            label_record("m", PromptKind::Short, 0, 1, "soil"),
            label_record("m", PromptKind::Short, 1, 1, "carbon"),
        ];
        let cells = session_cells(&labels, SamplingSpec::Modal);
        assert_eq!(cells[0].label, "carbon");
    }

    #[test]
    fn all_sampling_lists_every_distinct_label() {
        let labels = vec![
            label_record("m", PromptKind::Short, 0, 1, "soil"),
            label_record("m", PromptKind::Short, 1, 1, "carbon"),
            label_record("m", PromptKind::Short, 2, 1, "soil"),
        ];
        let cells = session_cells(&labels, SamplingSpec::All);
        assert_eq!(cells.len(), 2);
    }

    #[test]
    fn session_rejects_invalid_entry_and_reprompts() {
        let labels = vec![label_record("m", PromptKind::Short, 0, 32, "biology")];
        let cells = session_cells(&labels, SamplingSpec::Modal);
        let topics = vec![Topic::new(32, vec!["carbon".into(), "forests".into()])];
        let mut input = Cursor::new(b"6\n1\n".to_vec());
        let mut output = Vec::new();
        let mut collected = Vec::new();
        let n = annotate_session(
            &cells,
            &topics,
            "annotator-1",
            &[],
            &mut input,
            &mut output,
            &mut |a| {
                collected.push(a.clone());
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(n, 1);
        assert_eq!(collected.len(), 1);
        assert_eq!(collected[0].score, 1);
        let shown = String::from_utf8(output).unwrap();
        assert!(shown.contains("invalid entry"));
        assert!(shown.contains("bad labelling"));
        assert!(shown.contains("carbon, forests"));
    }

    #[test]
    fn session_resumes_past_scored_cells() {
        let labels = vec![
            label_record("m", PromptKind::Short, 0, 1, "soil"),
            label_record("m", PromptKind::Short, 0, 2, "carbon"),
        ];
        let cells = session_cells(&labels, SamplingSpec::Modal);
        let existing = vec![annotation("m", PromptKind::Short, 1, "soil", 3, "me")];
        let topics = vec![
            Topic::new(1, vec!["kw".into()]),
            Topic::new(2, vec!["kw2".into()]),
        ];
        let mut input = Cursor::new(b"4\n".to_vec());
        let mut output = Vec::new();
        let mut collected = Vec::new();
        let n = annotate_session(
            &cells,
            &topics,
            "me",
            &existing,
            &mut input,
            &mut output,
            &mut |a| {
                collected.push(a.clone());
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(n, 1);
        assert_eq!(collected[0].topic_id, 2);
    }

    #[test]
    fn session_lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let lock = SessionLock::acquire(dir.path()).unwrap();
        assert!(matches!(
            SessionLock::acquire(dir.path()),
            Err(Error::SessionLocked(_))
        ));
        drop(lock);
        assert!(SessionLock::acquire(dir.path()).is_ok());
    }

    #[test]
    fn quit_ends_session_early() {
        let labels = vec![
            label_record("m", PromptKind::Short, 0, 1, "soil"),
            label_record("m", PromptKind::Short, 0, 2, "carbon"),
        ];
        let cells = session_cells(&labels, SamplingSpec::Modal);
        let topics = vec![
            Topic::new(1, vec!["kw".into()]),
            Topic::new(2, vec!["kw2".into()]),
        ];
        let mut input = Cursor::new(b"2\nq\n".to_vec());
        let mut output = Vec::new();
        let mut collected = Vec::new();
        let n = annotate_session(
            &cells,
            &topics,
            "me",
            &[],
            &mut input,
            &mut output,
            &mut |a| {
                collected.push(a.clone());
                Ok(())
            },
        )
        .unwrap();
        assert_eq!(n, 1);
        assert_eq!(collected.len(), 1);
    }
}
