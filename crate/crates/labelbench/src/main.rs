//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 validation error (bad flags, config or input
//! files), 2 runtime failure. Diagnostics go to stderr; data goes to files
//! or stdout.

use std::io::{BufRead, BufReader, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Parser, Subcommand};

use labelbench::annotate::{
    aggregate_scores, annotate_session, append_annotation, import_annotations, session_cells,
    SamplingSpec, SessionLock, ACCEPTANCE_THRESHOLD,
};
use labelbench::config::{load_config, load_provider};
use labelbench::corpus::{load_topics, validate_topic_set};
use labelbench::embed::{Embedder, EmbeddingProviderSpec};
use labelbench::error::{Error, Result};
use labelbench::gateway::{run_cost_report, Gateway};
use labelbench::metrics::{
    distinct_label_stat, similarity_matrix, stability_stat, DistinctLabelStat, LabelView,
    SimilarityMatrix, StabilityStat,
};
use labelbench::report::{build_report, emit, MetricReport, ReportFormat};
use labelbench::runner::{resume_run, run_experiment, RunStore};

#[derive(Parser)]
#[command(
    name = "labelbench",
    version,
    about = "Label topic-model keyword sets with LLM backends and evaluate the results"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate a topic export file and report keyword-count warnings
    IngestCheck {
        /// Line-delimited topic file ({"id": .., "keywords": [..]})
        #[arg(long)]
        topics: PathBuf,
    },
    /// Execute the full backend x prompt x iteration x topic grid
    Run {
        /// Experiment config (TOML)
        #[arg(long)]
        config: PathBuf,
    },
    /// Execute only the missing or failed cells of an interrupted run
    Resume {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Show cell coverage for a run directory
    Status {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Print distinct-label, stability and similarity tables
    Metrics {
        #[arg(long)]
        run_dir: PathBuf,
        /// Override the embedding provider (TOML spec file)
        #[arg(long)]
        provider: Option<PathBuf>,
    },
    /// Score labels interactively against the 1-5 rubric
    Annotate {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        annotator: String,
        /// "modal" (one representative label per cell) or "all"
        #[arg(long, default_value = "modal")]
        sampling: String,
        /// Read scores from a file instead of the terminal
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Aggregate annotation scores per backend x prompt
    Scores {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Print the per-backend token and cost table
    Costs {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Emit the full report (figure-shaped tables plus costs)
    Report {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated subset of table_text,csv,json
        #[arg(long, default_value = "csv,json")]
        formats: String,
        /// Suppress the timestamp header line for byte-exact output
        #[arg(long)]
        no_header_timestamp: bool,
        #[arg(long)]
        provider: Option<PathBuf>,
    },
}

fn main() {
    // die quietly when a downstream pipe (head, less) closes stdout
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(
                e.kind(),
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion
            ) {
                print!("{e}");
                std::process::exit(0);
            }
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    if let Err(e) = dispatch(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(if e.is_validation() { 1 } else { 2 });
    }
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::IngestCheck { topics } => ingest_check(&topics),
        Cmd::Run { config } => {
            let snapshot = load_config(&config)?;
            let gateway = Gateway::new();
            let store = run_experiment(snapshot, &gateway)?;
            report_run_outcome(&store)
        }
        Cmd::Resume { run_dir } => {
            let gateway = Gateway::new();
            let store = resume_run(&run_dir, &gateway)?;
            report_run_outcome(&store)
        }
        Cmd::Status { run_dir } => status(&run_dir),
        Cmd::Metrics { run_dir, provider } => metrics(&run_dir, provider.as_deref()),
        Cmd::Annotate {
            run_dir,
            annotator,
            sampling,
            input,
        } => annotate(&run_dir, &annotator, &sampling, input.as_deref()),
        Cmd::Scores { run_dir } => scores(&run_dir),
        Cmd::Costs { run_dir } => costs(&run_dir),
        Cmd::Report {
            run_dir,
            out,
            formats,
            no_header_timestamp,
            provider,
        } => report(
            &run_dir,
            &out,
            &formats,
            !no_header_timestamp,
            provider.as_deref(),
        ),
    }
}

fn ingest_check(topics: &Path) -> Result<()> {
    let ts = load_topics(topics)?;
    let warnings = validate_topic_set(&ts);
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "ok: {} topics from {} ({} warnings)",
        ts.len(),
        topics.display(),
        warnings.len()
    );
    Ok(())
}

fn report_run_outcome(store: &RunStore) -> Result<()> {
    let coverage = store.coverage();
    if coverage.failed > 0 {
        eprintln!("{} cells failed; see failures.log", coverage.failed);
    }
    println!("run {}: {}", store.run_dir().display(), coverage);
    Ok(())
}

fn status(run_dir: &Path) -> Result<()> {
    let store = RunStore::open(run_dir)?;
    let coverage = store.coverage();
    println!("run {}: {}", run_dir.display(), coverage);
    let snapshot = store.snapshot();
    println!(
        "grid: {} backends x {} prompts x {} iterations x {} topics",
        snapshot.config.backends.len(),
        snapshot.config.prompt_kinds.len(),
        snapshot.config.iterations,
        snapshot.topics.len()
    );
    if !store.failures().is_empty() {
        println!("failures recorded: {}", store.failures().len());
    }
    Ok(())
}

struct MetricSections {
    distinct: Vec<DistinctLabelStat>,
    stability: Vec<StabilityStat>,
    similarity: Option<SimilarityMatrix>,
}

fn compute_sections(store: &RunStore, provider_override: Option<&Path>) -> Result<MetricSections> {
    let projected = store.labels();
    for (cell, reason) in &projected.unparseable {
        eprintln!("warning: {cell}: {reason}");
    }
    let view = LabelView::from_records(&projected.labels);
    let mut distinct = Vec::new();
    let mut stability = Vec::new();
    for key in view.group_keys() {
        distinct.push(distinct_label_stat(&view, &key)?);
        stability.push(stability_stat(&view, &key)?);
    }
    let provider: EmbeddingProviderSpec = match provider_override {
        Some(path) => load_provider(path)?,
        None => store.snapshot().provider.clone(),
    };
    let similarity = if view.is_empty() {
        None
    } else {
        let embedder = Embedder::new(provider)?;
        Some(similarity_matrix(&view, &embedder)?)
    };
    Ok(MetricSections {
        distinct,
        stability,
        similarity,
    })
}

fn load_run_annotations(store: &RunStore) -> Result<Vec<labelbench::annotate::Annotation>> {
    let path = store.annotations_path();
    if path.exists() {
        import_annotations(&path)
    } else {
        Ok(Vec::new())
    }
}

fn assemble_report(store: &RunStore, provider_override: Option<&Path>) -> Result<MetricReport> {
    let sections = compute_sections(store, provider_override)?;
    let annotations = load_run_annotations(store)?;
    let qualitative = if annotations.is_empty() {
        Vec::new()
    } else {
        aggregate_scores(&annotations, ACCEPTANCE_THRESHOLD)?
    };
    let cost_rows = run_cost_report(store.completions(), &store.snapshot().config.backends)?;
    let run_id = store
        .run_dir()
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| store.run_dir().display().to_string());
    Ok(build_report(
        &run_id,
        store.coverage(),
        sections.distinct,
        sections.stability,
        sections.similarity,
        qualitative,
        cost_rows,
    ))
}

fn metrics(run_dir: &Path, provider_override: Option<&Path>) -> Result<()> {
    let store = RunStore::open(run_dir)?;
    let report = assemble_report(&store, provider_override)?;
    println!("coverage: {}", report.coverage);
    print!("{}", report.distinct_text());
    print!("{}", report.stability_text());
    print!("{}", report.similarity_text());
    Ok(())
}

fn annotate(run_dir: &Path, annotator: &str, sampling: &str, input: Option<&Path>) -> Result<()> {
    let sampling = SamplingSpec::from_str(sampling)?;
    let store = RunStore::open(run_dir)?;
    if input.is_none() && !std::io::stdin().is_terminal() {
        return Err(Error::NotInteractive);
    }
    let _lock = SessionLock::acquire(run_dir)?;
    let projected = store.labels();
    let cells = session_cells(&projected.labels, sampling);
    let existing = load_run_annotations(&store)?;
    let annotations_path = store.annotations_path();
    let mut sink = |a: &labelbench::annotate::Annotation| append_annotation(&annotations_path, a);

    let stdout = std::io::stdout();
    let mut output = stdout.lock();
    let scored = match input {
        Some(path) => {
            let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
            let mut reader = BufReader::new(file);
            run_session(
                &cells,
                &store,
                annotator,
                &existing,
                &mut reader,
                &mut output,
                &mut sink,
            )?
        }
        None => {
            let stdin = std::io::stdin();
            let mut reader = stdin.lock();
            run_session(
                &cells,
                &store,
                annotator,
                &existing,
                &mut reader,
                &mut output,
                &mut sink,
            )?
        }
    };
    eprintln!(
        "{scored} annotations written to {}",
        annotations_path.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_session(
    cells: &[labelbench::annotate::SessionCell],
    store: &RunStore,
    annotator: &str,
    existing: &[labelbench::annotate::Annotation],
    input: &mut dyn BufRead,
    output: &mut dyn Write,
    sink: &mut dyn FnMut(&labelbench::annotate::Annotation) -> Result<()>,
) -> Result<usize> {
    annotate_session(
        cells,
        &store.snapshot().topics,
        annotator,
        existing,
        input,
        output,
        sink,
    )
}

fn scores(run_dir: &Path) -> Result<()> {
    let store = RunStore::open(run_dir)?;
    let annotations = load_run_annotations(&store)?;
    if annotations.is_empty() {
        println!("no annotations in {}", store.annotations_path().display());
        return Ok(());
    }
    warn_unresolved(&store, &annotations);
    let groups = aggregate_scores(&annotations, ACCEPTANCE_THRESHOLD)?;
    let report = build_report(
        "scores",
        store.coverage(),
        Vec::new(),
        Vec::new(),
        None,
        groups.clone(),
        Vec::new(),
    );
    print!("{}", report.qualitative_text());
    for group in &groups {
        for (annotator, count, mean) in &group.per_annotator {
            println!(
                "    {}:{} by {annotator}: {count} annotations, mean {mean:.3}",
                group.backend_id, group.prompt_kind
            );
        }
    }
    Ok(())
}

fn warn_unresolved(store: &RunStore, annotations: &[labelbench::annotate::Annotation]) {
    let labels = store.labels().labels;
    let known: std::collections::BTreeSet<(String, labelbench::prompt::PromptKind, u64, String)> =
        labels
            .iter()
            .map(|l| {
                (
                    l.backend_id.clone(),
                    l.prompt_kind,
                    l.topic_id,
                    l.normalized_label.clone(),
                )
            })
            .collect();
    for a in annotations {
        let key = (
            a.backend_id.clone(),
            a.prompt_kind,
            a.topic_id,
            a.label.clone(),
        );
        if !known.contains(&key) {
            eprintln!(
                "warning: annotation for {}/{}/topic{} label {:?} does not match any current label",
                a.backend_id, a.prompt_kind, a.topic_id, a.label
            );
        }
    }
}

fn costs(run_dir: &Path) -> Result<()> {
    let store = RunStore::open(run_dir)?;
    let rows = run_cost_report(store.completions(), &store.snapshot().config.backends)?;
    let report = build_report(
        "costs",
        store.coverage(),
        Vec::new(),
        Vec::new(),
        None,
        Vec::new(),
        rows,
    );
    print!("{}", report.costs_text());
    Ok(())
}

fn report(
    run_dir: &Path,
    out: &Path,
    formats: &str,
    include_timestamp: bool,
    provider_override: Option<&Path>,
) -> Result<()> {
    let formats = formats
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(ReportFormat::from_str)
        .collect::<Result<Vec<_>>>()?;
    let store = RunStore::open(run_dir)?;
    let metric_report = assemble_report(&store, provider_override)?;
    let written = emit(&metric_report, out, &formats, include_timestamp)?;
    for path in &written {
        eprintln!("wrote {}", path.display());
    }
    println!(
        "report for {} written to {} ({} files)",
        run_dir.display(),
        out.display(),
        written.len()
    );
    Ok(())
}
