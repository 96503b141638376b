use std::fmt::Display;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use editaudit::dataset::Dataset;
use editaudit::filter::FilterSpec;
use editaudit::fixture::{generate, FixtureConfig};
use editaudit::focus::{FocusBucket, FocusPolicy, DEFAULT_THRESHOLD};
use editaudit::ingest::{
    build_dataset, parse_edits, parse_predictions, IngestOptions, ParseOptions, ParseReport, DEFAULT_REVERT_RADIUS,
    DEFAULT_REVERT_WINDOW,
};
use editaudit::query::population;
use editaudit::report::{comparison, render_comparison, render_summary, summary, LabelScope, ReportError};
use editaudit::stats::DEFAULT_ALPHA;
use editaudit::store::replay;
use editaudit_service::ServiceConfig;

#[derive(Parser)]
#[command(name = "audit", version, about = "Audit an edit-quality model against community revert behavior")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a dataset from edit and prediction TSV files
    Ingest {
        #[arg(long)]
        edits: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Revert observation window in seconds
        #[arg(long, default_value_t = DEFAULT_REVERT_WINDOW)]
        window: u64,
        /// How many revisions back an identity revert may reach
        #[arg(long, default_value_t = DEFAULT_REVERT_RADIUS)]
        radius: usize,
        /// Score threshold used for the bucket counts printed at the end
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Fail on the first malformed row instead of dropping it
        #[arg(long)]
        strict: bool,
    },
    /// Generate a synthetic corpus with planted structure and a ground-truth sidecar
    Fixture {
        #[arg(long)]
        edits: usize,
        #[arg(long)]
        pages: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the HTTP service
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print an audit summary (or a two-group comparison) from stored labels
    Report {
        #[arg(long)]
        dataset: PathBuf,
        /// Annotation store directory
        #[arg(long)]
        annotations: PathBuf,
        /// FilterSpec as JSON (or its URL-safe base64 form)
        #[arg(long)]
        filter: String,
        #[arg(long)]
        bucket: String,
        #[arg(long)]
        compare_filter: Option<String>,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Count only this auditor's labels instead of the latest label per revision
        #[arg(long)]
        auditor: Option<String>,
    },
}

enum Failure {
    /// Bad invocation or unusable input: exit 2.
    Usage(String),
    /// The command started but could not finish: exit 1.
    Runtime(String),
}

fn usage(msg: impl Display) -> Failure {
    Failure::Usage(msg.to_string())
}

fn runtime(msg: impl Display) -> Failure {
    Failure::Runtime(msg.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest { edits, predictions, out, window, radius, threshold, strict } => {
            ingest(&edits, &predictions, &out, IngestOptions { window, radius }, threshold, strict)
        }
        Command::Fixture { edits, pages, seed, out_dir } => fixture(edits, pages, seed, &out_dir),
        Command::Serve { config } => serve(&config),
        Command::Report { dataset, annotations, filter, bucket, compare_filter, alpha, threshold, auditor } => {
            report(&dataset, &annotations, &filter, &bucket, compare_filter.as_deref(), alpha, threshold, auditor)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn open_input(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn require_exists(path: &Path) -> Result<(), Failure> {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(format!("{}: no such file or directory", path.display())))
    }
}

fn check_threshold(t: f64) -> Result<(), Failure> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(usage(format!("--threshold must lie in [0, 1], got {t}")))
    }
}

fn print_parse(what: &str, r: &ParseReport) {
    println!("{what}: {} rows, {} accepted, {} dropped", r.rows, r.accepted, r.total_dropped());
    for (reason, n) in &r.dropped {
        println!("  dropped {}: {n}", serde_json::to_value(reason).map(|v| v.as_str().unwrap_or_default().to_owned()).unwrap_or_default());
    }
}

fn ingest(edits: &Path, predictions: &Path, out: &Path, opts: IngestOptions, threshold: f64, strict: bool) -> Result<(), Failure> {
    check_threshold(threshold)?;
    let parse = ParseOptions { strict };
    let edits_in = open_input(edits)?;
    let preds_in = open_input(predictions)?;
    let (edits, edit_report) = parse_edits(edits_in, parse).map_err(|e| runtime(format!("{}: {e}", edits.display())))?;
    let (preds, pred_report) = parse_predictions(preds_in, parse).map_err(|e| runtime(format!("{}: {e}", predictions.display())))?;
    print_parse("Edits", &edit_report);
    print_parse("Predictions", &pred_report);

    let (dataset, report) = build_dataset(edits, preds, opts).map_err(runtime)?;
    let j = &report.join;
    println!(
        "Join: {} edits, {} predictions -> {} records ({} edits without prediction, {} predictions without edit)",
        j.edits, j.predictions, j.records, j.edits_unmatched, j.predictions_unmatched
    );
    println!(
        "Reverts (window {} s, radius {}): {} reverted across {} pages, {} self-reverts",
        opts.window, opts.radius, report.reverted, report.pages, report.self_reverts
    );
    println!("Censored: {} records within {} s of the last timestamp", report.censored, opts.window);

    let policy = FocusPolicy { threshold, ..FocusPolicy::default() };
    let pop = population(&dataset, &FilterSpec::all(), &policy);
    println!("Buckets at threshold {threshold}:");
    for b in FocusBucket::ALL {
        println!("  {:<20} {}", b.name(), pop.counts.get(b));
    }
    println!("  {:<20} {}", "censored, excluded", pop.censored_excluded);
    println!("  {:<20} {}", "total", pop.counts.total());

    dataset.save(out).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
    println!("Wrote {}", out.display());
    Ok(())
}

fn fixture(edits: usize, pages: usize, seed: u64, out_dir: &Path) -> Result<(), Failure> {
    if pages == 0 {
        return Err(usage("--pages must be at least 1"));
    }
    let fx = generate(&FixtureConfig { edits, pages, seed, ..FixtureConfig::default() });
    fx.write_to_dir(out_dir).map_err(|e| runtime(format!("{}: {e}", out_dir.display())))?;
    let gt = &fx.ground_truth;
    println!("Generated {} edits on {} pages ({} distinct texts), seed {seed}", fx.edits.len(), pages, fx.texts.len());
    println!("Model errors: {} of {}", gt.model_errors, gt.edits);
    for sub in &gt.subpopulations {
        let cells: Vec<String> = FocusBucket::ALL
            .iter()
            .map(|b| {
                let c = &sub.cells[b];
                format!("{} {}/{}", b.name(), c.n_errors, c.n)
            })
            .collect();
        println!("  {:<12} {}", sub.name, cells.join(", "));
    }
    println!("Wrote {}", out_dir.display());
    Ok(())
}

fn serve(config: &Path) -> Result<(), Failure> {
    require_exists(config)?;
    let config = ServiceConfig::load(config).map_err(usage)?;
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    let rt = tokio::runtime::Runtime::new().map_err(runtime)?;
    rt.block_on(editaudit_service::serve(config)).map_err(runtime)
}

#[allow(clippy::too_many_arguments)]
fn report(
    dataset: &Path,
    annotations: &Path,
    filter: &str,
    bucket: &str,
    compare_filter: Option<&str>,
    alpha: f64,
    threshold: f64,
    auditor: Option<String>,
) -> Result<(), Failure> {
    check_threshold(threshold)?;
    let filter = FilterSpec::decode(filter).map_err(|e| usage(format!("--filter: {e}")))?;
    let other = compare_filter
        .map(|f| FilterSpec::decode(f).map_err(|e| usage(format!("--compare-filter: {e}"))))
        .transpose()?;
    let bucket: FocusBucket = bucket.parse().map_err(|e| usage(format!("--bucket: {e}")))?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(usage(format!("--alpha must lie in (0, 1), got {alpha}")));
    }
    require_exists(dataset)?;
    require_exists(annotations)?;

    let dataset = Dataset::load(dataset).map_err(runtime)?;
    let snapshot = replay(annotations).map_err(runtime)?;
    let policy = FocusPolicy { threshold, ..FocusPolicy::default() };
    let scope = match auditor {
        Some(id) => LabelScope::Auditor(id),
        None => LabelScope::LatestPerRevision,
    };
    let fail = |e: ReportError| runtime(e);

    let (text, json) = match other {
        None => {
            let s = summary(&dataset, &snapshot, &filter, bucket, &policy, alpha, &scope).map_err(fail)?;
            (render_summary(&s), serde_json::to_string(&s))
        }
        Some(b) => {
            let c = comparison(&dataset, &snapshot, &filter, &b, bucket, &policy, alpha, &scope).map_err(fail)?;
            (render_comparison(&c), serde_json::to_string(&c))
        }
    };
    print!("{text}");
    println!("JSON:");
    println!("{}", json.map_err(runtime)?);
    Ok(())
}
