//! Batch front end: synth -> extract -> evaluate / ablation.
//!
//! Stages communicate through files in the output directory (`features.csv`,
//! `report.csv`, `report.json`, `selection.json`, `manifest.json`) so
//! intermediate results can be audited or fed to external tools. Exit codes:
//! 0 success, 2 input error, 3 protocol/split error, 4 internal error.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ecg_emotion::dsp;
use ecg_emotion::eval::{
    self, make_split, prepare_features, score_models, AblationReport, EvaluationReport,
    ExperimentOptions, ModelOutcome, Protocol,
};
use ecg_emotion::features::{self, FeatureTable, WelchParams, FEATURE_NAMES};
use ecg_emotion::ingest::{self, IngestSchema};
use ecg_emotion::selection::SelectionMode;
use ecg_emotion::synth::{write_dataset_csv, SynthDatasetSpec};
use ecg_emotion::Error as LibError;

use manifest::{ManifestBuilder, OutputLock};

/// Print to stdout, ignoring a closed pipe (e.g. `... | head`).
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(
    name = "ecg-emotion",
    version,
    about = "ECG-only binary emotion classification pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset of per-recording CSV files.
    Synth(SynthArgs),
    /// Read raw recordings, condition them, and write the feature matrix.
    Extract(ExtractArgs),
    /// Train and score models for one protocol and selection mode.
    Evaluate(EvaluateArgs),
    /// Compare selection modes (no FS / hybrid / k-best) on a shared split.
    Ablation(AblationArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Directory that receives the generated CSV files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 12)]
    subjects: usize,
    #[arg(long, default_value_t = 12)]
    epochs_per_group: usize,
    #[arg(long, default_value_t = 72.0)]
    base_bpm: f64,
    #[arg(long, default_value_t = 10.0)]
    class_gap_bpm: f64,
    #[arg(long, default_value_t = 15.0)]
    subject_sigma_bpm: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExtractArgs {
    /// Directory of raw recording CSV files.
    #[arg(long)]
    data_dir: PathBuf,
    /// JSON schema describing the CSV layout; defaults documented in the README.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Epoch length in seconds.
    #[arg(long, default_value_t = dsp::DEFAULT_EPOCH_SECONDS)]
    epoch_seconds: f64,
    /// Output directory for features.csv and manifest.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Feature CSV produced by `extract`; defaults to `<out>/features.csv`.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    protocol: Protocol,
    /// Feature-selection mode.
    #[arg(long, default_value = "hybrid")]
    fs: SelectionMode,
    /// Comma-separated model names; defaults to the full registry plus the
    /// voting ensembles.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Personalized protocol: assign epochs within each group randomly
    /// instead of chronologically.
    #[arg(long, default_value_t = false)]
    shuffle_within_group: bool,
    /// k for the single-stage k-best ablation mode.
    #[arg(long, default_value_t = 13)]
    kbest_k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblationArgs {
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    protocol: Protocol,
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<String>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = false)]
    shuffle_within_group: bool,
    #[arg(long, default_value_t = 13)]
    kbest_k: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Failure with a process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn internal(message: impl Into<String>) -> Self {
        Self {
            code: 4,
            message: message.into(),
        }
    }

    fn input(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<LibError> for Failure {
    fn from(err: LibError) -> Self {
        let code = match &err {
            LibError::MissingColumn { .. }
            | LibError::NonNumericSample { .. }
            | LibError::EmptyFile(_)
            | LibError::UnsupportedEmotion(_)
            | LibError::UnknownModel(_)
            | LibError::InvalidConfig(_)
            | LibError::Io(_)
            | LibError::Csv(_)
            | LibError::Json(_) => 2,
            LibError::NoEligibleGroups(_) | LibError::TooFewSubjects { .. } => 3,
            _ => 4,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(err: std::io::Error) -> Self {
        Failure::internal(err.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Extract(args) => cmd_extract(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Ablation(args) => cmd_ablation(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn load_schema(path: &Option<PathBuf>) -> Result<IngestSchema, Failure> {
    match path {
        Some(p) => IngestSchema::from_path(p).map_err(Failure::from),
        None => Ok(IngestSchema::default()),
    }
}

fn resolve_models(models: &Option<Vec<String>>) -> Result<Vec<String>, Failure> {
    let names = match models {
        Some(list) => list.clone(),
        None => eval::default_model_names(),
    };
    if names.is_empty() {
        return Err(Failure::input("empty model list"));
    }
    for name in &names {
        let known = matches!(name.as_str(), "Ensemble" | "Voting_Soft" | "Voting_Hard")
            || ecg_emotion::models::registry_spec(name, 0).is_ok();
        if !known {
            return Err(Failure::input(format!("unknown model name `{name}`")));
        }
    }
    Ok(names)
}

fn cmd_synth(args: SynthArgs) -> Result<(), Failure> {
    let _lock = OutputLock::acquire(&args.out)?;
    let spec = SynthDatasetSpec::with_class_gap(
        args.subjects,
        args.epochs_per_group,
        args.base_bpm,
        args.class_gap_bpm,
        args.subject_sigma_bpm,
        args.seed,
    );
    let schema = IngestSchema::default();
    let paths = write_dataset_csv(&spec, &args.out, &schema)?;
    let mut manifest = ManifestBuilder::new(
        "synth",
        serde_json::json!({
            "subjects": args.subjects,
            "epochs_per_group": args.epochs_per_group,
            "base_bpm": args.base_bpm,
            "class_gap_bpm": args.class_gap_bpm,
            "subject_sigma_bpm": args.subject_sigma_bpm,
            "seed": args.seed,
        }),
    );
    for path in &paths {
        manifest.output(&path.file_name().unwrap_or_default().to_string_lossy());
    }
    manifest.write(&args.out.join("manifest.json"))?;
    say!("wrote {} recordings to {}", paths.len(), args.out.display());
    Ok(())
}

fn cmd_extract(args: ExtractArgs) -> Result<(), Failure> {
    let _lock = OutputLock::acquire(&args.out)?;
    let schema = load_schema(&args.schema)?;
    if !args.data_dir.is_dir() {
        return Err(Failure::input(format!(
            "data directory {} does not exist",
            args.data_dir.display()
        )));
    }
    let (recordings, skipped) = ingest::load_directory(&args.data_dir, &schema)?;
    for skip in &skipped {
        eprintln!("skipped {}: {}", skip.path.display(), skip.reason);
    }
    if recordings.is_empty() {
        return Err(Failure::input(format!(
            "no usable recordings in {}",
            args.data_dir.display()
        )));
    }

    let params = WelchParams::default();
    let mut table = FeatureTable::new();
    for recording in &recordings {
        let epochs = dsp::condition_and_segment(recording, args.epoch_seconds)?;
        for epoch in &epochs {
            table.push(features::extract(epoch, &params)?);
        }
    }
    if table.is_empty() {
        return Err(Failure::input(
            "recordings were readable but shorter than one epoch".to_string(),
        ));
    }

    let features_path = args.out.join("features.csv");
    table.write_csv(&features_path)?;

    let mut manifest = ManifestBuilder::new(
        "extract",
        serde_json::json!({
            "data_dir": args.data_dir.display().to_string(),
            "schema": serde_json::to_value(&schema).map_err(|e| Failure::internal(e.to_string()))?,
            "epoch_seconds": args.epoch_seconds,
        }),
    );
    let mut input_paths: Vec<PathBuf> = std::fs::read_dir(&args.data_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    input_paths.sort();
    for path in &input_paths {
        manifest.input(path)?;
    }
    manifest.output("features.csv");
    manifest.write(&args.out.join("manifest.json"))?;

    say!(
        "read {} files ({} skipped), produced {} epochs -> {}",
        recordings.len(),
        skipped.len(),
        table.len(),
        features_path.display()
    );
    Ok(())
}

fn print_report(report: &EvaluationReport) {
    say!(
        "protocol={} fs={} seed={} train_rows={} test_rows={}",
        report.protocol,
        report.fs_mode,
        report.seed,
        report.train_rows,
        report.test_rows
    );
    if !report.test_subjects.is_empty() {
        say!("test subjects: {}", report.test_subjects.join(", "));
    }
    say!(
        "{:<16} {:>9} {:>10} {:>8} {:>8}",
        "Model",
        "Accuracy",
        "Precision",
        "Recall",
        "F1"
    );
    for (name, m) in report.sorted() {
        say!(
            "{name:<16} {:>9.2} {:>10.2} {:>8.2} {:>8.2}",
            m.accuracy,
            m.precision,
            m.recall,
            m.f1
        );
    }
    for entry in &report.entries {
        if let ModelOutcome::Failed { error } = &entry.outcome {
            eprintln!("model {} failed: {error}", entry.model);
        }
    }
}

fn experiment_options(shuffle: bool, kbest_k: usize) -> ExperimentOptions {
    let mut opts = ExperimentOptions::new();
    opts.split.shuffle_within_group = shuffle;
    opts.selection.kbest_k = kbest_k;
    opts
}

fn features_path(explicit: &Option<PathBuf>, out: &Path) -> PathBuf {
    explicit.clone().unwrap_or_else(|| out.join("features.csv"))
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), Failure> {
    let _lock = OutputLock::acquire(&args.out)?;
    let features_csv = features_path(&args.features, &args.out);
    if !features_csv.is_file() {
        return Err(Failure::input(format!(
            "feature CSV {} does not exist (run `extract` first)",
            features_csv.display()
        )));
    }
    let table = FeatureTable::read_csv(&features_csv)?;
    let names = resolve_models(&args.models)?;
    let opts = experiment_options(args.shuffle_within_group, args.kbest_k);

    let split = make_split(&table, args.protocol, args.seed, &opts.split)?;
    let prep = prepare_features(&table, &split, args.fs, &opts.selection, args.seed)?;
    prep.selector
        .write_report(&args.out.join("selection.json"), &FEATURE_NAMES)?;
    let report = score_models(&prep, &split, args.fs, &names, args.seed);

    report.write_csv(&args.out.join("report.csv"))?;
    report.write_json(&args.out.join("report.json"))?;

    let mut manifest = ManifestBuilder::new(
        "evaluate",
        serde_json::json!({
            "features": features_csv.display().to_string(),
            "protocol": report.protocol,
            "fs": report.fs_mode,
            "models": names,
            "seed": args.seed,
            "shuffle_within_group": args.shuffle_within_group,
            "kbest_k": args.kbest_k,
        }),
    );
    manifest.input(&features_csv)?;
    for name in ["report.csv", "report.json", "selection.json"] {
        manifest.output(name);
    }
    manifest.write(&args.out.join("manifest.json"))?;

    print_report(&report);
    let succeeded = report
        .entries
        .iter()
        .any(|e| matches!(e.outcome, ModelOutcome::Metrics(_)));
    if succeeded {
        Ok(())
    } else {
        Err(Failure::internal("every model failed"))
    }
}

fn cmd_ablation(args: AblationArgs) -> Result<(), Failure> {
    let _lock = OutputLock::acquire(&args.out)?;
    let features_csv = features_path(&args.features, &args.out);
    if !features_csv.is_file() {
        return Err(Failure::input(format!(
            "feature CSV {} does not exist (run `extract` first)",
            features_csv.display()
        )));
    }
    let table = FeatureTable::read_csv(&features_csv)?;
    let names = resolve_models(&args.models)?;
    let opts = experiment_options(args.shuffle_within_group, args.kbest_k);

    // One split shared by all three modes.
    let split = make_split(&table, args.protocol, args.seed, &opts.split)?;
    let run_mode = |mode: SelectionMode| -> Result<EvaluationReport, Failure> {
        let prep = prepare_features(&table, &split, mode, &opts.selection, args.seed)?;
        prep.selector.write_report(
            &args.out.join(format!("selection_{mode}.json")),
            &FEATURE_NAMES,
        )?;
        let report = score_models(&prep, &split, mode, &names, args.seed);
        report.write_csv(&args.out.join(format!("report_{mode}.csv")))?;
        report.write_json(&args.out.join(format!("report_{mode}.json")))?;
        say!(
            "fs={mode}: train_rows={} test_rows={}",
            report.train_rows,
            report.test_rows
        );
        Ok(report)
    };
    let ablation = AblationReport {
        none: run_mode(SelectionMode::None)?,
        hybrid: run_mode(SelectionMode::Hybrid)?,
        kbest: run_mode(SelectionMode::KBestOnly)?,
    };
    ablation.write_csv(&args.out.join("ablation.csv"))?;

    let mut manifest = ManifestBuilder::new(
        "ablation",
        serde_json::json!({
            "features": features_csv.display().to_string(),
            "protocol": args.protocol,
            "models": names,
            "seed": args.seed,
            "shuffle_within_group": args.shuffle_within_group,
            "kbest_k": args.kbest_k,
        }),
    );
    manifest.input(&features_csv)?;
    manifest.output("ablation.csv");
    for mode in ["none", "hybrid", "kbest"] {
        manifest.output(&format!("report_{mode}.csv"));
        manifest.output(&format!("report_{mode}.json"));
        manifest.output(&format!("selection_{mode}.json"));
    }
    manifest.write(&args.out.join("manifest.json"))?;

    say!(
        "{:<16} {:>9} {:>9} {:>9}  {}",
        "Model",
        "No FS",
        "Hybrid",
        "KBest",
        "Best FS"
    );
    for row in ablation.rows() {
        let fmt = |v: Option<f64>| v.map_or("     -".to_string(), |a| format!("{a:>9.2}"));
        say!(
            "{:<16} {} {} {}  {}",
            row.model,
            fmt(row.none),
            fmt(row.hybrid),
            fmt(row.kbest),
            row.best
        );
    }
    Ok(())
}
