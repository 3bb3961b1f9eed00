//! Command-line front end: generate / train / evaluate / ablate / monitor.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 internal invariant violation.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::panic::AssertUnwindSafe;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use bedwatch::eval::{ablation_table, cross_validate, folds_to_csv, format_table, CvConfig, CvReport};
use bedwatch::features::{balance_dataset, prepare_samples, read_dataset, FeatureConfig, FeatureSet};
use bedwatch::gbdt::{fit, training_accuracy, Forest, Hyperparams};
use bedwatch::stream::{run_monitor, DebounceConfig, MonitorConfig};
use bedwatch::synth::{generate_dataset, GeneratorConfig};

#[derive(Parser)]
#[command(
    name = "bedwatch",
    version,
    about = "In-bed fall-risk scoring and alerting from bed contours and 2D pose keypoints"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic dataset.
    Generate(GenerateArgs),
    /// Train a boosted-tree model on a dataset file.
    Train(TrainArgs),
    /// Cross-validate one feature set on a dataset file.
    Evaluate(EvaluateArgs),
    /// Cross-validate all four feature sets with shared folds.
    Ablate(AblateArgs),
    /// Score a frame stream and emit debounced alert events.
    Monitor(MonitorArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of scenes.
    #[arg(long)]
    n: usize,
    /// Target at-risk fraction, in (0, 1).
    #[arg(long = "class-mix", default_value_t = 0.5)]
    class_mix: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Risk boundary in px from the bed edge (positive moves it inward).
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    /// Keypoint and contour jitter sigma in px.
    #[arg(long, default_value_t = 2.0)]
    noise: f64,
    /// Probability a keypoint's confidence drops below 0.05.
    #[arg(long, default_value_t = 0.02)]
    dropout: f64,
    /// Probability of flipping a stored label (robustness studies).
    #[arg(long, default_value_t = 0.0)]
    flip: f64,
    /// Output dataset path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset file produced by `generate` (or schema-compatible).
    #[arg(long)]
    data: PathBuf,
    #[arg(long = "feature-set")]
    feature_set: FeatureSet,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Where to write the model file.
    #[arg(long = "out-model")]
    out_model: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 31)]
    leaves: usize,
    #[arg(long = "min-leaf", default_value_t = 20)]
    min_leaf: usize,
    /// Gaussian noise sigma (px) for class-balancing duplicates.
    #[arg(long = "aug-noise", default_value_t = 2.0)]
    aug_noise: f64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long = "feature-set")]
    feature_set: FeatureSet,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Gaussian noise sigma (px) for class-balancing duplicates.
    #[arg(long = "aug-noise", default_value_t = 2.0)]
    aug_noise: f64,
    /// Write per-fold rows (repeat, fold, feature_set, accuracy, tp, fp,
    /// tn, fn) as CSV.
    #[arg(long = "emit-csv")]
    emit_csv: Option<PathBuf>,
    /// Write the full JSON report document.
    #[arg(long = "out-report")]
    out_report: Option<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long = "aug-noise", default_value_t = 2.0)]
    aug_noise: f64,
    #[arg(long = "emit-csv")]
    emit_csv: Option<PathBuf>,
    #[arg(long = "out-report")]
    out_report: Option<PathBuf>,
}

#[derive(Args)]
struct MonitorArgs {
    /// Model file written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Frame stream path, or '-' for stdin. Accepts bare frame records or
    /// dataset lines (the embedded frame is used).
    #[arg(long)]
    input: String,
    /// Consecutive at-risk frames required to raise an alert.
    #[arg(long = "raise", default_value_t = 3)]
    raise_n: usize,
    /// Consecutive safe frames required to clear an active alert.
    #[arg(long = "clear", default_value_t = 5)]
    clear_m: usize,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Echo the feature vector on every score record.
    #[arg(long = "echo-features", default_value_t = false)]
    echo_features: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match std::panic::catch_unwind(AssertUnwindSafe(|| run(cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
        Err(_) => {
            eprintln!("error: internal invariant violation");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate(args) => generate(args),
        Command::Train(args) => train(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Ablate(args) => ablate(args),
        Command::Monitor(args) => monitor(args),
    }
}

fn load_records(path: &PathBuf) -> anyhow::Result<Vec<bedwatch::features::DatasetSample>> {
    let file = File::open(path).with_context(|| format!("open {}", path.display()))?;
    let (_, records) = read_dataset(BufReader::new(file))
        .with_context(|| format!("read dataset {}", path.display()))?;
    Ok(records)
}

fn generate(args: GenerateArgs) -> anyhow::Result<()> {
    let cfg = GeneratorConfig {
        n: args.n,
        class_mix: args.class_mix,
        seed: args.seed,
        tau: args.tau,
        keypoint_noise_sigma: args.noise,
        dropout_prob: args.dropout,
        label_flip_prob: args.flip,
    };
    let (header, samples) = generate_dataset(&cfg)?;
    let file = File::create(&args.out).with_context(|| format!("create {}", args.out.display()))?;
    let mut w = BufWriter::new(file);
    bedwatch::features::write_dataset(&mut w, Some(&header), &samples)?;
    w.flush()?;
    let at_risk = samples.iter().filter(|s| s.label.is_at_risk()).count();
    eprintln!(
        "wrote {} samples ({} at risk, {} not at risk, tau {}) to {}",
        samples.len(),
        at_risk,
        samples.len() - at_risk,
        cfg.tau,
        args.out.display()
    );
    Ok(())
}

fn hyperparams(args: &TrainArgs) -> Hyperparams {
    Hyperparams {
        learning_rate: args.lr,
        n_trees: args.trees,
        max_leaves: args.leaves,
        min_samples_leaf: args.min_leaf,
        ..Hyperparams::default()
    }
}

fn train(args: TrainArgs) -> anyhow::Result<()> {
    let records = load_records(&args.data)?;
    let prepared = prepare_samples(&records, args.feature_set, &FeatureConfig::default());
    if !prepared.skipped.is_empty() {
        eprintln!(
            "skipped {} of {} frames (side rule unresolvable)",
            prepared.skipped.len(),
            records.len()
        );
    }
    let balanced = balance_dataset(&prepared.samples, args.aug_noise, args.seed)?;
    let forest = fit(&balanced, &hyperparams(&args), args.seed)?;
    let file = File::create(&args.out_model)
        .with_context(|| format!("create {}", args.out_model.display()))?;
    let mut w = BufWriter::new(file);
    forest.save_model(&mut w)?;
    w.flush()?;
    eprintln!(
        "trained '{}' on {} samples ({} augmented), training accuracy {:.4}, model at {}",
        args.feature_set,
        balanced.len(),
        balanced.len() - prepared.samples.len(),
        training_accuracy(&forest, &balanced)?,
        args.out_model.display()
    );
    Ok(())
}

fn write_reports(
    rows: &[(FeatureSet, &CvReport)],
    emit_csv: Option<&PathBuf>,
    out_report: Option<&PathBuf>,
) -> anyhow::Result<()> {
    print!("{}", format_table(rows));
    if let Some(path) = emit_csv {
        std::fs::write(path, folds_to_csv(rows))
            .with_context(|| format!("write {}", path.display()))?;
        eprintln!("wrote per-fold CSV to {}", path.display());
    }
    if let Some(path) = out_report {
        let reports: Vec<&CvReport> = rows.iter().map(|(_, r)| *r).collect();
        let doc = if reports.len() == 1 {
            serde_json::to_string_pretty(reports[0])?
        } else {
            serde_json::to_string_pretty(&reports)?
        };
        std::fs::write(path, doc + "\n").with_context(|| format!("write {}", path.display()))?;
        eprintln!("wrote report to {}", path.display());
    }
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> anyhow::Result<()> {
    let records = load_records(&args.data)?;
    let cfg = CvConfig {
        k: args.folds,
        repeats: args.repeats,
        seed: args.seed,
        feature_set: args.feature_set,
        hyperparams: Hyperparams::default(),
        noise_sigma: args.aug_noise,
    };
    let report = cross_validate(&records, &cfg)?;
    if report.excluded > 0 {
        eprintln!("excluded {} frames (side rule unresolvable)", report.excluded);
    }
    write_reports(
        &[(args.feature_set, &report)],
        args.emit_csv.as_ref(),
        args.out_report.as_ref(),
    )
}

fn ablate(args: AblateArgs) -> anyhow::Result<()> {
    let records = load_records(&args.data)?;
    let base = CvConfig {
        k: args.folds,
        repeats: args.repeats,
        seed: args.seed,
        feature_set: FeatureSet::KneeDist,
        hyperparams: Hyperparams::default(),
        noise_sigma: args.aug_noise,
    };
    let rows = ablation_table(&records, &base)?;
    if rows[0].1.excluded > 0 {
        eprintln!("excluded {} frames (side rule unresolvable)", rows[0].1.excluded);
    }
    let refs: Vec<(FeatureSet, &CvReport)> = rows.iter().map(|(s, r)| (*s, r)).collect();
    write_reports(&refs, args.emit_csv.as_ref(), args.out_report.as_ref())
}

fn monitor(args: MonitorArgs) -> anyhow::Result<()> {
    let model_file =
        File::open(&args.model).with_context(|| format!("open {}", args.model.display()))?;
    let model = Forest::load_model(BufReader::new(model_file))
        .with_context(|| format!("load model {}", args.model.display()))?;

    let cfg = MonitorConfig {
        debounce: DebounceConfig { raise_n: args.raise_n, clear_m: args.clear_m },
        threshold: args.threshold,
        echo_features: args.echo_features,
    };

    let stdin = io::stdin();
    let input: Box<dyn BufRead> = if args.input == "-" {
        Box::new(stdin.lock())
    } else {
        let file = File::open(&args.input).with_context(|| format!("open {}", args.input))?;
        Box::new(BufReader::new(file))
    };

    let stdout = io::stdout();
    let out = BufWriter::new(stdout.lock());
    let summary = run_monitor(input, model, &cfg, out, io::stderr().lock())?;
    eprintln!(
        "processed {} frames ({} degraded, {} malformed), {} raised, {} cleared",
        summary.frames, summary.degraded, summary.malformed, summary.raised, summary.cleared
    );
    Ok(())
}
