//! `figsep`: synthesize compound figures, train the subfigure detector,
//! detect, evaluate and render overlays.
//!
//! Exit status: 0 on success, 1 on a usage error, 2 on a runtime error.
//! Diagnostics go to stderr; results go to files or stdout.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "figsep", version, about = "Compound figure separation")]
struct Cli {
    /// More log output (repeat for trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate labeled compound figures.
    Synth(SynthArgs),
    /// Cluster ground-truth box shapes into anchors.
    Anchors(AnchorsArgs),
    /// Train the detector on an annotated corpus.
    Train(TrainArgs),
    /// Detect subfigures in images.
    Detect(DetectArgs),
    /// Score detections against ground truth.
    Eval(EvalArgs),
    /// Draw detections (red) and ground truth (yellow) on an image.
    Render(RenderArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Grid,
    Random,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "grid")]
    mode: Mode,
    #[arg(long, default_value_t = 100)]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory; receives images/ and annotations.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Canvas long side in pixels.
    #[arg(long)]
    long_side: Option<u32>,
    /// Number of procedural subfigure assets to draw from.
    #[arg(long, default_value_t = 200)]
    pool_size: usize,
    /// Probability of transposing a grid figure.
    #[arg(long)]
    transpose_prob: Option<f64>,
    /// Full synthesis config (JSON); flags above override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct CorpusArgs {
    /// Annotation file (JSON Lines).
    #[arg(long)]
    corpus: PathBuf,
    /// Directory image paths are relative to; defaults to the corpus directory.
    #[arg(long)]
    images: Option<PathBuf>,
}

#[derive(Args)]
struct AnchorsArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(short, long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the anchor list here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Detector config (JSON); missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Weight file to write; the config is saved next to it as `<out>.json`.
    #[arg(long)]
    out: PathBuf,
    /// Loss history CSV; defaults to `<out>.loss.csv`.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    weights: PathBuf,
    /// Detect on every image of this annotation file, keeping its image keys.
    #[arg(long, conflicts_with = "inputs")]
    corpus: Option<PathBuf>,
    #[arg(long, requires = "corpus")]
    images: Option<PathBuf>,
    /// Image files or directories.
    #[arg(required_unless_present = "corpus")]
    inputs: Vec<PathBuf>,
    /// Detections in annotation format.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    conf_threshold: Option<f64>,
    #[arg(long)]
    nms_threshold: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Denominator {
    GtArea,
    Union,
    Both,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    ground_truth: PathBuf,
    /// Report JSON; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Precision-recall curve CSV.
    #[arg(long)]
    pr_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 0.66)]
    overlap_threshold: f64,
    /// `both` also writes `.union` variants of the outputs.
    #[arg(long, value_enum, default_value = "gt-area")]
    overlap_denominator: Denominator,
    /// Raw precision at hits instead of the interpolated envelope.
    #[arg(long)]
    uninterpolated: bool,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    detections: Option<PathBuf>,
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// Image key in the annotation files; defaults to the image path, then its file name.
    #[arg(long)]
    key: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Warn,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Anchors(a) => commands::anchors(a),
        Command::Train(a) => commands::train(a),
        Command::Detect(a) => commands::detect(a),
        Command::Eval(a) => commands::eval(a),
        Command::Render(a) => commands::render(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
