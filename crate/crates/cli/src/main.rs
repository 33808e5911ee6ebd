//! `ntb` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "ntb",
    version,
    about = "Activity recognition by network transmission"
)]
pub struct Cli {
    /// Scene config (JSON).
    #[arg(long, global = true)]
    pub scene: Option<PathBuf>,
    /// Seed for generators and dataset splits.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Log verbosity (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train DT energies and detection thresholds from labelled trajectories.
    Train(TrainArgs),
    /// Judge trajectories with a trained model.
    Detect(DetectArgs),
    /// Export minimum-energy route trees of a model as DOT and CSV.
    RouteMap(RouteMapArgs),
    /// Pairwise group-activity features and classifier.
    #[command(subcommand)]
    Group(GroupCommand),
    /// Crowd-escape detection on optical-flow vectors.
    Crowd(CrowdArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Stratified train/test split of a label file.
    Split(SplitArgs),
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub tracks: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Training config (JSON); flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Use a logistic classifier on the energy features inside the loop.
    #[arg(long)]
    pub classifier_loop: bool,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CriteriaArg {
    Both,
    T1,
    T2,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub tracks: PathBuf,
    /// Write per-track energy curves to `traces/`.
    #[arg(long)]
    pub trace: bool,
    /// Print one JSON line per route step to standard output.
    #[arg(long)]
    pub online: bool,
    /// Also judge consecutive windows of this many patches separately.
    #[arg(long)]
    pub rearm: Option<usize>,
    #[arg(long, value_enum, default_value = "both")]
    pub criteria: CriteriaArg,
}

#[derive(Debug, Args)]
pub struct RouteMapArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Source patches; defaults to the scene's entrances.
    #[arg(long, value_delimiter = ',')]
    pub source: Vec<usize>,
    /// Keep only tree edges with DT energy at most this value.
    #[arg(long)]
    pub prune: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum GroupCommand {
    /// Energy features of every labelled pair.
    Extract(GroupExtractArgs),
    /// Fit the one-vs-rest classifier on a feature table.
    Train(GroupTrainArgs),
    /// Predict pair labels with a fitted classifier.
    Classify(GroupClassifyArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeArg {
    Head,
    Tail,
}

#[derive(Debug, Args)]
pub struct GroupExtractArgs {
    #[arg(long)]
    pub tracks: PathBuf,
    /// Pair file `pair_id,track_id_1,track_id_2,label`.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Motion field; adds the two EMI columns.
    #[arg(long)]
    pub field: Option<PathBuf>,
    #[arg(long, default_value_t = 15)]
    pub r_max: u32,
    #[arg(long, value_enum, default_value = "head")]
    pub scheme: SchemeArg,
}

#[derive(Debug, Args)]
pub struct GroupTrainArgs {
    #[arg(long)]
    pub features: PathBuf,
}

#[derive(Debug, Args)]
pub struct GroupClassifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
}

#[derive(Debug, Args)]
pub struct CrowdArgs {
    #[arg(long)]
    pub flows: PathBuf,
    /// Per-frame ground truth `frame,abnormal`; enables the ROC export.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Frames `FIRST:LAST` known to be normal, used to set the threshold.
    #[arg(long, conflicts_with = "theta")]
    pub calibrate: Option<String>,
    /// Threshold = k standard deviations of the calibration windows.
    #[arg(long, default_value_t = 3.0)]
    pub k: f64,
    /// Fixed threshold instead of calibration.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, default_value_t = 15)]
    pub r_max: u32,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EvalKind {
    Abnormality,
    Group,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_enum)]
    pub kind: EvalKind,
    /// `track_id,label` or `pair_id,label`.
    #[arg(long)]
    pub predictions: PathBuf,
    /// Label file, or pair file for `--kind group`.
    #[arg(long)]
    pub truth: PathBuf,
    /// Drop predictions whose id is not in the ground truth.
    #[arg(long)]
    pub ignore_extra: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// `track_id,label` file.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 0.75)]
    pub fraction: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SynthKind {
    Abnormality,
    Group,
    Casia,
    Crowd,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(value_enum)]
    pub kind: SynthKind,
    /// Generator config (JSON); `--seed` overrides its seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Patch size of the written scene (abnormality corpus only).
    #[arg(long)]
    pub patch_size: Option<u32>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let outcome = std::panic::catch_unwind(|| commands::run(&cli));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(3)
        }
    }
}
