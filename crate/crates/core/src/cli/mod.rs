//! Command-line front end. Every subcommand writes its artifacts under
//! `--out-dir`; failures print one `error kind=<kind> msg=<message>` line to
//! stderr and exit with status 1.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::color::{WorkingSpace, DEFAULT_GAMMA};
use crate::costnorm::CostNormMode;
use crate::costvolume::DEFAULT_D_MAX;
use crate::dataio::DatasetLayout;
use crate::disparity::RegressionMode;
use crate::metrics::DEFAULT_FOCAL_BASELINE;

#[derive(Debug, Parser)]
#[command(
    name = "stereo-adapt",
    version,
    about = "Training-free stereo matching and domain-adaptation tooling"
)]
pub struct Cli {
    /// Worker threads (defaults to one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for every random choice made by a subcommand.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Csv)]
    pub format: ReportFormat,
    /// Directory receiving all outputs; created when missing.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Recolor a source dataset toward the running color statistics of a target dataset.
    Transfer(TransferArgs),
    /// Estimate disparity for one pair or a whole dataset.
    Stereo(StereoArgs),
    /// Histogram of correlation cost values over 30 unit bins on [0, 30).
    CostHist(CostHistArgs),
    /// Bad-pixel rate, depth-binned ARD curve and per-class matching rate.
    Eval(EvalArgs),
    /// Evaluate the five training losses and their weighted total.
    Losses(LossesArgs),
    /// Check the analytic disparity gradient against finite differences.
    Gradcheck(GradcheckArgs),
    /// Write a random-dot stereo pair with ground truth.
    Synth(SynthArgs),
}

fn parse_via_fromstr<T: std::str::FromStr<Err = crate::Error>>(s: &str) -> Result<T, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, default_value = "flat-pairs", value_parser = parse_via_fromstr::<DatasetLayout>)]
    pub layout: DatasetLayout,
    /// Layout of the target directory (defaults to --layout).
    #[arg(long, value_parser = parse_via_fromstr::<DatasetLayout>)]
    pub target_layout: Option<DatasetLayout>,
    /// Momentum of the running target statistics.
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    #[arg(long, default_value = "log-lab", value_parser = parse_via_fromstr::<WorkingSpace>)]
    pub space: WorkingSpace,
    /// Number of source pairs to process (defaults to all).
    #[arg(long)]
    pub iterations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct StereoOptions {
    #[arg(long, default_value = "wta", value_parser = parse_via_fromstr::<RegressionMode>)]
    pub mode: RegressionMode,
    /// Softmax temperature for soft-argmin.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value_t = 2)]
    pub agg_radius: usize,
    /// Disparity candidates at feature resolution.
    #[arg(long, default_value_t = DEFAULT_D_MAX)]
    pub d_max: usize,
    #[arg(long, default_value = "on", value_parser = parse_via_fromstr::<CostNormMode>)]
    pub cost_norm: CostNormMode,
    /// Feature stride relative to the input image.
    #[arg(long, default_value_t = 2)]
    pub downsample: usize,
    #[arg(long, default_value_t = 3)]
    pub census_window: usize,
}

#[derive(Debug, Args)]
pub struct StereoArgs {
    #[arg(long, requires = "right", conflicts_with = "dataset")]
    pub left: Option<PathBuf>,
    #[arg(long, requires = "left")]
    pub right: Option<PathBuf>,
    /// Dataset root listed with --layout.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, default_value = "flat-pairs", value_parser = parse_via_fromstr::<DatasetLayout>)]
    pub layout: DatasetLayout,
    /// Also write an 8-bit disparity preview PNG per pair.
    #[arg(long)]
    pub preview: bool,
    #[command(flatten)]
    pub opts: StereoOptions,
}

#[derive(Debug, Args)]
pub struct CostHistArgs {
    #[arg(long)]
    pub left: PathBuf,
    #[arg(long)]
    pub right: PathBuf,
    #[command(flatten)]
    pub opts: StereoOptions,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Single-channel PNG of class ids for the matching rate.
    #[arg(long)]
    pub semantic: Option<PathBuf>,
    #[arg(long, default_value_t = 3.0)]
    pub threshold: f64,
    /// Extra bad-pixel thresholds, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub bad: Vec<f64>,
    /// Focal length times baseline, converting disparity to depth.
    #[arg(long, default_value_t = DEFAULT_FOCAL_BASELINE)]
    pub fb: f64,
}

#[derive(Debug, Args)]
pub struct LossesArgs {
    #[arg(long)]
    pub left: PathBuf,
    #[arg(long)]
    pub right: PathBuf,
    /// Predicted left disparity.
    #[arg(long)]
    pub disp: PathBuf,
    /// Predicted occlusion probabilities; all-visible when omitted.
    #[arg(long)]
    pub occ: Option<PathBuf>,
    /// Ground-truth disparity enabling the two supervised terms.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long, default_value_t = 0.85)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.2)]
    pub w_s_occ: f64,
    #[arg(long, default_value_t = 1.0)]
    pub w_t_ar: f64,
    #[arg(long, default_value_t = 0.2)]
    pub w_t_occ: f64,
    #[arg(long, default_value_t = 0.1)]
    pub w_t_sm: f64,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Left image; a random-dot pair is generated when the inputs are omitted.
    #[arg(long, requires_all = ["right", "disp"])]
    pub left: Option<PathBuf>,
    #[arg(long)]
    pub right: Option<PathBuf>,
    #[arg(long)]
    pub disp: Option<PathBuf>,
    #[arg(long)]
    pub occ: Option<PathBuf>,
    #[arg(long, default_value_t = 96)]
    pub width: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 5)]
    pub shift: usize,
    #[arg(long, default_value_t = 100)]
    pub probes: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    #[arg(long, default_value_t = 0.85)]
    pub alpha: f64,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 320)]
    pub width: usize,
    #[arg(long, default_value_t = 240)]
    pub height: usize,
    #[arg(long, default_value_t = 10)]
    pub shift: usize,
}

/// Parses the process arguments and runs the selected subcommand.
pub fn run() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            anyhow::bail!(crate::Error::InvalidConfig("--threads must be >= 1".into()));
        }
        // a second call in the same process keeps the existing pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    std::fs::create_dir_all(&cli.out_dir).map_err(|source| crate::Error::Io {
        path: cli.out_dir.clone(),
        source,
    })?;
    let ctx = commands::Context {
        seed: cli.seed,
        format: cli.format,
        out_dir: cli.out_dir.clone(),
    };
    match &cli.command {
        Command::Transfer(a) => commands::transfer(&ctx, a),
        Command::Stereo(a) => commands::stereo(&ctx, a),
        Command::CostHist(a) => commands::cost_hist(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::Losses(a) => commands::losses(&ctx, a),
        Command::Gradcheck(a) => commands::gradcheck(&ctx, a),
        Command::Synth(a) => commands::synth(&ctx, a),
    }
}

/// `error kind=<kind> msg=<message>` on a single line.
pub fn error_line(e: &anyhow::Error) -> String {
    let kind = match e.downcast_ref::<crate::Error>() {
        Some(inner) => inner.kind(),
        None => match e.downcast_ref::<commands::CheckFailed>() {
            Some(_) => "check_failed",
            None => "other",
        },
    };
    // join the cause chain, skipping causes already quoted by their parent
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    let msg = msg.replace('\n', " ");
    format!("error kind={kind} msg={msg}")
}
