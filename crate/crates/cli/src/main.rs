use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (rev ",
    env!("FACEVQ_BUILD_REV"),
    ")"
);

#[derive(Parser)]
#[command(name = "facevq", version = VERSION, about = "Face video quality study toolkit")]
struct Cli {
    /// tracing filter, e.g. "info" or "facevq_service=debug"
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a manifest and (optionally) a rating log against it.
    Ingest(IngestArgs),
    /// Run outlier screening, subject rejection and MOS computation.
    Score(ScoreArgs),
    /// Extract frame features from extracted video frames.
    Features(FeaturesArgs),
    /// Per-group MOS histograms and summary statistics.
    Analyze(AnalyzeArgs),
    /// Correlate predictions with MOS over a split.
    Evaluate(EvaluateArgs),
    /// Fit the linear feature baseline and write its predictions.
    Baseline(BaselineArgs),
    /// Generate a synthetic rating study with known latent quality.
    Simulate(SimulateArgs),
    /// Run the HTTP study service.
    Serve(ServeArgs),
}

#[derive(Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub ratings: Option<PathBuf>,
}

#[derive(Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub ratings: PathBuf,
    /// JSON scoring configuration; defaults apply to omitted fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args)]
pub struct FeaturesArgs {
    /// Directory of frames, or of one subdirectory of frames per video
    #[arg(long)]
    pub frames_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Multiply [0,1] pixel values by this factor (255 for 8-bit units)
    #[arg(long, default_value_t = 1.0)]
    pub pixel_scale: f64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub mos: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Comma-separated keys: platform, category, gender, race, age_group, emotion
    #[arg(long, default_value = "platform")]
    pub group_by: String,
    #[arg(long, default_value_t = 5.0)]
    pub bin_width: f64,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args)]
pub struct SplitArgs {
    /// train, val, test or all
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// CSV with header video_id,score
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub mos: PathBuf,
    /// Needed for --groups
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub split: SplitArgs,
    #[arg(long, default_value = "")]
    pub groups: String,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, default_value = "dataset")]
    pub dataset_id: String,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args)]
pub struct BaselineArgs {
    /// features.json written by the features subcommand
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub mos: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[arg(long, default_value = "predictions.csv")]
    pub out: PathBuf,
    #[arg(long)]
    pub model_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// JSON simulation parameters; defaults apply to omitted fields
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub manifest_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, env = facevq_service::DATA_DIR_ENV)]
    pub data_dir: PathBuf,
    /// Skip fsync after each event (faster, less durable)
    #[arg(long)]
    pub no_fsync: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = tracing_subscriber::EnvFilter::try_new(&cli.log_level)
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();

    let result = match cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Score(a) => commands::score(a),
        Command::Features(a) => commands::features(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Baseline(a) => commands::baseline(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Serve(a) => commands::serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(ToString::to_string).collect();
            let body = serde_json::json!({ "error": format!("{e:#}"), "causes": chain });
            eprintln!("{body}");
            ExitCode::from(1)
        }
    }
}
