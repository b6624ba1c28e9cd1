//! `lgw`: batch probes over factor-annotated latent datasets.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "lgw", version, about = "Latent geometry workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset with known geometry plus a ground-truth sidecar
    Synth(SynthArgs),
    /// Run the disentanglement metrics and write a report
    Metrics(MetricsArgs),
    /// Resample one dimension at a time around a sample (or follow a tree path with --guided)
    Traverse(TraverseArgs),
    /// Linear interpolation between two samples and a convexity check
    Interpolate(InterpolateArgs),
    /// Vector arithmetic consistency and cluster sizes for one factor
    Arith(ArithArgs),
    /// Fit a decision tree on a binary labelling and report proxy metrics
    Tree(TreeArgs),
    /// Guided traversal over many seeds and the resulting flip ratio
    Guided(GuidedArgs),
    /// Train the conditional VAE on the dataset's annotations
    TrainVae(TrainVaeArgs),
    /// PCA projection to 2-D as SVG or CSV
    Project(ProjectArgs),
}

#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// Dataset file (.jsonl or .csv)
    #[arg(long)]
    pub input: PathBuf,
    /// Schema file; defaults to the dataset's own header or inferred columns
    #[arg(long)]
    pub schema: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutFormat {
    Json,
    Csv,
    Svg,
    Jsonl,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum LayoutArg {
    Disentangled,
    Rotated,
    Duplicated,
    ShuffledLabels,
    Clusters,
    Cones,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Schema file; overrides --factors and --values
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub factors: usize,
    /// Values per factor
    #[arg(long, default_value_t = 4)]
    pub values: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 2000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, value_enum, default_value_t = LayoutArg::Disentangled)]
    pub layout: LayoutArg,
    /// Copies per factor for the duplicated layout
    #[arg(long, default_value_t = 2)]
    pub copies: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output dataset; the sidecar goes next to it as <stem>.groundtruth.json
    #[arg(long, visible_alias = "output")]
    pub out: PathBuf,
    /// jsonl or csv; inferred from --out when omitted
    #[arg(long, value_enum)]
    pub format: Option<OutFormat>,
}

#[derive(Args, Debug)]
pub struct MetricsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, visible_alias = "output")]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<OutFormat>,
    /// Histogram bins per dimension
    #[arg(long, default_value_t = 20)]
    pub bins: usize,
    /// Comma-separated subset of z_diff,z_min_var,mig,modularity,disentanglement,completeness,informativeness
    #[arg(long, default_value = "all")]
    pub metrics: String,
    /// Divide MIG gaps by the factor entropy
    #[arg(long)]
    pub normalized_mig: bool,
    /// Headline modularity on raw MI values
    #[arg(long)]
    pub raw_variance: bool,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Trees per DCI forest
    #[arg(long, default_value_t = 64)]
    pub trees: usize,
    /// Split candidates for the DCI forest: all, sqrt or a count
    #[arg(long, default_value = "all")]
    pub forest_max_features: String,
}

#[derive(Args, Debug)]
pub struct TraverseArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, visible_alias = "output")]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<OutFormat>,
    /// Sample id to start from; defaults to the first sample
    #[arg(long)]
    pub id: Option<u64>,
    /// Comma-separated dimensions to traverse; defaults to all
    #[arg(long)]
    pub dims: Option<String>,
    /// Values per dimension over mean +/- 2 std
    #[arg(long, default_value_t = 8)]
    pub steps: usize,
    /// Edit along a decision-tree path instead (needs --factor, --from, --to, --seed)
    #[arg(long)]
    pub guided: bool,
    #[arg(long)]
    pub factor: Option<String>,
    #[arg(long)]
    pub from: Option<String>,
    #[arg(long)]
    pub to: Option<String>,
}

#[derive(Args, Debug)]
pub struct InterpolateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, visible_alias = "output")]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<OutFormat>,
    /// Start sample id; defaults to the first sample
    #[arg(long)]
    pub from_id: Option<u64>,
    /// End sample id; defaults to the second sample
    #[arg(long)]
    pub to_id: Option<u64>,
    #[arg(long, default_value_t = 0.1)]
    pub step: f64,
    /// Convex-combination trials inside the start sample's tree leaf (0 skips)
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Factor the convexity tree is fitted on; defaults to the first factor
    #[arg(long)]
    pub factor: Option<String>,
}

#[derive(Args, Debug)]
pub struct ArithArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, visible_alias = "output")]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<OutFormat>,
    #[arg(long)]
    pub factor: String,
    /// Comma-separated operations: add, sub, hadamard
    #[arg(long, default_value = "add,sub")]
    pub ops: String,
    /// Same-value pairs drawn per operation
    #[arg(long, default_value_t = 100)]
    pub pairs: usize,
    /// Neighbourhood samples per result
    #[arg(long, default_value_t = 16)]
    pub neighborhood: usize,
    /// Random pairs per value for the cosine cluster size
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
}

#[derive(Args, Debug)]
pub struct TreeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, visible_alias = "output")]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<OutFormat>,
    #[arg(long)]
    pub factor: String,
    /// Positive value of the binary labelling; defaults to the first value
    #[arg(long)]
    pub positive: Option<String>,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub min_samples_leaf: usize,
}

#[derive(Args, Debug)]
pub struct GuidedArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, visible_alias = "output")]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<OutFormat>,
    #[arg(long)]
    pub factor: String,
    /// Value the seed samples carry
    #[arg(long)]
    pub from: String,
    /// Value the edits aim for
    #[arg(long)]
    pub to: String,
    /// Number of seed samples
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Edit offset in units of the dimension's std
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub min_samples_leaf: usize,
    /// Also write every edit log as JSONL here
    #[arg(long)]
    pub edits: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainVaeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoint JSON
    #[arg(long, visible_alias = "output")]
    pub out: PathBuf,
    /// Loss trace CSV; defaults to <stem>.trace.csv next to --out
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Write posterior means as a JSONL dataset
    #[arg(long)]
    pub latents: Option<PathBuf>,
    /// KL floor per latent dimension (nats)
    #[arg(long, default_value_t = 0.05)]
    pub lambda: f64,
    /// Annealing cycle length in steps
    #[arg(long, default_value_t = 200)]
    pub cycle: usize,
    /// Fraction of each cycle spent ramping beta from 0 to 1
    #[arg(long, default_value_t = 0.5)]
    pub ramp: f64,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 32)]
    pub latent: usize,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
}

#[derive(Args, Debug)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, visible_alias = "output")]
    pub out: PathBuf,
    /// svg or csv; inferred from --out when omitted
    #[arg(long, value_enum)]
    pub format: Option<OutFormat>,
    /// Factor that colours the points; all points share one colour when omitted
    #[arg(long)]
    pub factor: Option<String>,
}

pub enum CliError {
    Usage { message: String, usage: Option<String> },
    Core(lgw_core::Error),
}

impl From<lgw_core::Error> for CliError {
    fn from(e: lgw_core::Error) -> Self {
        match e {
            lgw_core::Error::InvalidArgument(m) => CliError::Usage {
                message: m,
                usage: None,
            },
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage {
            message: message.into(),
            usage: None,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage { .. } => 1,
            CliError::Core(lgw_core::Error::Numerical(_)) => 3,
            CliError::Core(_) => 2,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage { .. } => "usage",
            CliError::Core(e) => e.kind(),
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage { message, .. } => message.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }
}

fn subcommand_usage(name: &str) -> Option<String> {
    let mut cmd = Cli::command();
    cmd.find_subcommand_mut(name)
        .map(|c| c.render_usage().to_string().replacen("Usage: ", "Usage: lgw ", 1))
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("LGW_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::usage(format!("LGW_THREADS must be a non-negative integer, got {raw:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(format!("cannot size thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    let (name, result) = match cli.command {
        Command::Synth(a) => ("synth", commands::synth(a)),
        Command::Metrics(a) => ("metrics", commands::metrics(a)),
        Command::Traverse(a) => ("traverse", commands::traverse(a)),
        Command::Interpolate(a) => ("interpolate", commands::interpolate_cmd(a)),
        Command::Arith(a) => ("arith", commands::arith(a)),
        Command::Tree(a) => ("tree", commands::tree(a)),
        Command::Guided(a) => ("guided", commands::guided(a)),
        Command::TrainVae(a) => ("train-vae", commands::train_vae(a)),
        Command::Project(a) => ("project", commands::project(a)),
    };
    result.map_err(|e| match e {
        CliError::Usage { message, usage: None } => CliError::Usage {
            message,
            usage: subcommand_usage(name),
        },
        other => other,
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let _ = e.print();
            let line = serde_json::json!({"error": "usage", "message": e.kind().to_string(), "exit_code": 1});
            eprintln!("{line}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if let CliError::Usage { usage: Some(u), .. } = &e {
                eprint!("{u}\n\n");
            }
            let line = serde_json::json!({"error": e.kind(), "message": e.message(), "exit_code": e.exit_code()});
            eprintln!("{line}");
            ExitCode::from(e.exit_code())
        }
    }
}
