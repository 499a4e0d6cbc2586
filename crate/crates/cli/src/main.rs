//! `prefadapt` command-line tool.
//!
//! Exit status: 0 success, 1 invalid arguments or data, 2 I/O or file
//! format failure, 3 a checked invariant did not hold.

mod commands;
mod error;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use prefadapt::AdaptConfig;

use crate::error::{CliError, Exit};

#[derive(Debug, Parser)]
#[command(
    name = "prefadapt",
    version,
    about = "Preference adaptation of query embeddings",
    args_override_self = true
)]
pub struct Cli {
    /// Machine mode: print a single JSON document to stdout and nothing else.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compare the analytic gradient with central finite differences on random instances.
    Gradcheck(GradcheckArgs),
    /// Adapt one query embedding to a set of preference pairs.
    Adapt(AdaptArgs),
    /// Accuracy of original, positive-only and BT-adapted queries over training sizes.
    Eval(EvalArgs),
    /// Learning curve: writes curve.json and curve.csv to a directory.
    Curve(CurveArgs),
    /// Write a synthetic corpus, preference pairs and the hidden ground truth.
    Simulate(SimulateArgs),
    /// Sample preference pairs from the high and low score bands of a corpus.
    PairsFromScores(PairsFromScoresArgs),
    /// Run the HTTP profile service until interrupted.
    Serve(ServeArgs),
}

/// Optimizer flags; unset flags keep the configured or built-in default.
#[derive(Debug, Clone, Args)]
pub struct AdaptFlags {
    /// Learning rate (>= 0).
    #[arg(long, allow_negative_numbers = true)]
    pub epsilon: Option<f64>,
    /// Gradient steps per adaptation (>= 1).
    #[arg(long)]
    pub steps: Option<usize>,
    /// Similarity multiplier inside the logistic (> 0).
    #[arg(long, allow_negative_numbers = true)]
    pub temperature: Option<f64>,
    /// Project onto the unit sphere after every step.
    #[arg(long, value_name = "BOOL")]
    pub renormalize: Option<bool>,
}

impl AdaptFlags {
    pub fn apply(&self, mut cfg: AdaptConfig) -> AdaptConfig {
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = self.temperature {
            cfg.temperature = v;
        }
        if let Some(v) = self.renormalize {
            cfg.renormalize = v;
        }
        cfg
    }
}

/// Embedding table location.
#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    /// PEMB matrix file.
    #[arg(long, value_name = "PATH")]
    pub embeddings: PathBuf,
    /// JSONL metadata sidecar [default: the matrix path with a .jsonl extension].
    #[arg(long, value_name = "PATH")]
    pub meta: Option<PathBuf>,
}

impl CorpusArgs {
    pub fn meta_path(&self) -> PathBuf {
        self.meta
            .clone()
            .unwrap_or_else(|| self.embeddings.with_extension("jsonl"))
    }
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Embedding dimensions, comma separated.
    #[arg(long = "dim", value_delimiter = ',', default_value = "2,16,64,768")]
    pub dims: Vec<usize>,
    /// Random instances per dimension.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Similarity multiplier inside the logistic.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub temperature: f64,
    /// Run trials on one thread.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdaptVariant {
    /// Gradient descent on the pairwise preference loss.
    Bt,
    /// Shift toward the mean of the preferred items only.
    Positive,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Preference pairs JSONL.
    #[arg(long, value_name = "PATH")]
    pub pairs: PathBuf,
    /// Corpus id of the query embedding to adapt.
    #[arg(long)]
    pub query_id: String,
    #[arg(long, value_enum, default_value_t = AdaptVariant::Bt)]
    pub variant: AdaptVariant,
    #[command(flatten)]
    pub adapt: AdaptFlags,
    /// Output JSON path [default: stdout].
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct ProtocolArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Preference pairs JSONL forming the pool.
    #[arg(long, value_name = "PATH")]
    pub pairs: PathBuf,
    /// Corpus id of the base query embedding.
    #[arg(long)]
    pub query_id: String,
    /// Random training draws per size.
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pairs held out for evaluation [default: 2000 when the pool allows, else 20% of it].
    #[arg(long)]
    pub eval_size: Option<usize>,
    /// Evaluate cells on one thread.
    #[arg(long)]
    pub sequential: bool,
    #[command(flatten)]
    pub adapt: AdaptFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// Training-set sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "50")]
    pub sizes: Vec<usize>,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    pub format: FormatArg,
    /// Report path [default: stdout].
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// Training-set sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0,1,5,10,25,50")]
    pub sizes: Vec<usize>,
    /// Directory receiving curve.json and curve.csv.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    /// Corpus size (>= 2).
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    /// Number of labelled pairs.
    #[arg(long = "pairs", default_value_t = 3000)]
    pub n_pairs: usize,
    /// Sharpness of the simulated annotators.
    #[arg(long, allow_negative_numbers = true, default_value_t = prefadapt::simulator::DEFAULT_GEN_TEMPERATURE)]
    pub gen_temperature: f64,
    /// Cosine between the written query and the hidden direction.
    #[arg(long, default_value_t = 0.2, allow_negative_numbers = true)]
    pub alignment: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving corpus.pemb, corpus.jsonl, pairs.jsonl and truth.json.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PairsFromScoresArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Fraction of rows, by descending score, forming the winner band.
    #[arg(long, default_value_t = 0.25)]
    pub high: f64,
    /// Fraction of rows, by ascending score, forming the loser band.
    #[arg(long, default_value_t = 0.25)]
    pub low: f64,
    /// Number of pairs to draw.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output pairs JSONL.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML configuration file; PREFADAPT_* variables override it and flags override both.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Address to bind; port 0 picks a free port.
    #[arg(long)]
    pub listen: Option<SocketAddr>,
    #[arg(long, value_name = "PATH")]
    pub corpus_matrix: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub corpus_meta: Option<PathBuf>,
    /// Directory for profile logs; without it profiles live in memory only.
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    /// Checkpoint a profile after this many logged events (0 = never).
    #[arg(long)]
    pub compact_every: Option<u64>,
    #[command(flatten)]
    pub adapt: AdaptFlags,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(Exit::Validation as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let default_level = if matches!(cli.command, Command::Serve(_)) {
        "info"
    } else {
        "warn"
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default_level)),
        )
        .with_writer(std::io::stderr)
        .init();

    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}

fn report(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    e.exit_code()
}
