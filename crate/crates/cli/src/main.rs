mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "sirl", version, about = "Learn trajectory representations from similarity queries")]
struct Cli {
    /// Experiment configuration (TOML); missing keys keep the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// gridrobot or armlite.
    #[arg(long, global = true)]
    env: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; falls back to $SIRL_OUTPUT_ROOT, then the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Trajectory pool written by gen-data; defaults to <out>/pool.manifest.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the trajectory pool.
    GenData {
        /// ArmLite pool size.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train a representation from N simulated (or recorded) queries.
    TrainRep(TrainRep),
    /// Fit a reward model on M preference labels.
    TrainReward(TrainReward),
    /// Feature prediction error of an embedding.
    EvalFpe(EmbeddingArg),
    /// Test preference accuracy of an embedding.
    EvalTpa(EvalTpa),
    /// Run a cached grid of FPE and TPA evaluations.
    Sweep,
    /// Nearest and farthest pool trajectories for a query.
    Retrieve(Retrieve),
    /// Serve the labeling interface API.
    Serve(Serve),
    /// Print the resolved configuration.
    Config,
}

#[derive(Debug, Args)]
struct TrainRep {
    /// sirl, sirl+vae, vae, singlepref, multipref-K, or random.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Warm-start SIRL from a VAE encoder.
    #[arg(long)]
    pretrain: bool,
    /// Recorded similarity answers (JSON lines) instead of simulated ones.
    #[arg(long)]
    answers: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EmbeddingArg {
    /// Embedding checkpoint; defaults to <out>/embedding.ckpt.
    #[arg(long)]
    embedding: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Freezing {
    #[arg(long, conflicts_with = "unfrozen")]
    frozen: bool,
    #[arg(long)]
    unfrozen: bool,
}

impl Freezing {
    fn choice(&self) -> Option<bool> {
        match (self.frozen, self.unfrozen) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        }
    }
}

#[derive(Debug, Args)]
struct TrainReward {
    #[command(flatten)]
    embedding: EmbeddingArg,
    #[arg(long)]
    m: Option<usize>,
    #[command(flatten)]
    freezing: Freezing,
    /// Recorded preference labels (JSON lines) instead of simulated ones.
    #[arg(long)]
    labels: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalTpa {
    #[command(flatten)]
    embedding: EmbeddingArg,
    #[arg(long)]
    m: Option<usize>,
    #[command(flatten)]
    freezing: Freezing,
}

#[derive(Debug, Args)]
struct Retrieve {
    #[command(flatten)]
    embedding: EmbeddingArg,
    /// Pool index of the query trajectory.
    #[arg(long)]
    query: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
}

#[derive(Debug, Args)]
struct Serve {
    /// Falls back to $SIRL_PORT, then the config.
    #[arg(long)]
    port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code as u8)
        }
    }
}
