use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use dirlin::Error;

mod commands;

#[derive(Debug, Parser)]
#[command(name = "dirlin", version, about = "Bayesian nonparametric clustering of directional-linear data")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// JSON configuration (run config, or a synthetic spec for `generate`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed from the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for chains.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a synthetic SPN or SWG mixture.
    Generate,
    /// Fit the DP mixture and write posterior draws.
    Fit {
        /// Observation CSV; defaults to `io.input` of the config.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Fit a mechanism model to grouped patterns.
    HdpFit {
        /// Observation CSV with a `pattern_id` column.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Fraction of patterns used for training.
        #[arg(long, default_value_t = 0.6)]
        split: f64,
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
    },
    /// Point-estimate partition from posterior draws.
    Consensus {
        /// JSON-lines draws from `fit` or `hdp-fit`.
        #[arg(long)]
        draws: PathBuf,
    },
    /// Compare a partition against the truth.
    Eval {
        #[arg(long)]
        partition: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Segment a PNG image.
    Segment {
        #[arg(long)]
        image: PathBuf,
    },
    /// Log-likelihood of each pattern under one mechanism model.
    Loglik {
        #[arg(long)]
        patterns: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        mc_draws: Option<usize>,
    },
    /// Log likelihood ratio of each pattern between two mechanism models.
    Lr {
        #[arg(long)]
        patterns: PathBuf,
        #[arg(long)]
        model1: PathBuf,
        #[arg(long)]
        model2: PathBuf,
        #[arg(long)]
        mc_draws: Option<usize>,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Domain(_) | Error::Unsupported(_) => 2,
        Error::NotPositiveDefinite { .. } | Error::Numeric(_) | Error::State(_) => 3,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Image(_) => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DIRLIN_LOG", "warn")).init();
    let cli = Cli::parse();
    let started = SystemTime::now();
    let clock = Instant::now();
    let g = &cli.global;
    let result = match &cli.command {
        Command::Generate => commands::generate(g),
        Command::Fit { data } => commands::fit(g, data.as_deref()),
        Command::HdpFit { data, split, split_seed } => commands::hdp_fit(g, data.as_deref(), *split, *split_seed),
        Command::Consensus { draws } => commands::consensus(g, draws),
        Command::Eval { partition, truth } => commands::eval(g, partition, truth),
        Command::Segment { image } => commands::segment(g, image),
        Command::Loglik { patterns, model, mc_draws } => commands::loglik(g, patterns, model, *mc_draws),
        Command::Lr { patterns, model1, model2, mc_draws } => commands::lr(g, patterns, model1, model2, *mc_draws),
    };
    let code = match &result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(e)
        }
    };
    if let Some(out) = &g.out {
        if out.is_dir() {
            write_run_log(out, started, clock.elapsed().as_secs_f64(), code);
        }
    }
    ExitCode::from(code)
}

/// Timestamps go here and nowhere else, so every other output is reproducible.
fn write_run_log(out: &std::path::Path, started: SystemTime, elapsed: f64, code: u8) {
    let unix = started.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let args: Vec<String> = std::env::args().collect();
    let text = format!(
        "command: {}\nversion: {}\nstarted_unix: {unix}\nelapsed_seconds: {elapsed:.3}\nexit_code: {code}\n",
        args.join(" "),
        env!("CARGO_PKG_VERSION")
    );
    if let Err(e) = std::fs::write(out.join("run.log"), text) {
        log::warn!("could not write run.log: {e}");
    }
}
