//! `w1ot` command line: toy data generation, fitting, transporting,
//! evaluation, audits, exact oracle runs, timing sweeps and SVG plots.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 usage or validation error.
//! Machine output goes to declared files or stdout; logs go to stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use w1ot_cli::{commands, ToyKind};

#[derive(Parser)]
#[command(name = "w1ot", version, about = "Wasserstein-1 neural optimal transport toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a toy source/target pair as CSV plus metadata.
    Toygen {
        #[arg(long)]
        dataset: ToyKind,
        /// Rows per side (circles: must be even).
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Coordinate noise for circles/moons (defaults: 0.02 / 0.05).
        #[arg(long)]
        noise: Option<f64>,
        /// Output directory for source.csv, target.csv, meta.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the two-stage transport map and write a checkpoint.
    Fit {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// JSON run configuration; defaults used when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint output path (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Directory for dual_history.csv and gan_history.csv.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Apply a fitted transport map to a CSV of samples.
    Transport {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metric report between a prediction and a target sample.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        target: PathBuf,
        /// Also report the identity baseline (source vs target).
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Lipschitz ratio, gradient-norm stats and monotonicity rate of a model.
    Audit {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        pairs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Exact W1 between two equal-size samples (plus dual gap with a model).
    Oracle {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Write the optimal assignment as CSV (source_index,target_index).
        #[arg(long)]
        assignment: Option<PathBuf>,
    },
    /// Dual-stage training time across data dimensionalities.
    Bench {
        /// Comma-separated list of feature dimensions.
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[arg(long)]
        iters: usize,
        /// Rows per synthetic Gaussian side.
        #[arg(long, default_value_t = 1024)]
        n: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        /// CSV output path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SVG scatter plot of 2-D source/target (and optionally prediction).
    Plot {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Draw transport rays from source row i to pred row i.
        #[arg(long, requires = "pred")]
        rays: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Toygen { dataset, n, seed, noise, out } => {
            commands::toygen::run(dataset, n, seed, noise, &out)
        }
        Cmd::Fit { source, target, config, out, history } => {
            commands::fit::run(&source, &target, config.as_deref(), &out, history.as_deref())
        }
        Cmd::Transport { model, input, out } => commands::transport::run(&model, &input, &out),
        Cmd::Evaluate { pred, target, source, config, out } => {
            commands::evaluate::run(&pred, &target, source.as_deref(), config.as_deref(), &out)
        }
        Cmd::Audit { model, data, pairs, seed } => commands::audit::run(&model, &data, pairs, seed),
        Cmd::Oracle { source, target, model, assignment } => {
            commands::oracle::run(&source, &target, model.as_deref(), assignment.as_deref())
        }
        Cmd::Bench { dims, iters, n, config, out } => {
            commands::bench::run(&dims, iters, n, config.as_deref(), out.as_deref())
        }
        Cmd::Plot { source, target, pred, rays, out } => {
            commands::plot_cmd::run(&source, &target, pred.as_deref(), rays, &out)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
