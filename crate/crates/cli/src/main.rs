//! clicksim: the operator surface. One binary, one subcommand per workflow,
//! a reproducibility manifest for every run that writes artifacts.
//!
//! Exit codes: 0 success, 1 usage, 2 data or protocol error, 3 transport.

mod ops;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "clicksim",
    version,
    about = "Interactive-segmentation simulator: synthetic corpora, oracle trajectories, \
             cold-start datasets, rewards, toy GRPO training"
)]
struct Cli {
    /// Config file (JSON). Falls back to $CLICKSIM_CONFIG, then defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; every stage draws from named substreams of it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic sample corpus (images + reference masks).
    GenSynthetic {
        /// Number of samples.
        #[arg(long)]
        n: usize,
        /// Output directory (samples.jsonl, store/, manifest.json).
        #[arg(long)]
        out: PathBuf,
    },
    /// Run oracle-policy episodes over a corpus and record trajectories.
    Simulate {
        /// samples.jsonl from gen-synthetic.
        #[arg(long)]
        samples: PathBuf,
        /// disc | seeded | remote[:URL]; defaults to the config's segmenter.
        #[arg(long)]
        segmenter: Option<String>,
        /// Blob store of the samples file; defaults to its sibling "store".
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the cold-start dataset: gold + reflective records, filtered.
    BuildDataset {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        segmenter: Option<String>,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score recorded trajectories with the five-component reward.
    EvalRewards {
        /// trajectories.jsonl from simulate.
        #[arg(long)]
        trajectories: PathBuf,
        /// samples.jsonl naming the reference masks.
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        segmenter: Option<String>,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// IoU/DSC between two mask PNGs.
    Score {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Optional directory for a manifest of this run.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the two-parameter toy policy with group-relative updates.
    TrainToy {
        /// Number of synthetic blob tasks.
        #[arg(long, default_value_t = 10)]
        tasks: usize,
        #[arg(long, default_value_t = 200)]
        iters: usize,
        #[arg(long, default_value_t = 4)]
        group_size: usize,
        #[arg(long, default_value_t = 0.05)]
        step_size: f64,
        /// Output directory (curve.csv, result.json, manifest.json).
        #[arg(long)]
        out: PathBuf,
    },
    /// Export a trajectory's per-step observation overlays as PNG frames.
    Render {
        /// trajectories.jsonl or dataset.jsonl.
        #[arg(long)]
        trajectory: PathBuf,
        /// Record id; defaults to the first record in the file.
        #[arg(long)]
        id: Option<String>,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the config's segmenter over the HTTP protocol on loopback.
    ServeMockSegmenter {
        /// 0 binds an ephemeral port (printed on startup).
        #[arg(long, default_value_t = 0)]
        port: u16,
    },
    /// Recompute summary tables from a dataset file.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        /// Optional directory for stats.json and a manifest.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successful exits, not usage errors.
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    let ctx = match ops::Context::load(cli.config.as_deref(), cli.seed) {
        Ok(ctx) => ctx,
        Err(e) => return e.report(),
    };
    let result = match cli.command {
        Command::GenSynthetic { n, out } => ops::gen_synthetic(&ctx, n, &out),
        Command::Simulate { samples, segmenter, store, out } => {
            ops::simulate(&ctx, &samples, segmenter.as_deref(), store.as_deref(), &out)
        }
        Command::BuildDataset { samples, segmenter, store, out } => {
            ops::build_dataset(&ctx, &samples, segmenter.as_deref(), store.as_deref(), &out)
        }
        Command::EvalRewards { trajectories, gt, segmenter, store, out } => ops::eval_rewards(
            &ctx,
            &trajectories,
            &gt,
            segmenter.as_deref(),
            store.as_deref(),
            &out,
        ),
        Command::Score { pred, gt, out } => ops::score(&ctx, &pred, &gt, out.as_deref()),
        Command::TrainToy { tasks, iters, group_size, step_size, out } => {
            ops::train_toy(&ctx, tasks, iters, group_size, step_size, &out)
        }
        Command::Render { trajectory, id, store, out } => {
            ops::render(&ctx, &trajectory, id.as_deref(), store.as_deref(), &out)
        }
        Command::ServeMockSegmenter { port } => ops::serve_mock_segmenter(&ctx, port),
        Command::Stats { dataset, out } => ops::stats(&ctx, &dataset, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}
