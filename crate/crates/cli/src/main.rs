//! `fragaudit`: train sweeps, compute measures, audit their fragility, and run
//! the Exp++ and evidence experiments from one JSON config.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fragaudit::Error;

use commands::{Ctx, Split, TransformOp};
use output::Out;

#[derive(Parser)]
#[command(name = "fragaudit", version, about)]
struct Cli {
    /// JSON configuration document (required).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Added to every seed in the config.
    #[arg(long, global = true, default_value_t = 0)]
    seed_offset: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one grid point.
    Train {
        /// Position in the sweep grid.
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Train every grid point.
    Sweep,
    /// Compute measures for every stored checkpoint.
    Measure,
    /// Score measure fragility over the stored records.
    Audit,
    /// Train with per-epoch measure snapshots; report T_int and slopes.
    Temporal,
    /// Resume just after interpolation under changed hyperparameters.
    Hysteresis,
    /// Exp++ schedule experiments.
    Exppp {
        #[command(subcommand)]
        action: ExpppAction,
    },
    /// Marginal-likelihood PAC-Bayes bound.
    Evidence {
        #[command(subcommand)]
        action: EvidenceAction,
    },
    /// Write transformed dataset cache files.
    Transform {
        #[arg(long, global = true, value_enum, default_value_t = Split::Train)]
        split: Split,
        #[command(subcommand)]
        op: TransformOp,
    },
}

#[derive(Subcommand)]
enum ExpppAction {
    /// Check run equivalence for the configured factors.
    Verify,
    /// Measure inflation across a grid of factors.
    Demo,
}

#[derive(Subcommand)]
enum EvidenceAction {
    /// Bound from given inputs, or from a consistency-mass estimate.
    Bound {
        /// When no prior draw fits, fall back to the pessimistic 3/K mass.
        #[arg(long)]
        rule_of_three: bool,
    },
    /// Bound versus sampled-hypothesis error over repeated training sets.
    Experiment,
}

fn run(cli: Cli) -> fragaudit::Result<i32> {
    let path = cli
        .config
        .ok_or_else(|| Error::InvalidConfig("--config is required".into()))?;
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("--jobs: {e}")))?;
    }
    let loaded = config::load(&path, cli.seed_offset)?;
    let root = cli.out.unwrap_or_else(|| PathBuf::from(&loaded.cfg.output_dir));
    let ctx = Ctx {
        out: Out {
            root,
            config_hash: loaded.hash,
        },
        cfg: loaded.cfg,
        seed_offset: cli.seed_offset,
    };
    match cli.command {
        Command::Train { index } => ctx.train(index),
        Command::Sweep => ctx.sweep(),
        Command::Measure => ctx.measure(),
        Command::Audit => ctx.audit(),
        Command::Temporal => ctx.temporal(),
        Command::Hysteresis => ctx.hysteresis(),
        Command::Exppp { action: ExpppAction::Verify } => ctx.exppp_verify(),
        Command::Exppp { action: ExpppAction::Demo } => ctx.exppp_demo(),
        Command::Evidence {
            action: EvidenceAction::Bound { rule_of_three },
        } => ctx.evidence_bound(rule_of_three),
        Command::Evidence {
            action: EvidenceAction::Experiment,
        } => ctx.evidence_experiment(),
        Command::Transform { split, op } => ctx.transform(&op, split),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            let doc = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{doc}");
            ExitCode::FAILURE
        }
    }
}
