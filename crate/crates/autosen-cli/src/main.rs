//! Command-line driver for the AutoSen pipeline.
//!
//! Subcommands cover the full workflow: synthesize or ingest CSI, sanitize
//! phase, pretrain the cross-modal autoencoder, calibrate on a few labeled
//! shots, evaluate, and sweep ablations. Exit codes: 0 success, 2 config
//! error, 3 missing input, 4 numerical failure, 1 anything else.

mod commands;
mod config;

use std::path::PathBuf;
use std::process;

use clap::{Parser, Subcommand};

use config::{CliError, RunConfig};

#[derive(Parser)]
#[command(name = "autosen", about = "cross-modal CSI autoencoder pipeline", version)]
struct Cli {
    /// TOML config file (falls back to the AUTOSEN_CONFIG env var, then defaults)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the root RNG seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate synthetic labeled and unlabeled CSI caches
    Synth,
    /// Sanitize cached phase, or ingest and sanitize a CSV recording
    Sanitize,
    /// Pretrain the autoencoder on the unlabeled cache
    Pretrain,
    /// Calibrate the classifier on the few-shot split
    Fewshot,
    /// Train the fully supervised baseline
    Fullsup,
    /// Evaluate the checkpoint on the held-out split
    Eval,
    /// Sweep modes x shots x seeds and tabulate accuracy
    Ablate,
    /// Sweep latent sizes for the cross-modal mode
    SweepLatent,
    /// Verify analytic gradients against finite differences
    Gradcheck {
        /// Corrupt one gradient to confirm the checker detects it
        #[arg(long, hide = true)]
        self_test_corrupt: bool,
    },
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Cmd::Gradcheck { self_test_corrupt } = cli.cmd {
        return commands::cmd_gradcheck(self_test_corrupt);
    }
    let cfg: RunConfig = config::load(cli.config.as_deref(), cli.seed, cli.out.as_deref())?;
    match cli.cmd {
        Cmd::Synth => commands::cmd_synth(&cfg),
        Cmd::Sanitize => commands::cmd_sanitize(&cfg),
        Cmd::Pretrain => commands::cmd_pretrain(&cfg),
        Cmd::Fewshot => commands::cmd_fewshot(&cfg),
        Cmd::Fullsup => commands::cmd_fullsup(&cfg),
        Cmd::Eval => commands::cmd_eval(&cfg),
        Cmd::Ablate => commands::cmd_ablate(&cfg),
        Cmd::SweepLatent => commands::cmd_sweep_latent(&cfg),
        Cmd::Gradcheck { .. } => unreachable!("handled above"),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {}", e);
        process::exit(e.exit_code());
    }
}
