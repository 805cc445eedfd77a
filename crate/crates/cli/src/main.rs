// `!(x > 0.0)` is used deliberately so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{EvolveArgs, NewtonArgs, SpectralArgs, WaveArgs};

/// Standing waves of the focusing NLS on the 2-torus.
#[derive(Debug, Parser)]
#[command(name = "torus-nls", version)]
pub struct Cli {
    /// JSON run configuration; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "TORUS_NLS_OUT")]
    pub out: Option<PathBuf>,
    /// Disable the thread pool.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Small-amplitude expansion of a wave.
    Stokes {
        #[command(flatten)]
        wave: WaveArgs,
        #[arg(long)]
        a: Option<f64>,
        /// 2 or 3; defaults to the highest available for p.
        #[arg(long)]
        order: Option<u32>,
        /// Output file (defaults to a name inside the output directory).
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Newton continuation in the amplitude.
    Branch {
        #[command(flatten)]
        wave: WaveArgs,
        #[arg(long)]
        a_start: Option<f64>,
        #[arg(long)]
        a_end: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[command(flatten)]
        newton: NewtonArgs,
        /// Output stem (defaults to a name inside the output directory).
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Two-route spectral stability of every point in a wave or branch file.
    Stability {
        input: PathBuf,
        #[command(flatten)]
        spectral: SpectralArgs,
    },
    /// Perturbed time evolution of a wave.
    Evolve {
        input: PathBuf,
        /// Point of a branch file (defaults to the last).
        #[arg(long)]
        index: Option<usize>,
        #[command(flatten)]
        evolve: EvolveArgs,
    },
    /// Constrained minimization of B_c on the power sphere.
    Minimize {
        #[command(flatten)]
        wave: WaveArgs,
        #[arg(long)]
        c: Option<f64>,
        /// Constraint level of the power integral.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_iterations: Option<usize>,
        /// Take p, c, N and sector from this wave and compare the result
        /// with it; the constraint level defaults to the wave's.
        #[arg(long)]
        target: Option<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Merge stability reports into one table.
    Report {
        /// Report files or directories holding `*.stability.json`.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
