mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Failure, EXIT_CONFIG};
use config::RunConfig;

#[derive(Parser)]
#[command(name = "nnem", version, about = "Neural network element solver for 2D elliptic problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `train.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train on one mesh and write a report, loss history and checkpoint.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Convergence study over `study.sizes` for each of `study.methods`.
    Study {
        #[command(flatten)]
        common: Common,
    },
    /// Classical FEM solve on the configured mesh.
    Baseline {
        #[command(flatten)]
        common: Common,
    },
    /// Mesh, partition of unity, quadrature and gradient self-tests.
    Check {
        #[command(flatten)]
        common: Common,
    },
    /// Combines study CSV files into one aligned table.
    Table {
        files: Vec<PathBuf>,
    },
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::from_file(&common.config).map_err(|e| Failure::config(e.0))?;
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &common.out {
        cfg.set_output_dir(out.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Solve { common, resume } => commands::solve(&load(&common)?, resume.as_deref()),
        Command::Study { common } => commands::study(&load(&common)?),
        Command::Baseline { common } => commands::baseline(&load(&common)?),
        Command::Check { common } => commands::check(&load(&common)?),
        Command::Table { files } => commands::table(&files),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}
