use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use sacfem::cli::{execute, parse_config_with, Command, Overrides, CONFIG_HELP};

/// Finite element simulation and convergence studies for the stochastic
/// Allen-Cahn equation.
#[derive(Debug, Parser)]
#[command(name = "sacfem", version, after_help = CONFIG_HELP)]
struct Args {
    /// simulate | converge-space | converge-time | operator-check | regularity
    command: Command,

    /// Config file; its `command` key, if present, is overridden.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Monte Carlo samples.
    #[arg(long)]
    samples: Option<u64>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads, 0 for one per core.
    #[arg(long)]
    workers: Option<usize>,

    /// Also write plot.txt.
    #[arg(long)]
    emit_plot: bool,
}

fn run(args: Args) -> sacfem::Result<()> {
    let text = match &args.config {
        Some(path) => std::fs::read_to_string(path).map_err(|source| sacfem::Error::Io {
            path: path.clone(),
            source,
        })?,
        None => String::new(),
    };
    let overrides = Overrides {
        command: Some(args.command),
        seed: args.seed,
        samples: args.samples,
        out: args.out,
        workers: args.workers,
        emit_plot: args.emit_plot,
    };
    let cfg = parse_config_with(&text, &overrides)?;
    let outcome = execute(&cfg)?;
    for path in &outcome.artifacts {
        println!("wrote {}", path.display());
    }
    if let Some(slope) = outcome.slope {
        match outcome.predicted {
            Some(p) => println!("slope {slope:.4} (predicted {p:.4})"),
            None => println!("slope {slope:.4}"),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
