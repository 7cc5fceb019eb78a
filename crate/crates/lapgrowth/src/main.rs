use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lapgrowth::cli::{run, Command, RunOptions};

/// Planar orthogonal polynomials for a point charge insertion.
#[derive(Debug, Parser)]
#[command(name = "lapgrowth", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// JSON or TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    extended_precision: bool,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write quadrature nodes and weights per degree.
    #[arg(long)]
    dump_grid: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Some(k) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let opts = RunOptions {
        command: args.command,
        config: args.config,
        out: args.out,
        threads: args.threads,
        extended_precision: args.extended_precision,
        seed: args.seed,
        dump_grid: args.dump_grid,
    };
    match run(&opts) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
