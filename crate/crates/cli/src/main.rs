use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use degsemi_cli::{list_experiments, run_config, RunOptions};

/// Run degenerate-semigroup convergence experiments from TOML configs.
#[derive(Parser)]
#[command(name = "degsemi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment configuration.
    Run {
        config: PathBuf,
        /// Output directory (overrides DEGSEMI_OUT and the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write SVG plots next to the CSV files.
        #[arg(long)]
        plot: bool,
        /// Worker threads for the parallel parts.
        #[arg(long)]
        threads: Option<usize>,
        /// Seed for probes and random operators.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List experiment kinds and their keys.
    List,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match cli.command {
        Command::List => {
            print!("{}", list_experiments());
            ExitCode::SUCCESS
        }
        Command::Run {
            config,
            out,
            plot,
            threads,
            seed,
        } => {
            if let Some(n) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("cannot configure {n} threads: {e}");
                    return ExitCode::from(2);
                }
            }
            match run_config(&config, &RunOptions { out, plot, seed }) {
                Ok(report) => {
                    println!("wrote {}", report.out_dir.display());
                    for a in &report.manifest.assertions {
                        println!("{} {} ({})", if a.passed { "PASS" } else { "FAIL" }, a.label, a.detail);
                    }
                    match report.first_failure() {
                        None => ExitCode::SUCCESS,
                        Some(a) => {
                            eprintln!("experiment failed: assertion {} ({})", a.label, a.detail);
                            ExitCode::from(1)
                        }
                    }
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(e.exit_code())
                }
            }
        }
    }
}
