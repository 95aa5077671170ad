use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use es_explore::config::RunConfig;
use es_explore::runner;
use es_explore::Error;

#[derive(Parser)]
#[command(
    name = "es-explore",
    about = "Evolution strategies with population-based novelty-driven exploration",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the run described by a TOML config file
    Run {
        /// Path to the run config (see README for the format)
        config: PathBuf,
        /// Override the config's run_seed
        #[arg(long)]
        seed: Option<u64>,
        /// Override the worker count
        #[arg(long)]
        workers: Option<usize>,
        /// Dump per-step trajectories of each generation's policy
        #[arg(long)]
        record: bool,
    },
    /// Aggregate completed runs into a median + bootstrap-CI table
    Compare {
        /// Run directories (each holding a summary.json)
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Seed of the bootstrap resampler
        #[arg(long, default_value_t = 0)]
        bootstrap_seed: u64,
    },
    /// Print the per-generation final-position CSV of a walker run
    ExportOverhead {
        run_dir: PathBuf,
        /// Write to a file instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            seed,
            workers,
            record,
        } => {
            let mut config = RunConfig::load(&config)?;
            if let Some(seed) = seed {
                config.run_seed = seed;
            }
            if let Some(workers) = workers {
                config.workers = Some(workers);
            }
            if record {
                config.record = true;
            }
            config.validate()?;
            let record = runner::run(&config)?;
            println!(
                "{} on {} (seed {}): best mean reward {:.4} over {} generations in {:.1}s -> {}",
                record.summary.algorithm,
                record.summary.env,
                record.summary.run_seed,
                record.summary.best_mean_reward,
                record.summary.generations,
                record.summary.wall_seconds,
                record.output_dir.display()
            );
            Ok(())
        }
        Command::Compare {
            dirs,
            bootstrap_seed,
        } => {
            let (rows, absent) = runner::compare(&dirs, bootstrap_seed)?;
            println!(
                "{:<10} {:<18} {:>4}  {:>12}  {:>12}  {:>12}",
                "algorithm", "env", "runs", "median", "ci_lo", "ci_hi"
            );
            for row in rows {
                println!(
                    "{:<10} {:<18} {:>4}  {:>12.4}  {:>12.4}  {:>12.4}",
                    row.algorithm, row.env, row.runs, row.median_best_reward, row.ci_lo, row.ci_hi
                );
            }
            for dir in absent {
                eprintln!("absent: {} has no summary.json", dir.display());
            }
            Ok(())
        }
        Command::ExportOverhead { run_dir, out } => {
            let csv = runner::export_overhead(&run_dir)?;
            match out {
                Some(path) => {
                    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
                }
                None => print!("{csv}"),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code())
        }
    }
}
