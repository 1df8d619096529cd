use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tdamc::{validate, Error, Pipeline, RunConfig, Stage};

#[derive(Parser)]
#[command(
    name = "tdamc",
    version,
    about = "Top-down disclosure avoidance with approximate Monte Carlo uncertainty"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run pipeline stages.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        stage: Stage,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; defaults to all cores.
        #[arg(long)]
        workers: Option<usize>,
        /// Overrides the output directory in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check an artifact directory and print a JSON report.
    Validate { dir: PathBuf },
}

fn run(
    config: PathBuf,
    stage: Stage,
    seed: Option<u64>,
    workers: Option<usize>,
    out: Option<PathBuf>,
) -> Result<(), Error> {
    let cfg = RunConfig::load(&config)?;
    let out = out
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| Error::Config("no output directory: pass --out or set `out`".into()))?;
    let seed = seed.unwrap_or(cfg.seed);
    Pipeline::new(cfg, out, seed, workers)?.run(stage)
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            stage,
            seed,
            workers,
            out,
        } => match run(config, stage, seed, workers, out) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
        Command::Validate { dir } => match validate::validate(&dir) {
            Ok(report) => {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report).expect("report serializes")
                );
                if let Err(e) = tdamc::io::write_json(&dir.join("validation.json"), &report) {
                    eprintln!("warning: {e}");
                }
                if report.passed {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(4)
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(4)
            }
        },
    }
}
