//! `tfhp`: config-driven experiments for time-changed Hawkes processes.
//!
//! Exit codes: 0 all gates pass, 1 a gate failed, 2 config error, 3 numerical failure.

mod commands;
mod config;
mod failure;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Outcome;
use crate::config::ExperimentConfig;
use crate::failure::Failure;

#[derive(Parser)]
#[command(name = "tfhp", version, about = "Tempered and generalized fractional Hawkes experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for the CSV and JSON outputs.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// Worker threads for Monte Carlo.
    #[arg(long, global = true, env = "THP_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Tabulate the three-parameter Mittag-Leffler function and the clock transform.
    MlEval,
    /// Classical Hawkes moments against simulation.
    Hp,
    /// Tempered stable clock moments against simulation.
    Tfhp,
    /// General clock moments against simulation.
    Gfhp,
    /// Joint transforms of the inverse clock against simulation.
    LemmaCheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::MlEval => "ml-eval",
            Command::Hp => "hp",
            Command::Tfhp => "tfhp",
            Command::Gfhp => "gfhp",
            Command::LemmaCheck => "lemma-check",
        }
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::Output { path: path.display().to_string(), msg: e.to_string() })
}

fn run(cli: &Cli) -> Result<bool, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| Failure::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Failure::Config(format!("--threads: {e}")))?;
    }
    let outcome: Outcome = match cli.command {
        Command::MlEval => commands::ml_eval(&cfg)?,
        Command::Hp => commands::hp(&cfg)?,
        Command::Tfhp => commands::tfhp(&cfg)?,
        Command::Gfhp => commands::gfhp(&cfg)?,
        Command::LemmaCheck => commands::lemma_check(&cfg)?,
    };
    let stem = cli.command.name();
    std::fs::create_dir_all(&cli.out_dir)
        .map_err(|e| Failure::Output { path: cli.out_dir.display().to_string(), msg: e.to_string() })?;
    let csv = cfg.output.csv.clone().unwrap_or_else(|| format!("{stem}.csv"));
    let json = cfg.output.json.clone().unwrap_or_else(|| format!("{stem}.json"));
    let summary = serde_json::to_string_pretty(&outcome.summary).expect("summary serializes");
    write(&cli.out_dir.join(csv), &outcome.csv)?;
    write(&cli.out_dir.join(json), &(summary + "\n"))?;
    println!("{stem}: {}", if outcome.pass { "pass" } else { "FAIL" });
    Ok(outcome.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(failure) => {
            eprintln!("tfhp {}: {failure}", cli.command.name());
            ExitCode::from(failure.exit_code())
        }
    }
}
