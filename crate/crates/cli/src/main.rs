//! `calderon` experiment runner.

mod config;
mod error;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use config::ExperimentConfig;
use error::CliError;

/// Environment variable fixing the worker thread count.
const THREADS_VAR: &str = "CALDERON_THREADS";

#[derive(Parser)]
#[command(name = "calderon", version, about = "Local and fractional Calderón experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON configuration file.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for generated data; overrides `seed` in the file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List the available experiments.
    List,
    /// Print the JSON schema of the configuration file.
    Schema,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|t| *t > 0)
        .ok_or_else(|| CliError::Config(format!("{THREADS_VAR}={raw}: expected a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(format!("{THREADS_VAR}={raw}: {e}")))
}

/// Returns whether every required check passed.
fn run(path: PathBuf, out: Option<PathBuf>, seed: Option<u64>) -> Result<bool, CliError> {
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
    // unknown experiment names are reported before any other validation
    if let Some(name) = value.get("experiment").and_then(|v| v.as_str()) {
        if !experiments::NAMES.contains(&name) {
            return Err(experiments::unknown(name));
        }
    }
    if let Some(seed) = seed {
        value["seed"] = json!(seed);
    }
    let cfg = ExperimentConfig::parse(&value.to_string())?;
    let dir = out
        .or_else(|| cfg.output_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.experiment));
    configure_threads()?;
    let result = experiments::run(&cfg)?;
    let passed = result.passed();
    let summary = json!({
        "experiment": cfg.experiment,
        "description": experiments::describe(&cfg.experiment),
        "seed": cfg.seed,
        "passed": passed,
        "checks": result.checks,
        "notes": result.notes,
        "config": cfg,
    });
    output::write_all(&dir, &result, summary)?;
    for c in &result.checks {
        let status = match (c.passed, c.informational) {
            (true, _) => "PASS",
            (false, true) => "INFO",
            (false, false) => "FAIL",
        };
        println!("{status} {}: {:.6e} ({})", c.name, c.value, c.condition);
    }
    for n in &result.notes {
        println!("note: {n}");
    }
    println!("results in {}", dir.display());
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::List => {
            for name in experiments::NAMES {
                println!("{name:<20} {}", experiments::describe(name));
            }
            Ok(true)
        }
        Command::Schema => {
            println!("{}", serde_json::to_string_pretty(&config::schema()).expect("schema serialises"));
            Ok(true)
        }
        Command::Run { config, out, seed } => run(config, out, seed),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}
