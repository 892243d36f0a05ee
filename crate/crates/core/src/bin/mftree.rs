use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mftree::harness::{self, ConfigError, Settings};

#[derive(Parser)]
#[command(
    name = "mftree",
    version,
    about = "Multi-fidelity tree search experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a budget/seed sweep and write results under the output directory.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        function: Option<String>,
        #[arg(long)]
        algo: Option<String>,
        /// Comma-separated budgets.
        #[arg(long)]
        budget: Option<String>,
        /// `a..b` (inclusive) or a comma-separated list.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        sigma: Option<String>,
        #[arg(long)]
        rho_max: Option<String>,
        /// A number or `auto`.
        #[arg(long)]
        nu_max: Option<String>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn settings(cmd: &Command) -> Result<Settings, ConfigError> {
    let Command::Run {
        config,
        function,
        algo,
        budget,
        seeds,
        sigma,
        rho_max,
        nu_max,
        out_dir,
    } = cmd;
    let mut s = match config {
        Some(path) => Settings::parse(&std::fs::read_to_string(path)?)?,
        None => Settings::default(),
    };
    let out_dir = out_dir.as_ref().map(|p| p.display().to_string());
    let overrides = [
        ("function", function),
        ("algorithm", algo),
        ("budgets", budget),
        ("seeds", seeds),
        ("sigma", sigma),
        ("rho_max", rho_max),
        ("nu_max", nu_max),
        ("out_dir", &out_dir),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            s.set(key, v)?;
        }
    }
    Ok(s)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match settings(&cli.command).and_then(|s| s.build()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let outcome = match harness::run_experiment(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    for run in &outcome.runs {
        if let Some(err) = &run.error {
            eprintln!("budget {} seed {}: {err}", run.row.budget, run.row.seed);
        }
    }
    for a in &outcome.aggregates {
        println!(
            "budget {:>10}  mean regret {:.6}  stderr {:.6}  runs {}",
            a.budget, a.mean, a.stderr, a.runs
        );
    }
    if outcome.objective_failures() > 0 {
        ExitCode::from(2)
    } else if outcome.config_failures() > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
