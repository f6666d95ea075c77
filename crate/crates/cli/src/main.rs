use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phasemix_cli::{parse_config, run, Overrides, Scenario};

/// Kepler phase-mixing experiments.
#[derive(Debug, Parser)]
#[command(name = "phasemix", version)]
struct Cli {
    #[command(subcommand)]
    scenario: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: $PHASEMIX_OUT, then ./phasemix-out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long = "t-final", global = true)]
    t_final: Option<f64>,
    /// Override any config key, e.g. `--set grid.probes=12`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Integrate one orbit in a frozen field and check energy and the angle Jacobian.
    OrbitCheck,
    /// Tabulate radial periods against the Kepler value.
    PeriodTable,
    /// Round-trip random states through the Delaunay transform.
    TransformCheck,
    /// Exact free streaming in the Kepler potential.
    LinearDecay,
    /// Exact flow in a frozen radial field.
    FrozenDecay,
    /// Self-consistent particle simulation.
    NonlinearRun,
}

impl From<Command> for Scenario {
    fn from(c: Command) -> Self {
        match c {
            Command::OrbitCheck => Scenario::OrbitCheck,
            Command::PeriodTable => Scenario::PeriodTable,
            Command::TransformCheck => Scenario::TransformCheck,
            Command::LinearDecay => Scenario::LinearDecay,
            Command::FrozenDecay => Scenario::FrozenDecay,
            Command::NonlinearRun => Scenario::NonlinearRun,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let flags = Overrides {
        scenario: Some(cli.scenario.into()),
        out: cli.out,
        workers: cli.workers,
        seed: cli.seed,
        t_final: cli.t_final,
        set: cli.set,
    };
    let resolved = match parse_config(cli.config.as_deref(), &flags) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let name = resolved.config.scenario.name();
    match run(&resolved) {
        Ok(outcome) => {
            for note in &outcome.notes {
                println!("{name}: {note}");
            }
            for c in &outcome.checks {
                let mark = if c.passed { "ok" } else { "FAILED" };
                println!("{name}: {} {mark}: {}", c.name, c.detail);
            }
            println!("{name}: output in {}", resolved.out_dir().display());
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("{name}: {e}");
            ExitCode::from(1)
        }
    }
}
