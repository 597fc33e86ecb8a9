//! `meanfield`: classical and refined mean-field experiments from the
//! command line.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 when a
//! model evaluation or numerical routine fails.

mod config;
mod experiments;
mod output;
mod registry;
mod svg;

use std::fmt::Write as _;
use std::io::Write as _;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::{CommonArgs, ExperimentConfig};
use output::OutputSet;
use registry::Experiment;

#[derive(Debug, Parser)]
#[command(name = "meanfield", version, about = "Classical and refined mean-field approximations of population models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mean field, refined mean field and simulation over time.
    Transient {
        #[command(flatten)]
        common: CommonArgs,
        /// Add simulation-minus-approximation columns and plots.
        #[arg(long)]
        error_curves: bool,
        /// Add the exact expectation from the full count-vector chain.
        #[arg(long)]
        exact: bool,
    },
    /// Steady-state table and fixed-point report.
    Steady {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Five approximations of E[h(M(t))] for a functional h.
    ResponseTime {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Fit of the exact stationary bias to a + b / sqrt(N).
    SqrtFit {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Built-in models and their parameters.
    ListModels {
        /// Emit the schema as JSON.
        #[arg(long)]
        json: bool,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Model(anyhow::Error),
}

fn list_models(json: bool) -> Result<()> {
    let specs = registry::specs();
    let mut text = String::new();
    if json {
        text = serde_json::to_string_pretty(&specs)? + "\n";
    } else {
        for s in specs {
            writeln!(text, "{}: {}", s.id, s.description)?;
            writeln!(text, "  states: {}", s.states.join(", "))?;
            for p in &s.parameters {
                writeln!(text, "  {} = {}  ({})", p.name, p.default, p.description)?;
            }
            writeln!(text, "  functionals: {}", s.functionals.join(", "))?;
        }
    }
    match std::io::stdout().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn run_experiment(
    experiment: Experiment,
    common: &CommonArgs,
    body: impl FnOnce(&ExperimentConfig, &mut OutputSet) -> Result<()>,
) -> Result<(), Failure> {
    let cfg = ExperimentConfig::resolve(experiment, common).map_err(Failure::Usage)?;
    let params: Vec<String> = cfg.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("{} {}: {}", experiment.name(), cfg.model_id, params.join(", "));
    let mut out = OutputSet::new(&cfg.out_dir, cfg.formats).map_err(Failure::Model)?;
    match body(&cfg, &mut out) {
        Ok(()) => Ok(()),
        Err(e) => {
            out.discard();
            Err(Failure::Model(e))
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Transient {
            common,
            error_curves,
            exact,
        } => run_experiment(Experiment::Transient, &common, |cfg, out| {
            experiments::transient(cfg, out, error_curves, exact)
        }),
        Command::Steady { common } => run_experiment(Experiment::Steady, &common, experiments::steady),
        Command::ResponseTime { common } => run_experiment(Experiment::ResponseTime, &common, experiments::response_time),
        Command::SqrtFit { common } => {
            run_experiment(Experiment::SqrtFit, &common, |cfg, out| experiments::sqrt_fit(cfg, out).map(|_| ()))
        }
        Command::ListModels { json } => list_models(json).map_err(Failure::Model),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Model(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
