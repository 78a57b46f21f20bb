//! `trackopt`: evaluate, optimize and simulate test-rate policies, and run
//! the reference sweeps.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tracking_core::experiments::{
    evaluate, render, run_fig4, run_fig5, run_fig6, run_fig7, simulate_scenario, solve_scenario,
    OutputFormat, Scenario, ScenarioConfig, Tabular,
};
use tracking_core::optimizer::SolverReport;

#[derive(Debug, Parser)]
#[command(
    name = "trackopt",
    version,
    about = "Test-rate allocation for tracking binary Markov sources"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form error of the config's policy.
    Eval,
    /// Optimize test rates under the budget.
    Solve,
    /// Monte Carlo of the config's policy (or the optimized one).
    Simulate,
    /// Per-person allocation against uniform and no-test baselines.
    Fig4,
    /// Optimal error versus total test rate.
    Fig5,
    /// Optimal error versus population size, uniform and geometric rates.
    Fig6,
    /// Error split and rate totals versus importance factor.
    Fig7,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario JSON. Without it the reference ten-person scenario is used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    restarts: Option<usize>,
    /// KKT residual tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Simulated time per person.
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// Output path, `-` for stdout (default).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Defaults to json for eval/solve/simulate and csv for the sweeps.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Exit with status 2 if any solve fails to converge.
    #[arg(long, global = true)]
    strict: bool,
    /// Also simulate the optimized policy (fig4).
    #[arg(long, global = true)]
    simulate: bool,
}

enum Outcome {
    Done,
    NotConverged,
}

fn load_scenario(common: &Common) -> Result<Scenario> {
    let config = match &common.config {
        Some(path) => ScenarioConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => ScenarioConfig::default(),
    };
    let mut scenario = config.resolve().context("invalid scenario")?;
    if let Some(seed) = common.seed {
        scenario.solver.seed = seed;
        scenario.sim.seed = Some(seed);
    }
    if let Some(restarts) = common.restarts {
        scenario.solver.restarts = restarts;
    }
    if let Some(tol) = common.tol {
        scenario.solver.tol = tol;
    }
    if let Some(horizon) = common.horizon {
        scenario.sim.horizon = horizon;
    }
    if common.simulate {
        scenario.sim.enabled = true;
    }
    if let Some(out) = &common.out {
        scenario.out = Some(out.clone());
    }
    Ok(scenario)
}

fn emit<T: Tabular + Serialize>(
    value: &T,
    common: &Common,
    scenario: &Scenario,
    default: OutputFormat,
) -> Result<()> {
    let format = match common.format {
        Some(Format::Csv) => OutputFormat::Csv,
        Some(Format::Json) => OutputFormat::Json,
        None => default,
    };
    let bytes = render(value, format)?;
    match scenario.out.as_deref() {
        Some(path) if path.as_os_str() != "-" => {
            fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?
        }
        _ => std::io::stdout().lock().write_all(&bytes)?,
    }
    Ok(())
}

fn converged<'a>(reports: impl IntoIterator<Item = &'a SolverReport>) -> bool {
    reports.into_iter().all(|r| r.converged)
}

fn run(cli: &Cli) -> Result<Outcome> {
    let common = &cli.common;
    let scenario = load_scenario(common)?;
    let ok = match cli.command {
        Command::Eval => {
            let out = evaluate(&scenario)?;
            emit(&out, common, &scenario, OutputFormat::Json)?;
            true
        }
        Command::Solve => {
            let out = solve_scenario(&scenario)?;
            emit(&out, common, &scenario, OutputFormat::Json)?;
            out.report.converged
        }
        Command::Simulate => {
            let out = simulate_scenario(&scenario)?;
            emit(&out, common, &scenario, OutputFormat::Json)?;
            out.report.as_ref().is_none_or(|r| r.converged)
        }
        Command::Fig4 => {
            let out = run_fig4(&scenario)?;
            emit(&out, common, &scenario, OutputFormat::Csv)?;
            out.report.converged
        }
        Command::Fig5 => {
            let out = run_fig5(&scenario)?;
            emit(&out, common, &scenario, OutputFormat::Csv)?;
            converged(&out.reports)
        }
        Command::Fig6 => {
            let out = run_fig6(&scenario)?;
            emit(&out, common, &scenario, OutputFormat::Csv)?;
            converged(
                out.reports
                    .iter()
                    .flat_map(|p| [&p.uniform_rates, &p.geometric_rates]),
            )
        }
        Command::Fig7 => {
            let out = run_fig7(&scenario)?;
            emit(&out, common, &scenario, OutputFormat::Csv)?;
            converged(&out.reports)
        }
    };
    Ok(if ok || !common.strict {
        Outcome::Done
    } else {
        Outcome::NotConverged
    })
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
    match run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::NotConverged) => {
            eprintln!("error: solver did not converge");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
