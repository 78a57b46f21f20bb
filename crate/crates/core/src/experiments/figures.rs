//! The four reference experiments: per-person allocation, budget sweep,
//! population-size sweep and importance-factor sweep. Sweep points are solved
//! in parallel and returned in sweep order; every point uses the same solver
//! seed, so a sweep point matches a standalone solve of the same population.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::commands::label_untested;
use super::config::{ProfileKind, Scenario, SweepParam};
use super::output::Tabular;
use crate::analytic::{no_test_error, population_error, PopulationError};
use crate::error::{Error, Result};
use crate::model::{PopulationSpec, TestPolicy};
use crate::optimizer::{solve, SolverReport};
use crate::simulator::{simulate_population, PopulationSimReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig4Row {
    pub i: usize,
    pub lambda: f64,
    pub mu: f64,
    pub s: f64,
    pub c: f64,
    pub delta_opt: f64,
    pub delta_uniform: f64,
    pub delta_notest: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig4Result {
    pub rows: Vec<Fig4Row>,
    pub optimal: PopulationError,
    pub uniform: PopulationError,
    pub no_test: f64,
    pub report: SolverReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<PopulationSimReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig5Row {
    #[serde(rename = "C")]
    pub total_rate: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig5Result {
    pub rows: Vec<Fig5Row>,
    pub reports: Vec<SolverReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig6Row {
    pub n: usize,
    pub delta_uniform_rates: f64,
    pub delta_geometric_rates: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig6Point {
    pub uniform_rates: SolverReport,
    pub geometric_rates: SolverReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig6Result {
    pub rows: Vec<Fig6Row>,
    pub reports: Vec<Fig6Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig7Row {
    pub theta: f64,
    pub delta: f64,
    pub delta_bar1: f64,
    pub delta_bar2: f64,
    pub sum_s: f64,
    pub sum_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig7Result {
    pub rows: Vec<Fig7Row>,
    pub reports: Vec<SolverReport>,
}

macro_rules! tabular {
    ($result:ty, $row:ty) => {
        impl Tabular for $result {
            type Row = $row;

            fn rows(&self) -> Vec<$row> {
                self.rows.clone()
            }
        }
    };
}

tabular!(Fig4Result, Fig4Row);
tabular!(Fig5Result, Fig5Row);
tabular!(Fig6Result, Fig6Row);
tabular!(Fig7Result, Fig7Row);

pub fn default_budget_sweep() -> Vec<f64> {
    (5..=20).map(f64::from).collect()
}

pub fn default_population_sweep() -> Vec<usize> {
    (2..=30).collect()
}

pub fn default_theta_sweep() -> Vec<f64> {
    // 0.20, 0.25, ..., 0.70 as exact decimal quotients
    (0..=10).map(|k| f64::from(20 + 5 * k) / 100.0).collect()
}

fn sweep_values(scenario: &Scenario, param: SweepParam, default: Vec<f64>) -> Result<Vec<f64>> {
    match &scenario.sweep {
        None => Ok(default),
        Some(sweep) if sweep.param == param => Ok(sweep.values.clone()),
        Some(sweep) => Err(Error::InvalidArgument(format!(
            "this experiment sweeps {param:?} but the config sweeps {:?}",
            sweep.param
        ))),
    }
}

fn solve_for(scenario: &Scenario, spec: &PopulationSpec) -> Result<SolverReport> {
    let provided = scenario.policy.as_ref().filter(|p| p.len() == spec.len());
    solve(spec, &scenario.solver, provided)
}

pub fn run_fig4(scenario: &Scenario) -> Result<Fig4Result> {
    let spec = &scenario.spec;
    let report = solve_for(scenario, spec)?;
    let optimal = population_error(spec, &report.policy)?;
    let mut uniform_policy = TestPolicy::uniform(spec.len(), spec.total_rate);
    label_untested(spec, &mut uniform_policy)?;
    let uniform = population_error(spec, &uniform_policy)?;

    let mut rows = Vec::with_capacity(spec.len());
    let mut no_test = 0.0;
    for (i, p) in spec.people.iter().enumerate() {
        let (notest, _) = no_test_error(p, spec.theta)?;
        no_test += notest / spec.len() as f64;
        rows.push(Fig4Row {
            i: i + 1,
            lambda: p.lambda,
            mu: p.mu,
            s: report.policy.s[i],
            c: report.policy.c[i],
            delta_opt: optimal.per_person[i].d,
            delta_uniform: uniform.per_person[i].d,
            delta_notest: notest,
        });
    }

    let simulation = if scenario.sim.enabled {
        Some(simulate_population(
            spec,
            &report.policy,
            scenario.sim.horizon,
            scenario.sim_seed(),
        )?)
    } else {
        None
    };
    Ok(Fig4Result {
        rows,
        optimal,
        uniform,
        no_test,
        report,
        simulation,
    })
}

pub fn run_fig5(scenario: &Scenario) -> Result<Fig5Result> {
    let budgets = sweep_values(scenario, SweepParam::TotalRate, default_budget_sweep())?;
    let points = budgets
        .par_iter()
        .map(|&total_rate| {
            let spec = PopulationSpec {
                total_rate,
                ..scenario.spec.clone()
            };
            let report = solve_for(scenario, &spec)?;
            Ok((
                Fig5Row {
                    total_rate,
                    delta: report.objective,
                },
                report,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (rows, reports) = points.into_iter().unzip();
    Ok(Fig5Result { rows, reports })
}

pub fn run_fig6(scenario: &Scenario) -> Result<Fig6Result> {
    let profile = scenario.profile.ok_or_else(|| {
        Error::InvalidArgument(
            "the population-size sweep regenerates people from a `profile`; \
             inline `people` cannot be resized"
                .into(),
        )
    })?;
    let sizes: Vec<usize> = match &scenario.sweep {
        None => default_population_sweep(),
        Some(_) => sweep_values(scenario, SweepParam::Population, vec![])?
            .into_iter()
            .map(|v| v as usize)
            .collect(),
    };
    let points = sizes
        .par_iter()
        .map(|&n| {
            let build = |kind| -> Result<PopulationSpec> {
                let people = profile.with_kind(kind).with_n(n).people()?;
                PopulationSpec::new(people, scenario.spec.total_rate, scenario.spec.theta)
            };
            let uniform = solve(&build(ProfileKind::Uniform)?, &scenario.solver, None)?;
            let geometric = solve(&build(ProfileKind::Geometric)?, &scenario.solver, None)?;
            let row = Fig6Row {
                n,
                delta_uniform_rates: uniform.objective,
                delta_geometric_rates: geometric.objective,
            };
            Ok((
                row,
                Fig6Point {
                    uniform_rates: uniform,
                    geometric_rates: geometric,
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let (rows, reports) = points.into_iter().unzip();
    Ok(Fig6Result { rows, reports })
}

pub fn run_fig7(scenario: &Scenario) -> Result<Fig7Result> {
    let thetas = sweep_values(scenario, SweepParam::Theta, default_theta_sweep())?;
    let points = thetas
        .par_iter()
        .map(|&theta| {
            let spec = PopulationSpec::new(
                scenario.spec.people.clone(),
                scenario.spec.total_rate,
                theta,
            )?;
            let report = solve_for(scenario, &spec)?;
            let err = population_error(&spec, &report.policy)?;
            let row = Fig7Row {
                theta,
                delta: err.delta,
                delta_bar1: err.delta_bar1,
                delta_bar2: err.delta_bar2,
                sum_s: report.policy.s.iter().sum(),
                sum_c: report.policy.c.iter().sum(),
            };
            Ok((row, report))
        })
        .collect::<Result<Vec<_>>>()?;
    let (rows, reports) = points.into_iter().unzip();
    Ok(Fig7Result { rows, reports })
}
