//! Single-scenario operations behind the `eval`, `solve` and `simulate`
//! subcommands.

use serde::{Deserialize, Serialize};

use super::config::Scenario;
use super::output::Tabular;
use crate::analytic::{no_test_error, population_error, PopulationError};
use crate::error::{Error, Result};
use crate::model::{FixedLabel, PopulationSpec, TestPolicy};
use crate::optimizer::{solve, SolverReport};
use crate::simulator::{simulate_population, PopulationSimReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonRow {
    pub i: usize,
    pub lambda: f64,
    pub mu: f64,
    pub s: f64,
    pub c: f64,
    pub label: Option<FixedLabel>,
    pub d1: f64,
    pub d2: f64,
    pub d: f64,
}

fn person_rows(
    spec: &PopulationSpec,
    policy: &TestPolicy,
    err: &PopulationError,
) -> Vec<PersonRow> {
    spec.people
        .iter()
        .zip(&err.per_person)
        .enumerate()
        .map(|(i, (p, b))| PersonRow {
            i: i + 1,
            lambda: p.lambda,
            mu: p.mu,
            s: policy.s[i],
            c: policy.c[i],
            label: policy.fixed_label[i],
            d1: b.d1,
            d2: b.d2,
            d: b.d,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub spec: PopulationSpec,
    pub policy: TestPolicy,
    pub error: PopulationError,
}

impl Tabular for EvalOutput {
    type Row = PersonRow;

    fn rows(&self) -> Vec<PersonRow> {
        person_rows(&self.spec, &self.policy, &self.error)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutput {
    pub spec: PopulationSpec,
    pub error: PopulationError,
    pub report: SolverReport,
}

impl Tabular for SolveOutput {
    type Row = PersonRow;

    fn rows(&self) -> Vec<PersonRow> {
        person_rows(&self.spec, &self.report.policy, &self.error)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub i: usize,
    pub s: f64,
    pub c: f64,
    pub d1: f64,
    pub d2: f64,
    pub d1_hat: f64,
    pub d2_hat: f64,
    pub stderr1: f64,
    pub stderr2: f64,
    pub events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateOutput {
    pub spec: PopulationSpec,
    pub policy: TestPolicy,
    pub analytic: PopulationError,
    pub simulation: PopulationSimReport,
    pub seed: u64,
    /// Present when the policy came from the solver.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<SolverReport>,
}

impl Tabular for SimulateOutput {
    type Row = SimRow;

    fn rows(&self) -> Vec<SimRow> {
        self.simulation
            .per_person
            .iter()
            .zip(&self.analytic.per_person)
            .enumerate()
            .map(|(i, (sim, exact))| SimRow {
                i: i + 1,
                s: self.policy.s[i],
                c: self.policy.c[i],
                d1: exact.d1,
                d2: exact.d2,
                d1_hat: sim.d1_hat,
                d2_hat: sim.d2_hat,
                stderr1: sim.stderr1,
                stderr2: sim.stderr2,
                events: sim.events,
            })
            .collect()
    }
}

/// Fills in the best fixed label for every untested source that lacks one.
pub fn label_untested(spec: &PopulationSpec, policy: &mut TestPolicy) -> Result<()> {
    for (i, p) in spec.people.iter().enumerate() {
        if policy.is_untested(i) && policy.fixed_label[i].is_none() {
            policy.fixed_label[i] = Some(no_test_error(p, spec.theta)?.1);
        }
    }
    Ok(())
}

pub fn evaluate(scenario: &Scenario) -> Result<EvalOutput> {
    let mut policy = scenario
        .policy
        .clone()
        .ok_or_else(|| Error::InvalidArgument("`eval` needs a `policy` in the config".into()))?;
    label_untested(&scenario.spec, &mut policy)?;
    let error = population_error(&scenario.spec, &policy)?;
    Ok(EvalOutput {
        spec: scenario.spec.clone(),
        policy,
        error,
    })
}

pub fn solve_scenario(scenario: &Scenario) -> Result<SolveOutput> {
    let report = solve(&scenario.spec, &scenario.solver, scenario.policy.as_ref())?;
    let error = population_error(&scenario.spec, &report.policy)?;
    Ok(SolveOutput {
        spec: scenario.spec.clone(),
        error,
        report,
    })
}

/// Simulates the config's policy, or the solver's policy when none is given.
pub fn simulate_scenario(scenario: &Scenario) -> Result<SimulateOutput> {
    let (mut policy, report) = match &scenario.policy {
        Some(p) => (p.clone(), None),
        None => {
            let report = solve(&scenario.spec, &scenario.solver, None)?;
            (report.policy.clone(), Some(report))
        }
    };
    label_untested(&scenario.spec, &mut policy)?;
    let analytic = population_error(&scenario.spec, &policy)?;
    let seed = scenario.sim_seed();
    let simulation = simulate_population(&scenario.spec, &policy, scenario.sim.horizon, seed)?;
    Ok(SimulateOutput {
        spec: scenario.spec.clone(),
        policy,
        analytic,
        simulation,
        seed,
        report,
    })
}
