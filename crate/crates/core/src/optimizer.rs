//! Test-rate allocation under a total-rate budget.
//!
//! The objective is the population mean of the per-source weighted error. Its
//! stationarity conditions give, for each healthy-marked rate `s_i` with the
//! infected-marked rate `c_i` held fixed (and symmetrically for `c_i`), an
//! allocation of the form `k·(sqrt(phi / beta) − 1)⁺`, where `beta` is the
//! water level that makes the allocations exhaust the budget. Alternating
//! between recomputing `phi` and `k` from the current rates and re-solving the
//! water level converges to a KKT point. The problem is not jointly convex, so
//! [`solve`] runs many starts and keeps the best one.
//!
//! Rates are indexed `0..n` for the `s` block and `n..2n` for the `c` block.
//! [`waterfill`] works on the sum of per-source errors; the multiplier stored
//! in [`SolverState`] and [`SolverReport`] is scaled to the mean, i.e. divided
//! by `n`.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{no_test_error, population_error, weighted_error_partials};
use crate::error::{Error, Result};
use crate::model::{validate_population, PersonParams, PopulationSpec, TestPolicy};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub restarts: usize,
    pub seed: u64,
    /// Stop once the KKT residual drops below this.
    pub tol: f64,
    /// Stop once no rate moves by more than this in one sweep.
    pub rate_tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            restarts: 30,
            seed: 0,
            tol: 1e-9,
            rate_tol: 1e-12,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    /// Rate while marked healthy.
    S,
    /// Rate while marked infected.
    C,
}

/// Why a source stopped being tested during a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Deactivation {
    /// `theta·(c + lambda) < (1 − theta)·mu`: raising `s` only hurts.
    HealthyRateHarmful { c: f64 },
    /// `(1 − theta)·(s + mu) < theta·lambda`: raising `c` only hurts.
    InfectedRateHarmful { s: f64 },
    /// The water-filling step gave `variable` zero because its `phi` was at
    /// or below the water level, or undefined.
    BelowWaterLevel {
        variable: RateKind,
        phi: Option<f64>,
        water_level: f64,
    },
    /// Nothing to spend.
    NoBudget,
}

impl Deactivation {
    /// Re-evaluates the recorded threshold condition for `p`.
    pub fn holds(&self, p: &PersonParams, theta: f64) -> bool {
        match *self {
            Deactivation::HealthyRateHarmful { c } => theta * (c + p.lambda) < (1.0 - theta) * p.mu,
            Deactivation::InfectedRateHarmful { s } => {
                (1.0 - theta) * (s + p.mu) < theta * p.lambda
            }
            Deactivation::BelowWaterLevel {
                phi, water_level, ..
            } => phi.is_none_or(|v| v <= water_level),
            Deactivation::NoBudget => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum PairStatus {
    Active,
    Deactivated {
        iteration: usize,
        cause: Deactivation,
    },
}

impl PairStatus {
    pub fn is_active(&self) -> bool {
        matches!(self, PairStatus::Active)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairCheck {
    Keep,
    ZeroSThenPair,
    ZeroCThenPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    pub policy: TestPolicy,
    /// Budget multiplier for the mean objective.
    pub beta: f64,
    /// One flag per decision variable, `s` block first.
    pub active: Vec<bool>,
    pub pairs: Vec<PairStatus>,
    pub iteration: usize,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StartKind {
    Uniform,
    Provided,
    Random { seed: u64 },
    NoTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub start: StartKind,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub policy: TestPolicy,
    pub objective: f64,
    pub beta: f64,
    pub kkt_residual: f64,
    pub converged: bool,
    pub iterations_used: usize,
    pub chosen: StartKind,
    pub pairs: Vec<PairStatus>,
    pub restarts: Vec<RestartRecord>,
}

impl SolverReport {
    /// True if some source is tested in both states.
    pub fn has_active_pair(&self) -> bool {
        self.policy
            .s
            .iter()
            .zip(&self.policy.c)
            .any(|(&s, &c)| s > 0.0 && c > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waterfill {
    /// Water level for the summed objective; zero when nothing is active.
    pub beta: f64,
    pub u: Vec<f64>,
    pub active: Vec<bool>,
    /// Number of water-level solves, one per pruning pass.
    pub passes: usize,
    /// Every index ended up inactive.
    pub exhausted: bool,
}

/// Threshold values for the `2n` decision variables, `None` where the partner
/// rate is zero and the value is undefined.
pub fn phi(spec: &PopulationSpec, policy: &TestPolicy) -> Result<Vec<Option<f64>>> {
    let n = spec.len();
    policy.check_dims(n)?;
    let theta = spec.theta;
    let mut out = vec![None; 2 * n];
    for (i, p) in spec.people.iter().enumerate() {
        let (s, c) = (policy.s[i], policy.c[i]);
        let PersonParams { lambda, mu } = *p;
        if c > 0.0 {
            out[i] = Some(
                lambda / (mu * c * (mu + lambda)) * (theta * (c + lambda) - (1.0 - theta) * mu),
            );
        }
        if s > 0.0 {
            out[n + i] = Some(
                mu / (lambda * s * (mu + lambda)) * ((1.0 - theta) * (s + mu) - theta * lambda),
            );
        }
    }
    Ok(out)
}

/// Allocation scales `k` matching [`phi`]: `mu·c/(lambda + c)` for the `s`
/// block and `lambda·s/(mu + s)` for the `c` block.
pub fn allocation_scales(spec: &PopulationSpec, policy: &TestPolicy) -> Result<Vec<f64>> {
    let n = spec.len();
    policy.check_dims(n)?;
    let mut k = vec![0.0; 2 * n];
    for (i, p) in spec.people.iter().enumerate() {
        let (s, c) = (policy.s[i], policy.c[i]);
        k[i] = p.mu * c / (p.lambda + c);
        k[n + i] = p.lambda * s / (p.mu + s);
    }
    Ok(k)
}

/// Solves `sum_i k_i·(sqrt(phi_i / beta) − 1)⁺ = budget` for the water level
/// `beta`.
///
/// Entries with undefined or non-positive `phi`, or zero `k`, start inactive.
/// Each pass solves for `beta` assuming every active entry is positive, which
/// is linear in `1/sqrt(beta)`; if the smallest active `phi` falls below
/// `beta` that entry is dropped (lowest index first on ties) and the pass
/// repeats.
pub fn waterfill(k: &[f64], phi: &[Option<f64>], budget: f64) -> Result<Waterfill> {
    if k.len() != phi.len() {
        return Err(Error::DimensionMismatch {
            expected: k.len(),
            actual: phi.len(),
        });
    }
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "budget must be positive, got {budget}"
        )));
    }
    let mut active: Vec<bool> = k
        .iter()
        .zip(phi)
        .map(|(&ki, &ph)| ki > 0.0 && ph.is_some_and(|v| v > 0.0))
        .collect();
    let value = |i: usize| phi[i].unwrap_or(f64::NAN);

    let mut passes = 0;
    loop {
        let idx: Vec<usize> = (0..k.len()).filter(|&i| active[i]).collect();
        if idx.is_empty() {
            return Ok(Waterfill {
                beta: 0.0,
                u: vec![0.0; k.len()],
                active,
                passes,
                exhausted: true,
            });
        }
        passes += 1;
        let weighted: f64 = idx.iter().map(|&i| k[i] * value(i).sqrt()).sum();
        let k_sum: f64 = idx.iter().map(|&i| k[i]).sum();
        let root = weighted / (budget + k_sum);
        let beta = root * root;

        let lowest = idx
            .iter()
            .copied()
            .min_by(|&a, &b| value(a).total_cmp(&value(b)))
            .expect("non-empty active set");
        if value(lowest) < beta {
            active[lowest] = false;
            continue;
        }

        let u = (0..k.len())
            .map(|i| {
                if active[i] {
                    k[i] * ((value(i) / beta).sqrt() - 1.0).max(0.0)
                } else {
                    0.0
                }
            })
            .collect();
        return Ok(Waterfill {
            beta,
            u,
            active,
            passes,
            exhausted: false,
        });
    }
}

/// Max-norm violation of the KKT conditions for the mean objective with
/// budget multiplier `beta`.
///
/// Sources tested in both states contribute `|dΔ/dr + beta|` for each rate.
/// A zero rate paired with a positive partner contributes how far
/// `dΔ/dr + beta` is below zero. Untested sources are governed by the
/// fixed-label rule and contribute nothing.
pub fn kkt_residual(spec: &PopulationSpec, policy: &TestPolicy, beta: f64) -> Result<f64> {
    let n = spec.len();
    policy.check_dims(n)?;
    let nf = n as f64;
    let mut worst = 0.0_f64;
    for (i, p) in spec.people.iter().enumerate() {
        let (s, c) = (policy.s[i], policy.c[i]);
        if s == 0.0 && c == 0.0 {
            continue;
        }
        let (ds, dc) = weighted_error_partials(p, s, c, spec.theta);
        let gs = ds / nf + beta;
        let gc = dc / nf + beta;
        let rs = if s > 0.0 { gs.abs() } else { (-gs).max(0.0) };
        let rc = if c > 0.0 { gc.abs() } else { (-gc).max(0.0) };
        worst = worst.max(rs).max(rc);
    }
    Ok(worst)
}

pub fn zero_pair_check(p: &PersonParams, theta: f64, s: f64, c: f64) -> PairCheck {
    if theta * (c + p.lambda) < (1.0 - theta) * p.mu {
        PairCheck::ZeroSThenPair
    } else if (1.0 - theta) * (s + p.mu) < theta * p.lambda {
        PairCheck::ZeroCThenPair
    } else {
        PairCheck::Keep
    }
}

/// Random start on the budget simplex: `2n` unit exponentials scaled to sum
/// to the total rate.
pub fn random_init(spec: &PopulationSpec, seed: u64) -> Result<TestPolicy> {
    if spec.total_rate.is_nan() || spec.total_rate <= 0.0 {
        return Err(Error::InvalidArgument(
            "random_init needs a positive total rate".into(),
        ));
    }
    let n = spec.len();
    let mut rng = stream_rng(seed, 0);
    let draws: Vec<f64> = (0..2 * n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let sum: f64 = draws.iter().sum();
    let scaled: Vec<f64> = draws.iter().map(|d| spec.total_rate * (d / sum)).collect();
    TestPolicy::from_rates(scaled[..n].to_vec(), scaled[n..].to_vec())
}

fn assign_labels(spec: &PopulationSpec, policy: &mut TestPolicy) -> Result<()> {
    for (i, p) in spec.people.iter().enumerate() {
        policy.fixed_label[i] = if policy.is_untested(i) {
            Some(no_test_error(p, spec.theta)?.1)
        } else {
            None
        };
    }
    Ok(())
}

fn deactivate(
    pairs: &mut [PairStatus],
    policy: &mut TestPolicy,
    i: usize,
    iteration: usize,
    cause: Deactivation,
) {
    pairs[i] = PairStatus::Deactivated { iteration, cause };
    policy.s[i] = 0.0;
    policy.c[i] = 0.0;
}

fn active_flags(pairs: &[PairStatus], policy: &TestPolicy) -> Vec<bool> {
    let n = pairs.len();
    (0..2 * n)
        .map(|j| {
            let i = j % n;
            let rate = if j < n { policy.s[i] } else { policy.c[i] };
            pairs[i].is_active() && rate > 0.0
        })
        .collect()
}

/// Alternating minimization from `init`, which should lie on the budget line.
///
/// Each sweep drops pairs caught by [`zero_pair_check`], recomputes `phi` and
/// the allocation scales from the current rates, water-fills, and adopts the
/// result. A pair with either rate driven to zero is dropped for the rest of
/// the run. Stops on KKT residual below `tol`, on a stalled sweep, or at
/// `max_iter`; in the last case the lowest-objective iterate is returned with
/// `converged = false`.
pub fn alternate_minimize(
    spec: &PopulationSpec,
    init: &TestPolicy,
    opts: &SolverOptions,
) -> Result<SolverState> {
    validate_population(spec).map_err(Error::Validation)?;
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "tol must be positive, got {}",
            opts.tol
        )));
    }
    let n = spec.len();
    init.check_dims(n)?;
    let theta = spec.theta;
    let nf = n as f64;

    let mut policy = TestPolicy::from_rates(init.s.clone(), init.c.clone())?;
    let mut pairs = vec![PairStatus::Active; n];
    for i in 0..n {
        if spec.total_rate <= 0.0 {
            deactivate(&mut pairs, &mut policy, i, 0, Deactivation::NoBudget);
        } else if policy.s[i] == 0.0 || policy.c[i] == 0.0 {
            let variable = if policy.s[i] == 0.0 {
                RateKind::S
            } else {
                RateKind::C
            };
            let cause = Deactivation::BelowWaterLevel {
                variable,
                phi: None,
                water_level: 0.0,
            };
            deactivate(&mut pairs, &mut policy, i, 0, cause);
        }
    }

    let finish = |mut policy: TestPolicy,
                  pairs: Vec<PairStatus>,
                  beta: f64,
                  iteration: usize,
                  residual: f64,
                  converged: bool|
     -> Result<SolverState> {
        assign_labels(spec, &mut policy)?;
        let active = active_flags(&pairs, &policy);
        Ok(SolverState {
            policy,
            beta,
            active,
            pairs,
            iteration,
            residual,
            converged,
        })
    };

    if pairs.iter().all(|p| !p.is_active()) {
        return finish(policy, pairs, 0.0, 0, 0.0, true);
    }

    // Lowest-objective iterate, kept for the non-convergent exit.
    let mut best: Option<(f64, TestPolicy, Vec<PairStatus>, f64, usize, f64)> = None;

    for iteration in 1..=opts.max_iter {
        for i in 0..n {
            if !pairs[i].is_active() {
                continue;
            }
            let (s, c) = (policy.s[i], policy.c[i]);
            let cause = match zero_pair_check(&spec.people[i], theta, s, c) {
                PairCheck::Keep => continue,
                PairCheck::ZeroSThenPair => Deactivation::HealthyRateHarmful { c },
                PairCheck::ZeroCThenPair => Deactivation::InfectedRateHarmful { s },
            };
            deactivate(&mut pairs, &mut policy, i, iteration, cause);
        }

        let phis = phi(spec, &policy)?;
        let k = allocation_scales(spec, &policy)?;
        let wf = waterfill(&k, &phis, spec.total_rate)?;

        if wf.exhausted {
            for i in 0..n {
                if pairs[i].is_active() {
                    let variable = if phis[i].is_none_or(|v| v <= 0.0) {
                        RateKind::S
                    } else {
                        RateKind::C
                    };
                    let phi = if variable == RateKind::S {
                        phis[i]
                    } else {
                        phis[n + i]
                    };
                    let cause = Deactivation::BelowWaterLevel {
                        variable,
                        phi,
                        water_level: 0.0,
                    };
                    deactivate(&mut pairs, &mut policy, i, iteration, cause);
                }
            }
            return finish(policy, pairs, 0.0, iteration, 0.0, true);
        }

        let mut change = 0.0_f64;
        let mut dropped = false;
        for i in 0..n {
            if !pairs[i].is_active() {
                continue;
            }
            let (new_s, new_c) = (wf.u[i], wf.u[n + i]);
            change = change
                .max((new_s - policy.s[i]).abs())
                .max((new_c - policy.c[i]).abs());
            policy.s[i] = new_s;
            policy.c[i] = new_c;
            if new_s == 0.0 || new_c == 0.0 {
                let (variable, phi) = if new_s == 0.0 {
                    (RateKind::S, phis[i])
                } else {
                    (RateKind::C, phis[n + i])
                };
                let cause = Deactivation::BelowWaterLevel {
                    variable,
                    phi,
                    water_level: wf.beta,
                };
                deactivate(&mut pairs, &mut policy, i, iteration, cause);
                dropped = true;
            }
        }

        let beta = wf.beta / nf;
        let residual = kkt_residual(spec, &policy, beta)?;
        if !dropped && residual < opts.tol {
            return finish(policy, pairs, beta, iteration, residual, true);
        }
        if !dropped && change < opts.rate_tol {
            return finish(policy, pairs, beta, iteration, residual, false);
        }

        let mut labelled = policy.clone();
        assign_labels(spec, &mut labelled)?;
        let objective = population_error(spec, &labelled)?.delta;
        if best.as_ref().is_none_or(|b| objective < b.0) {
            best = Some((
                objective,
                policy.clone(),
                pairs.clone(),
                beta,
                iteration,
                residual,
            ));
        }
    }

    let (_, policy, pairs, beta, iteration, residual) = best.expect("max_iter >= 1");
    finish(policy, pairs, beta, iteration, residual, false)
}

fn rescale_to_budget(policy: &TestPolicy, budget: f64) -> Option<TestPolicy> {
    let total = policy.total_rate();
    if total.is_nan() || total <= 0.0 || budget.is_nan() || budget <= 0.0 {
        return None;
    }
    let f = budget / total;
    TestPolicy::from_rates(
        policy.s.iter().map(|r| r * f).collect(),
        policy.c.iter().map(|r| r * f).collect(),
    )
    .ok()
}

/// Best of: the uniform split, `provided` rescaled onto the budget line,
/// `opts.restarts` random starts, and testing nobody. Ties keep the earlier
/// candidate in that order. Deterministic for a given seed.
pub fn solve(
    spec: &PopulationSpec,
    opts: &SolverOptions,
    provided: Option<&TestPolicy>,
) -> Result<SolverReport> {
    validate_population(spec).map_err(Error::Validation)?;
    if opts.restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be at least 1".into()));
    }
    if let Some(p) = provided {
        p.check_dims(spec.len())?;
    }
    let n = spec.len();

    let mut starts: Vec<(StartKind, TestPolicy)> = Vec::new();
    if spec.total_rate > 0.0 {
        starts.push((StartKind::Uniform, TestPolicy::uniform(n, spec.total_rate)));
        if let Some(p) = provided.and_then(|p| rescale_to_budget(p, spec.total_rate)) {
            starts.push((StartKind::Provided, p));
        }
        for r in 0..opts.restarts as u64 {
            let seed = crate::rng::mix_seed(opts.seed, r);
            starts.push((StartKind::Random { seed }, random_init(spec, seed)?));
        }
    }

    let runs = starts
        .par_iter()
        .map(|(kind, init)| {
            let state = alternate_minimize(spec, init, opts)?;
            let objective = population_error(spec, &state.policy)?.delta;
            Ok((*kind, state, objective))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut candidates: Vec<(StartKind, SolverState, f64)> = runs;
    let mut no_test = TestPolicy::from_rates(vec![0.0; n], vec![0.0; n])?;
    assign_labels(spec, &mut no_test)?;
    let no_test_objective = population_error(spec, &no_test)?.delta;
    candidates.push((
        StartKind::NoTest,
        SolverState {
            active: vec![false; 2 * n],
            pairs: vec![
                PairStatus::Deactivated {
                    iteration: 0,
                    cause: Deactivation::NoBudget
                };
                n
            ],
            policy: no_test,
            beta: 0.0,
            iteration: 0,
            residual: 0.0,
            converged: true,
        },
        no_test_objective,
    ));

    let restarts = candidates
        .iter()
        .map(|(kind, st, obj)| RestartRecord {
            start: *kind,
            objective: *obj,
            converged: st.converged,
            iterations: st.iteration,
            kkt_residual: st.residual,
        })
        .collect();

    let mut best = 0;
    for (j, cand) in candidates.iter().enumerate() {
        if cand.2 < candidates[best].2 {
            best = j;
        }
    }
    let (chosen, state, objective) = candidates.swap_remove(best);
    Ok(SolverReport {
        objective,
        beta: state.beta,
        kkt_residual: state.residual,
        converged: state.converged,
        iterations_used: state.iteration,
        chosen,
        pairs: state.pairs,
        policy: state.policy,
        restarts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::weighted_error;
    use crate::model::{geometric_rate_profile, FixedLabel};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn single(lambda: f64, mu: f64, total: f64, theta: f64) -> PopulationSpec {
        PopulationSpec::from_rates(&[lambda], &[mu], total, theta).unwrap()
    }

    #[test]
    fn phi_examples() {
        let spec = single(1.0, 1.0, 2.0, 0.5);
        let policy = TestPolicy::from_rates(vec![1.0], vec![1.0]).unwrap();
        let v = phi(&spec, &policy).unwrap();
        assert_relative_eq!(v[0].unwrap(), 0.25, max_relative = 1e-15);
        assert_relative_eq!(v[1].unwrap(), 0.25, max_relative = 1e-15);

        let spec = single(1.0, 3.0, 2.0, 0.5);
        let v = phi(&spec, &policy).unwrap();
        // (1/3)·(1/4)·(1 − 1.5)
        assert_relative_eq!(v[0].unwrap(), -1.0 / 24.0, max_relative = 1e-14);

        let policy = TestPolicy::from_rates(vec![1.0], vec![0.0]).unwrap();
        let v = phi(&spec, &policy).unwrap();
        assert_eq!(v[0], None);
        assert!(v[1].is_some());
    }

    #[test]
    fn waterfill_examples() {
        let wf = waterfill(&[1.0, 1.0], &[Some(4.0), Some(1.0)], 1.0).unwrap();
        assert_eq!(wf.beta, 1.0);
        assert_eq!(wf.u, vec![1.0, 0.0]);
        assert!(!wf.exhausted);

        let wf = waterfill(&[1.0], &[Some(9.0)], 2.0).unwrap();
        assert_eq!(wf.beta, 1.0);
        assert_eq!(wf.u, vec![2.0]);

        let wf = waterfill(&[1.0, 2.0], &[Some(-1.0), Some(0.0)], 3.0).unwrap();
        assert!(wf.exhausted);
        assert_eq!(wf.u, vec![0.0, 0.0]);
        assert_eq!(wf.beta, 0.0);

        assert!(waterfill(&[1.0], &[Some(1.0)], 0.0).is_err());
        assert!(waterfill(&[1.0], &[], 1.0).is_err());
    }

    #[test]
    fn waterfill_prunes_small_phi() {
        // Pass 1: sqrt(beta) = (10 + 0.1)/(1 + 2) > 0.1 so index 1 is dropped.
        let wf = waterfill(&[1.0, 1.0], &[Some(100.0), Some(0.01)], 1.0).unwrap();
        assert_eq!(wf.active, vec![true, false]);
        assert_eq!(wf.passes, 2);
        assert_relative_eq!(wf.u[0], 1.0, max_relative = 1e-14);
        assert_eq!(wf.u[1], 0.0);
    }

    #[test]
    fn kkt_residual_examples() {
        let spec = single(1.0, 1.0, 2.0, 0.5);
        let policy = TestPolicy::from_rates(vec![1.0], vec![1.0]).unwrap();
        let r = kkt_residual(&spec, &policy, 1.0 / 36.0).unwrap();
        assert!(r < 1e-16, "{r}");

        let perturbed = TestPolicy::from_rates(vec![1.1], vec![1.0]).unwrap();
        assert!(kkt_residual(&spec, &perturbed, 1.0 / 36.0).unwrap() > 1e-3);
    }

    #[test]
    fn zero_pair_examples() {
        let p = PersonParams {
            lambda: 1.0,
            mu: 3.0,
        };
        assert_eq!(zero_pair_check(&p, 0.5, 1.0, 1.0), PairCheck::ZeroSThenPair);
        let p = PersonParams {
            lambda: 3.0,
            mu: 1.0,
        };
        assert_eq!(zero_pair_check(&p, 0.5, 1.0, 1.0), PairCheck::ZeroCThenPair);
        let p = PersonParams {
            lambda: 1.0,
            mu: 1.0,
        };
        assert_eq!(zero_pair_check(&p, 0.5, 1.0, 1.0), PairCheck::Keep);
    }

    #[test]
    fn single_person_converges_to_symmetric_point() {
        let spec = single(1.0, 1.0, 2.0, 0.5);
        let init = TestPolicy::from_rates(vec![1.5], vec![0.5]).unwrap();
        let st = alternate_minimize(&spec, &init, &SolverOptions::default()).unwrap();
        assert!(st.converged);
        assert!((st.policy.s[0] - 1.0).abs() < 1e-6);
        assert!((st.policy.c[0] - 1.0).abs() < 1e-6);
        let d = weighted_error(&spec.people[0], st.policy.s[0], st.policy.c[0], 0.5).unwrap();
        assert!((d - 1.0 / 6.0).abs() < 1e-9);
        assert_eq!(st.active, vec![true, true]);
    }

    #[test]
    fn zero_pair_path_labels_source() {
        // theta = 0.5, lambda = 1, mu = 10: s hurts until c exceeds 9.
        let spec = single(1.0, 10.0, 2.0, 0.5);
        let init = TestPolicy::from_rates(vec![1.0], vec![1.0]).unwrap();
        let st = alternate_minimize(&spec, &init, &SolverOptions::default()).unwrap();
        assert_eq!((st.policy.s[0], st.policy.c[0]), (0.0, 0.0));
        assert_eq!(st.policy.fixed_label[0], Some(FixedLabel::AlwaysHealthy));
        assert!(matches!(
            st.pairs[0],
            PairStatus::Deactivated {
                cause: Deactivation::HealthyRateHarmful { .. },
                ..
            }
        ));
        assert!(st.converged);
    }

    #[test]
    fn zero_budget_tests_nobody() {
        let spec = single(1.0, 1.0, 0.0, 0.5);
        let report = solve(&spec, &SolverOptions::default(), None).unwrap();
        assert_eq!(report.chosen, StartKind::NoTest);
        assert_eq!(report.objective, 0.25);
    }

    #[test]
    fn random_init_properties() {
        let spec = PopulationSpec::from_rates(&[1.0; 5], &[2.0; 5], 7.0, 0.5).unwrap();
        let a = random_init(&spec, 11).unwrap();
        let b = random_init(&spec, 11).unwrap();
        let c = random_init(&spec, 12).unwrap();
        assert!((a.total_rate() - 7.0).abs() < 1e-12);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.s.iter().chain(&a.c).all(|&r| r > 0.0));
    }

    #[test]
    fn solve_prefers_candidates_in_order() {
        let spec = single(1.0, 1.0, 2.0, 0.5);
        let report = solve(&spec, &SolverOptions::default(), None).unwrap();
        assert_eq!(report.restarts.len(), 30 + 2);
        assert_eq!(report.restarts[0].start, StartKind::Uniform);
        assert_eq!(report.restarts.last().unwrap().start, StartKind::NoTest);
        // Uniform start already sits at the optimum.
        assert!((report.restarts[0].objective - report.objective).abs() < 1e-15);
        assert!((report.policy.s[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn provided_policy_is_rescaled_onto_budget() {
        let lambdas = geometric_rate_profile(4, 0.9, 3.0).unwrap();
        let mus = geometric_rate_profile(4, 1.1, 2.0).unwrap();
        let spec = PopulationSpec::from_rates(&lambdas, &mus, 6.0, 0.5).unwrap();
        let provided = TestPolicy::from_rates(vec![0.1; 4], vec![0.2; 4]).unwrap();
        let report = solve(&spec, &SolverOptions::default(), Some(&provided)).unwrap();
        assert!(report
            .restarts
            .iter()
            .any(|r| r.start == StartKind::Provided));
        let min = report
            .restarts
            .iter()
            .map(|r| r.objective)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(report.objective, min);
    }

    #[test]
    fn inactive_causes_hold_after_solve() {
        let lambdas = geometric_rate_profile(10, 0.9, 6.0).unwrap();
        let mus = geometric_rate_profile(10, 1.1, 4.0).unwrap();
        let spec = PopulationSpec::from_rates(&lambdas, &mus, 16.0, 0.5).unwrap();
        let report = solve(&spec, &SolverOptions::default(), None).unwrap();
        for (p, status) in spec.people.iter().zip(&report.pairs) {
            if let PairStatus::Deactivated { cause, .. } = status {
                assert!(cause.holds(p, spec.theta), "{cause:?}");
            }
        }
    }

    proptest! {
        #[test]
        fn waterfill_spends_budget(
            entries in prop::collection::vec((0.01f64..5.0, -1.0f64..10.0), 1..12),
            budget in 0.1f64..50.0,
        ) {
            let k: Vec<f64> = entries.iter().map(|e| e.0).collect();
            let phi: Vec<Option<f64>> = entries.iter().map(|e| Some(e.1)).collect();
            let wf = waterfill(&k, &phi, budget).unwrap();
            prop_assert!(wf.passes <= k.len());
            prop_assert!(wf.u.iter().all(|&u| u >= 0.0));
            if !wf.exhausted {
                let spent: f64 = wf.u.iter().sum();
                prop_assert!((spent - budget).abs() <= 1e-9 * budget.max(1.0));
                for ((&active, &u), f) in wf.active.iter().zip(&wf.u).zip(&phi) {
                    if active {
                        prop_assert!(f.unwrap() >= wf.beta);
                    } else {
                        prop_assert!(u == 0.0);
                    }
                }
            }
        }

        #[test]
        fn partials_match_central_differences(
            lambda in 0.1f64..10.0, mu in 0.1f64..10.0,
            s in 0.1f64..10.0, c in 0.1f64..10.0, theta in 0.0f64..=1.0,
        ) {
            let p = PersonParams { lambda, mu };
            let (ds, dc) = weighted_error_partials(&p, s, c, theta);
            let h = 1e-5;
            let f = |s: f64, c: f64| weighted_error(&p, s, c, theta).unwrap();
            let fs = (f(s + h * s, c) - f(s - h * s, c)) / (2.0 * h * s);
            let fc = (f(s, c + h * c) - f(s, c - h * c)) / (2.0 * h * c);
            let scale = f(s, c) / s.min(c);
            prop_assert!((ds - fs).abs() <= 1e-6 * ds.abs().max(1e-3 * scale));
            prop_assert!((dc - fc).abs() <= 1e-6 * dc.abs().max(1e-3 * scale));
        }
    }
}
