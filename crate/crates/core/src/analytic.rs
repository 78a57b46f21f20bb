//! Long-run estimation error of a single tested source, population
//! aggregates, and an exact stationary solve of the joint
//! `(status, estimate)` chain that serves as an independent check.
//!
//! While the estimate reads healthy the source alternates between healthy
//! and undetected-infected spells until a test catches it infected; while the
//! estimate reads infected the roles swap. The renewal reward over one such
//! healthy-marked / infected-marked cycle gives the closed forms here.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FixedLabel, PersonParams, PopulationSpec, TestPolicy};

/// Expected durations over one estimate cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleStatistics {
    /// Mean time the estimate stays at healthy.
    pub e_i1: f64,
    /// Mean time the estimate stays at infected.
    pub e_i2: f64,
    /// Mean undetected-infection time inside the healthy-marked interval.
    pub e_te1: f64,
    /// Mean stale-infection time inside the infected-marked interval.
    pub e_te2: f64,
}

/// Per-source long-run error fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBreakdown {
    /// Fraction of time with `x = 1, x̂ = 0`.
    pub d1: f64,
    /// Fraction of time with `x = 0, x̂ = 1`.
    pub d2: f64,
    /// `theta·d1 + (1 − theta)·d2`.
    pub d: f64,
}

impl ErrorBreakdown {
    pub fn weighted(d1: f64, d2: f64, theta: f64) -> Self {
        Self {
            d1,
            d2,
            d: theta * d1 + (1.0 - theta) * d2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationError {
    /// Mean weighted error over the population.
    pub delta: f64,
    pub delta_bar1: f64,
    pub delta_bar2: f64,
    pub per_person: Vec<ErrorBreakdown>,
}

/// Joint states of `(x, x̂)` in the order used by [`CtmcDistribution::pi`].
pub const JOINT_STATES: [(u8, u8); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtmcDistribution {
    /// Probabilities of `(0,0), (1,0), (1,1), (0,1)`.
    pub pi: [f64; 4],
}

impl CtmcDistribution {
    /// Mass on the undetected-infection state `(1, 0)`.
    pub fn undetected(&self) -> f64 {
        self.pi[1]
    }

    /// Mass on the stale-infection state `(0, 1)`.
    pub fn stale(&self) -> f64 {
        self.pi[3]
    }
}

fn check_tested(p: &PersonParams, s: f64, c: f64) -> Result<()> {
    p.check()?;
    if !(s > 0.0 && s.is_finite() && c > 0.0 && c.is_finite()) {
        return Err(Error::Domain(format!(
            "closed forms need s > 0 and c > 0 (got s = {s}, c = {c}); \
             use no_test_error for untested sources"
        )));
    }
    Ok(())
}

fn check_theta(theta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidArgument(format!(
            "theta must lie in [0, 1], got {theta}"
        )));
    }
    Ok(())
}

pub fn expected_cycle_durations(p: &PersonParams, s: f64, c: f64) -> Result<CycleStatistics> {
    check_tested(p, s, c)?;
    let PersonParams { lambda, mu } = *p;
    Ok(CycleStatistics {
        e_i1: 1.0 / s + (s + mu) / (s * lambda),
        e_i2: 1.0 / c + (c + lambda) / (c * mu),
        e_te1: 1.0 / s,
        e_te2: 1.0 / c,
    })
}

/// Long-run undetected-infection and stale-infection fractions `(d1, d2)`.
pub fn error_rates(p: &PersonParams, s: f64, c: f64) -> Result<(f64, f64)> {
    check_tested(p, s, c)?;
    let PersonParams { lambda, mu } = *p;
    let scale = mu * lambda / (mu + lambda);
    let denom = mu * c + lambda * s + c * s;
    Ok((scale * c / denom, scale * s / denom))
}

pub fn weighted_error(p: &PersonParams, s: f64, c: f64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    check_tested(p, s, c)?;
    let PersonParams { lambda, mu } = *p;
    Ok(
        mu * lambda / (mu + lambda) * (theta * c + (1.0 - theta) * s)
            / (mu * c + lambda * s + c * s),
    )
}

/// Partial derivatives of [`weighted_error`] with respect to `s` and `c`.
///
/// Each partial is defined whenever the denominator is nonzero, so `s` (resp.
/// `c`) may be zero here as long as the other rate is positive.
pub fn weighted_error_partials(p: &PersonParams, s: f64, c: f64, theta: f64) -> (f64, f64) {
    let PersonParams { lambda, mu } = *p;
    let scale = mu * lambda / (mu + lambda);
    let denom = mu * c + lambda * s + s * c;
    let denom_sq = denom * denom;
    let ds = scale * c * ((1.0 - theta) * mu - theta * (c + lambda)) / denom_sq;
    let dc = scale * s * (theta * lambda - (1.0 - theta) * (s + mu)) / denom_sq;
    (ds, dc)
}

/// Error of a source whose estimate is pinned to `label`.
pub fn label_error(p: &PersonParams, label: FixedLabel, theta: f64) -> ErrorBreakdown {
    let frac = p.infected_fraction();
    match label {
        FixedLabel::AlwaysHealthy => ErrorBreakdown::weighted(frac, 0.0, theta),
        FixedLabel::AlwaysInfected => ErrorBreakdown::weighted(0.0, 1.0 - frac, theta),
    }
}

/// Best constant estimate for an untested source. Ties go to always-healthy.
pub fn no_test_error(p: &PersonParams, theta: f64) -> Result<(f64, FixedLabel)> {
    p.check()?;
    check_theta(theta)?;
    let healthy = theta * p.lambda / (p.mu + p.lambda);
    let infected = (1.0 - theta) * p.mu / (p.mu + p.lambda);
    if healthy <= infected {
        Ok((healthy, FixedLabel::AlwaysHealthy))
    } else {
        Ok((infected, FixedLabel::AlwaysInfected))
    }
}

/// Error breakdown for one source under `policy`, routing untested sources
/// through their fixed label.
pub fn person_error(
    p: &PersonParams,
    s: f64,
    c: f64,
    label: Option<FixedLabel>,
    theta: f64,
    index: usize,
) -> Result<ErrorBreakdown> {
    if s > 0.0 && c > 0.0 {
        let (d1, d2) = error_rates(p, s, c)?;
        return Ok(ErrorBreakdown::weighted(d1, d2, theta));
    }
    // With one rate at zero the estimate eventually freezes. A zero rate while
    // marked infected leaves the estimate at infected forever, and vice versa.
    let label = if s > 0.0 {
        FixedLabel::AlwaysInfected
    } else if c > 0.0 {
        FixedLabel::AlwaysHealthy
    } else {
        label.ok_or(Error::MissingLabel { index })?
    };
    p.check()?;
    Ok(label_error(p, label, theta))
}

pub fn population_error(spec: &PopulationSpec, policy: &TestPolicy) -> Result<PopulationError> {
    check_theta(spec.theta)?;
    let n = spec.len();
    if n == 0 {
        return Err(Error::InvalidArgument("population is empty".into()));
    }
    policy.check_dims(n)?;
    let per_person = spec
        .people
        .iter()
        .enumerate()
        .map(|(i, p)| {
            person_error(
                p,
                policy.s[i],
                policy.c[i],
                policy.fixed_label[i],
                spec.theta,
                i + 1,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let nf = n as f64;
    Ok(PopulationError {
        delta: per_person.iter().map(|b| b.d).sum::<f64>() / nf,
        delta_bar1: per_person.iter().map(|b| b.d1).sum::<f64>() / nf,
        delta_bar2: per_person.iter().map(|b| b.d2).sum::<f64>() / nf,
        per_person,
    })
}

/// Transition rates of the joint chain as `(from, to, rate)` over indices into
/// [`JOINT_STATES`]. Tests in agreeing states are self-loops and left out.
fn joint_transitions(p: &PersonParams, s: f64, c: f64) -> [(usize, usize, f64); 6] {
    [
        (0, 1, p.lambda), // infection, unnoticed
        (1, 0, p.mu),     // recovery before any test
        (1, 2, s),        // test catches the infection
        (2, 3, p.mu),     // recovery, estimate now stale
        (3, 2, p.lambda), // reinfection before the next test
        (3, 0, c),        // test catches the recovery
    ]
}

/// Stationary distribution of the 4-state `(x, x̂)` chain by direct linear
/// solve of the balance equations plus normalization.
///
/// The chain is started at `x = 0` with estimate `label` (healthy when no
/// label is given) and restricted to the states reachable from there, which
/// makes the stationary law unique even when one test rate is zero. With both
/// rates zero a label is required.
pub fn ctmc_stationary(
    p: &PersonParams,
    s: f64,
    c: f64,
    label: Option<FixedLabel>,
) -> Result<CtmcDistribution> {
    p.check()?;
    if !(s >= 0.0 && s.is_finite() && c >= 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "test rates must be finite and >= 0 (got s = {s}, c = {c})"
        )));
    }
    if s == 0.0 && c == 0.0 && label.is_none() {
        return Err(Error::InvalidArgument(
            "both test rates are zero; a fixed estimate label is required".into(),
        ));
    }
    let start = match label {
        Some(FixedLabel::AlwaysInfected) => 3,
        _ => 0,
    };
    let edges: Vec<_> = joint_transitions(p, s, c)
        .into_iter()
        .filter(|&(_, _, r)| r > 0.0)
        .collect();

    let mut reachable = [false; 4];
    reachable[start] = true;
    let mut frontier = vec![start];
    while let Some(u) = frontier.pop() {
        for &(from, to, _) in &edges {
            if from == u && !reachable[to] {
                reachable[to] = true;
                frontier.push(to);
            }
        }
    }
    let states: Vec<usize> = (0..4).filter(|&k| reachable[k]).collect();
    let local = |k: usize| states.iter().position(|&x| x == k);
    let m = states.len();

    // Rows of Q^T: flow balance for each state.
    let mut a = DMatrix::<f64>::zeros(m, m);
    for &(from, to, rate) in &edges {
        if let (Some(i), Some(j)) = (local(from), local(to)) {
            a[(j, i)] += rate;
            a[(i, i)] -= rate;
        }
    }
    // One balance equation is redundant; replace it with normalization.
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(m);
    rhs[m - 1] = 1.0;
    let sol = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular(format!("joint chain balance system ({m} states)")))?;

    let mut pi = [0.0; 4];
    for (k, &state) in states.iter().enumerate() {
        // Transient states solve to tiny negative round-off.
        pi[state] = sol[k].max(0.0);
    }
    Ok(CtmcDistribution { pi })
}
