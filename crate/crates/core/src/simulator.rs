//! Event-driven Monte Carlo of the joint `(x, x̂)` process.
//!
//! In each joint state every enabled clock (infection or recovery, plus the
//! test clock for the current estimate) is drawn fresh; the earliest fires.
//! Memorylessness makes redrawing after every event exact. Error bars come
//! from batch means over equal slices of the single sample path.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{FixedLabel, PersonParams, PopulationSpec, TestPolicy};
use crate::rng::stream_rng;

pub const DEFAULT_HORIZON: f64 = 1e5;
pub const BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SimState {
    /// True status.
    pub x: bool,
    /// Last test result (or fixed label).
    pub xhat: bool,
    pub t: f64,
    /// Time spent with `x = 1, x̂ = 0`.
    pub acc1: f64,
    /// Time spent with `x = 0, x̂ = 1`.
    pub acc2: f64,
}

impl SimState {
    /// Index into [`crate::analytic::JOINT_STATES`].
    pub fn joint_index(&self) -> usize {
        match (self.x, self.xhat) {
            (false, false) => 0,
            (true, false) => 1,
            (true, true) => 2,
            (false, true) => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub d1_hat: f64,
    pub d2_hat: f64,
    pub d_hat: f64,
    pub horizon: f64,
    pub events: u64,
    pub stderr1: f64,
    pub stderr2: f64,
    /// Batch-means standard error of `d_hat`.
    pub stderr: f64,
    /// Time spent in `(0,0), (1,0), (1,1), (0,1)`.
    pub occupancy: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSimReport {
    pub delta_hat: f64,
    pub delta_bar1_hat: f64,
    pub delta_bar2_hat: f64,
    /// Standard error of `delta_hat`, combining independent per-person errors.
    pub stderr: f64,
    pub per_person: Vec<SimReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Event {
    Infection,
    Recovery,
    Test,
}

/// Status events leave the estimate alone; a test copies status into it.
fn apply(state: &mut SimState, event: Event) {
    match event {
        Event::Infection => state.x = true,
        Event::Recovery => state.x = false,
        Event::Test => state.xhat = state.x,
    }
}

fn exp_draw(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    // Rates are validated positive before sampling.
    Exp::new(rate).expect("positive rate").sample(rng)
}

struct Batches {
    width: f64,
    time: Vec<[f64; 4]>,
}

impl Batches {
    fn new(horizon: f64, count: usize) -> Self {
        Self {
            width: horizon / count as f64,
            time: vec![[0.0; 4]; count],
        }
    }

    /// Credits `[from, to)` spent in `state` to the batches it overlaps.
    fn credit(&mut self, state: usize, from: f64, to: f64) {
        let last = self.time.len() - 1;
        let mut t = from;
        while t < to {
            let b = ((t / self.width) as usize).min(last);
            let end = if b == last {
                to
            } else {
                ((b + 1) as f64 * self.width).min(to)
            };
            self.time[b][state] += end - t;
            if end <= t {
                // Floating point left us on a boundary; push to the next batch.
                self.time[(b + 1).min(last)][state] += to - t;
                break;
            }
            t = end;
        }
    }

    fn means(&self, state: usize) -> Vec<f64> {
        self.time.iter().map(|b| b[state] / self.width).collect()
    }
}

fn batch_stderr(values: &[f64]) -> f64 {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (var / m).sqrt()
}

fn run(
    p: &PersonParams,
    s: f64,
    c: f64,
    initial_estimate: bool,
    theta: f64,
    horizon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SimReport> {
    p.check()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if !(s >= 0.0 && s.is_finite() && c >= 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "test rates must be finite and >= 0 (got s = {s}, c = {c})"
        )));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidArgument(format!(
            "theta must lie in [0, 1], got {theta}"
        )));
    }

    let mut state = SimState {
        xhat: initial_estimate,
        ..SimState::default()
    };
    let mut occupancy = [0.0; 4];
    let mut batches = Batches::new(horizon, BATCHES);
    let mut events = 0u64;

    while state.t < horizon {
        let (status_event, status_rate) = if state.x {
            (Event::Recovery, p.mu)
        } else {
            (Event::Infection, p.lambda)
        };
        let test_rate = if state.xhat { c } else { s };

        let mut fire = (status_event, exp_draw(rng, status_rate));
        if test_rate > 0.0 {
            let wait = exp_draw(rng, test_rate);
            if wait < fire.1 {
                fire = (Event::Test, wait);
            }
        }

        let next = state.t + fire.1;
        let end = next.min(horizon);
        let joint = state.joint_index();
        let dwell = end - state.t;
        occupancy[joint] += dwell;
        batches.credit(joint, state.t, end);
        match joint {
            1 => state.acc1 += dwell,
            3 => state.acc2 += dwell,
            _ => {}
        }
        state.t = end;
        if next >= horizon {
            break;
        }

        events += 1;
        apply(&mut state, fire.0);
    }

    let d1_hat = state.acc1 / horizon;
    let d2_hat = state.acc2 / horizon;
    let b1 = batches.means(1);
    let b2 = batches.means(3);
    let bd: Vec<f64> = b1
        .iter()
        .zip(&b2)
        .map(|(a, b)| theta * a + (1.0 - theta) * b)
        .collect();
    Ok(SimReport {
        d1_hat,
        d2_hat,
        d_hat: theta * d1_hat + (1.0 - theta) * d2_hat,
        horizon,
        events,
        stderr1: batch_stderr(&b1),
        stderr2: batch_stderr(&b2),
        stderr: batch_stderr(&bd),
        occupancy,
    })
}

/// Simulates one source from `x = x̂ = 0` up to `horizon`.
pub fn simulate_person(
    p: &PersonParams,
    s: f64,
    c: f64,
    theta: f64,
    horizon: f64,
    seed: u64,
) -> Result<SimReport> {
    run(p, s, c, false, theta, horizon, &mut stream_rng(seed, 0))
}

/// Simulates every source independently with a per-index stream derived
/// from `seed`. Untested sources start with their fixed label and, having no
/// test clock, keep it.
pub fn simulate_population(
    spec: &PopulationSpec,
    policy: &TestPolicy,
    horizon: f64,
    seed: u64,
) -> Result<PopulationSimReport> {
    let n = spec.len();
    if n == 0 {
        return Err(Error::InvalidArgument("population is empty".into()));
    }
    policy.check_dims(n)?;
    let per_person = (0..n)
        .into_par_iter()
        .map(|i| {
            let (s, c) = (policy.s[i], policy.c[i]);
            let initial = if policy.is_untested(i) {
                policy.fixed_label[i]
                    .ok_or(Error::MissingLabel { index: i + 1 })?
                    .estimate()
            } else {
                FixedLabel::AlwaysHealthy.estimate()
            };
            let mut rng = stream_rng(seed, i as u64);
            run(
                &spec.people[i],
                s,
                c,
                initial,
                spec.theta,
                horizon,
                &mut rng,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let nf = n as f64;
    let mean = |f: fn(&SimReport) -> f64| per_person.iter().map(f).sum::<f64>() / nf;
    Ok(PopulationSimReport {
        delta_hat: mean(|r| r.d_hat),
        delta_bar1_hat: mean(|r| r.d1_hat),
        delta_bar2_hat: mean(|r| r.d2_hat),
        stderr: per_person
            .iter()
            .map(|r| r.stderr * r.stderr)
            .sum::<f64>()
            .sqrt()
            / nf,
        per_person,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{error_rates, no_test_error};

    fn person(lambda: f64, mu: f64) -> PersonParams {
        PersonParams { lambda, mu }
    }

    fn within(value: f64, target: f64, se: f64, k: f64) -> bool {
        (value - target).abs() <= k * se
    }

    #[test]
    fn unit_case_matches_closed_form() {
        let r = simulate_person(&person(1.0, 1.0), 1.0, 1.0, 0.5, 1e5, 3).unwrap();
        assert!(within(r.d1_hat, 1.0 / 6.0, r.stderr1, 3.0), "{r:?}");
        assert!(within(r.d2_hat, 1.0 / 6.0, r.stderr2, 3.0), "{r:?}");
        assert_eq!(r.d_hat, 0.5 * r.d1_hat + 0.5 * r.d2_hat);
    }

    #[test]
    fn untested_source_matches_infected_fraction() {
        let r = simulate_person(&person(1.0, 1.0), 0.0, 0.0, 0.5, 1e5, 9).unwrap();
        assert!(within(r.d1_hat, 0.5, r.stderr1, 3.0), "{r:?}");
        assert_eq!(r.d2_hat, 0.0);
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let p = person(0.7, 1.9);
        let a = simulate_person(&p, 2.0, 0.5, 0.3, 2e4, 42).unwrap();
        let b = simulate_person(&p, 2.0, 0.5, 0.3, 2e4, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_person(&p, 2.0, 0.5, 0.3, 2e4, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn occupancy_covers_horizon() {
        let r = simulate_person(&person(3.0, 0.5), 1.0, 4.0, 0.5, 5e4, 1).unwrap();
        let total: f64 = r.occupancy.iter().sum();
        assert!((total - 5e4).abs() <= 1e-9 * 5e4);
        assert!(r.occupancy[1] / 5e4 == r.d1_hat);
    }

    #[test]
    fn rejects_bad_horizon() {
        let p = person(1.0, 1.0);
        assert!(matches!(
            simulate_person(&p, 1.0, 1.0, 0.5, 0.0, 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(simulate_person(&p, 1.0, 1.0, 0.5, -1.0, 0).is_err());
    }

    #[test]
    fn batches_split_across_boundaries() {
        let mut b = Batches::new(10.0, 5);
        b.credit(2, 1.0, 7.5);
        let spread: Vec<f64> = b.time.iter().map(|t| t[2]).collect();
        assert_eq!(spread, vec![1.0, 2.0, 2.0, 1.5, 0.0]);
    }

    #[test]
    fn identical_people_share_aggregate() {
        let spec = PopulationSpec::from_rates(&[1.0, 1.0], &[1.0, 1.0], 4.0, 0.5).unwrap();
        let policy = TestPolicy::from_rates(vec![1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let r = simulate_population(&spec, &policy, 1e5, 5).unwrap();
        assert!(within(r.delta_hat, 1.0 / 6.0, r.stderr, 3.0), "{r:?}");
    }

    #[test]
    fn labelled_population_matches_no_test_baseline() {
        let spec = PopulationSpec::from_rates(&[2.0, 0.5], &[0.5, 2.0], 0.0, 0.5).unwrap();
        let mut policy = TestPolicy::from_rates(vec![0.0; 2], vec![0.0; 2]).unwrap();
        assert!(matches!(
            simulate_population(&spec, &policy, 1e4, 0),
            Err(Error::MissingLabel { index: 1 })
        ));
        let mut expected = 0.0;
        for (i, p) in spec.people.iter().enumerate() {
            let (d, label) = no_test_error(p, spec.theta).unwrap();
            policy.fixed_label[i] = Some(label);
            expected += d / 2.0;
        }
        let r = simulate_population(&spec, &policy, 1e5, 8).unwrap();
        assert!(
            within(r.delta_hat, expected, r.stderr, 3.0),
            "{r:?} vs {expected}"
        );
    }

    #[test]
    fn events_touch_only_their_own_bit() {
        for x in [false, true] {
            for xhat in [false, true] {
                let base = SimState {
                    x,
                    xhat,
                    ..SimState::default()
                };
                let mut st = base;
                apply(&mut st, Event::Test);
                assert_eq!((st.x, st.xhat), (x, x));
                let mut st = base;
                apply(&mut st, Event::Infection);
                assert_eq!((st.x, st.xhat), (true, xhat));
                let mut st = base;
                apply(&mut st, Event::Recovery);
                assert_eq!((st.x, st.xhat), (false, xhat));
            }
        }
    }

    #[test]
    fn fast_testing_tracks_closely() {
        let p = person(0.3, 0.3);
        let r = simulate_person(&p, 50.0, 50.0, 0.5, 1e4, 2).unwrap();
        let (d1, d2) = error_rates(&p, 50.0, 50.0).unwrap();
        assert!(r.d1_hat + r.d2_hat <= 1.0);
        assert!(within(r.d1_hat, d1, r.stderr1, 4.0));
        assert!(within(r.d2_hat, d2, r.stderr2, 4.0));
    }
}
