//! Population parameters, test policies and the rate profiles used by the
//! experiment scenarios.
//!
//! Each source `i` alternates between healthy (`x = 0`) and infected
//! (`x = 1`): healthy spells are exponential with rate `lambda`, infected
//! spells exponential with rate `mu`. A tester samples the source at rate `s`
//! while its last result was healthy and at rate `c` while its last result was
//! infected. Sources that are never tested carry a constant estimate instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonParams {
    /// Infection rate (inverse mean healthy time).
    pub lambda: f64,
    /// Recovery rate (inverse mean infected time).
    pub mu: f64,
}

impl PersonParams {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        let p = Self { lambda, mu };
        p.check()?;
        Ok(p)
    }

    pub(crate) fn check(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "lambda must be positive and finite, got {}",
                self.lambda
            )));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "mu must be positive and finite, got {}",
                self.mu
            )));
        }
        Ok(())
    }

    /// Long-run fraction of time spent infected, `lambda / (lambda + mu)`.
    pub fn infected_fraction(&self) -> f64 {
        self.lambda / (self.lambda + self.mu)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub theta: f64,
    pub total_rate: f64,
    pub people: Vec<PersonParams>,
}

impl PopulationSpec {
    pub fn new(people: Vec<PersonParams>, total_rate: f64, theta: f64) -> Result<Self> {
        let spec = Self {
            theta,
            total_rate,
            people,
        };
        validate_population(&spec).map_err(Error::Validation)?;
        Ok(spec)
    }

    /// Builds a population whose infection and recovery rates follow two
    /// independent profiles of equal length.
    pub fn from_rates(lambdas: &[f64], mus: &[f64], total_rate: f64, theta: f64) -> Result<Self> {
        if lambdas.len() != mus.len() {
            return Err(Error::DimensionMismatch {
                expected: lambdas.len(),
                actual: mus.len(),
            });
        }
        let people = lambdas
            .iter()
            .zip(mus)
            .map(|(&lambda, &mu)| PersonParams { lambda, mu })
            .collect();
        Self::new(people, total_rate, theta)
    }

    pub fn len(&self) -> usize {
        self.people.len()
    }

    pub fn is_empty(&self) -> bool {
        self.people.is_empty()
    }
}

/// Constant estimate used for a source that receives no tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FixedLabel {
    /// Estimate pinned at healthy (`x̂ ≡ 0`).
    AlwaysHealthy,
    /// Estimate pinned at infected (`x̂ ≡ 1`).
    AlwaysInfected,
}

impl FixedLabel {
    pub fn estimate(self) -> bool {
        matches!(self, FixedLabel::AlwaysInfected)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPolicy {
    /// Test rate while the source is marked healthy.
    pub s: Vec<f64>,
    /// Test rate while the source is marked infected.
    pub c: Vec<f64>,
    /// Present exactly for sources with `s = c = 0`.
    pub fixed_label: Vec<Option<FixedLabel>>,
}

impl TestPolicy {
    /// Policy from explicit rates; every untested source gets `None` and must
    /// be labelled before evaluation.
    pub fn from_rates(s: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if s.len() != c.len() {
            return Err(Error::DimensionMismatch {
                expected: s.len(),
                actual: c.len(),
            });
        }
        for (i, &r) in s.iter().chain(c.iter()).enumerate() {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "test rate #{} must be finite and >= 0, got {r}",
                    i + 1
                )));
            }
        }
        let fixed_label = vec![None; s.len()];
        Ok(Self { s, c, fixed_label })
    }

    /// Every source tested at `total / (2n)` in both states.
    pub fn uniform(n: usize, total: f64) -> Self {
        let r = total / (2 * n) as f64;
        Self {
            s: vec![r; n],
            c: vec![r; n],
            fixed_label: vec![None; n],
        }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn total_rate(&self) -> f64 {
        self.s.iter().sum::<f64>() + self.c.iter().sum::<f64>()
    }

    pub fn is_untested(&self, i: usize) -> bool {
        self.s[i] == 0.0 && self.c[i] == 0.0
    }

    pub(crate) fn check_dims(&self, n: usize) -> Result<()> {
        for len in [self.s.len(), self.c.len(), self.fixed_label.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: len,
                });
            }
        }
        Ok(())
    }
}

fn check_profile_args(n: usize, total: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "profile length must be at least 1".into(),
        ));
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "profile total must be positive and finite, got {total}"
        )));
    }
    Ok(())
}

/// Rates `a·ratio^i` for `i = 1..=n`, with `a` chosen so that they sum to `total`.
pub fn geometric_rate_profile(n: usize, ratio: f64, total: f64) -> Result<Vec<f64>> {
    check_profile_args(n, total)?;
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "profile ratio must be positive and finite, got {ratio}"
        )));
    }
    // Weights are taken relative to the largest term so that long profiles with
    // ratio far from 1 do not overflow.
    let peak = if ratio > 1.0 { n as f64 } else { 1.0 };
    let log_ratio = ratio.ln();
    let weights: Vec<f64> = (1..=n)
        .map(|i| ((i as f64 - peak) * log_ratio).exp())
        .collect();
    let norm: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| total * w / norm).collect())
}

pub fn uniform_rate_profile(n: usize, total: f64) -> Result<Vec<f64>> {
    check_profile_args(n, total)?;
    Ok(vec![total / n as f64; n])
}

/// Collects every invariant violation instead of stopping at the first one.
pub fn validate_population(spec: &PopulationSpec) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if spec.people.is_empty() {
        out.push(Violation::EmptyPopulation);
    }
    for (i, p) in spec.people.iter().enumerate() {
        if !(p.lambda > 0.0 && p.lambda.is_finite()) {
            out.push(Violation::Lambda {
                index: i + 1,
                value: p.lambda,
            });
        }
        if !(p.mu > 0.0 && p.mu.is_finite()) {
            out.push(Violation::Mu {
                index: i + 1,
                value: p.mu,
            });
        }
    }
    if !(spec.total_rate >= 0.0 && spec.total_rate.is_finite()) {
        out.push(Violation::TotalRate(spec.total_rate));
    }
    if !(0.0..=1.0).contains(&spec.theta) {
        out.push(Violation::Theta(spec.theta));
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn geometric_profile_matches_direct_series() {
        // a = 6 / sum_{i=1..10} 0.9^i, summed term by term
        let mut series = 0.0;
        let mut term = 1.0;
        for _ in 0..10 {
            term *= 0.9;
            series += term;
        }
        let a = 6.0 / series;
        assert_relative_eq!(a, 1.023_56, epsilon = 1e-5);

        let rates = geometric_rate_profile(10, 0.9, 6.0).unwrap();
        assert_eq!(rates.len(), 10);
        assert_relative_eq!(rates[0], a * 0.9, max_relative = 1e-12);
        assert_relative_eq!(rates[0], 0.92121, epsilon = 1e-5);
        assert_relative_eq!(rates.iter().sum::<f64>(), 6.0, max_relative = 1e-12);
    }

    #[test]
    fn geometric_profile_trivial_cases() {
        assert_eq!(geometric_rate_profile(1, 0.5, 3.0).unwrap(), vec![3.0]);
        let flat = geometric_rate_profile(3, 1.0, 6.0).unwrap();
        for r in flat {
            assert_relative_eq!(r, 2.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn uniform_profile_values() {
        assert_eq!(uniform_rate_profile(3, 6.0).unwrap(), vec![2.0; 3]);
        assert_eq!(uniform_rate_profile(1, 4.0).unwrap(), vec![4.0]);
        assert_eq!(uniform_rate_profile(4, 1.0).unwrap(), vec![0.25; 4]);
    }

    #[test]
    fn profile_argument_errors() {
        assert!(matches!(
            geometric_rate_profile(0, 0.9, 1.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            geometric_rate_profile(3, 0.0, 1.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            geometric_rate_profile(3, -1.0, 1.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            geometric_rate_profile(3, 0.9, 0.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            uniform_rate_profile(0, 1.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            uniform_rate_profile(2, -3.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn validation_collects_all_violations() {
        let good = PopulationSpec {
            theta: 0.5,
            total_rate: 2.0,
            people: vec![
                PersonParams {
                    lambda: 1.0,
                    mu: 1.0
                };
                3
            ],
        };
        assert!(validate_population(&good).is_ok());

        let mut bad = good.clone();
        bad.people[1].lambda = 0.0;
        let v = validate_population(&bad).unwrap_err();
        assert_eq!(
            v,
            vec![Violation::Lambda {
                index: 2,
                value: 0.0
            }]
        );
        assert!(v[0].to_string().contains("person 2"));

        let mut bad = good.clone();
        bad.theta = 1.5;
        let v = validate_population(&bad).unwrap_err();
        assert_eq!(v, vec![Violation::Theta(1.5)]);
        assert!(v[0].to_string().contains("theta"));

        let bad = PopulationSpec {
            theta: -0.1,
            total_rate: -1.0,
            people: vec![],
        };
        assert_eq!(validate_population(&bad).unwrap_err().len(), 3);
    }

    #[test]
    fn population_json_layout() {
        let spec = PopulationSpec::from_rates(&[1.0, 2.0], &[3.0, 4.0], 5.0, 0.25).unwrap();
        let json = serde_json::to_value(&spec).unwrap();
        assert_eq!(
            json,
            serde_json::json!({
                "theta": 0.25,
                "total_rate": 5.0,
                "people": [{"lambda": 1.0, "mu": 3.0}, {"lambda": 2.0, "mu": 4.0}]
            })
        );
        let back: PopulationSpec = serde_json::from_value(json).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn fixed_label_serializes_kebab_case() {
        let s = serde_json::to_string(&FixedLabel::AlwaysInfected).unwrap();
        assert_eq!(s, "\"always-infected\"");
    }

    proptest! {
        #[test]
        fn geometric_profile_sums_to_total(n in 1usize..=10_000, ratio in 0.1f64..10.0, total in 0.01f64..1e3) {
            let rates = geometric_rate_profile(n, ratio, total).unwrap();
            let sum: f64 = rates.iter().sum();
            prop_assert!(((sum - total) / total).abs() <= 1e-12);
        }

        #[test]
        fn geometric_profile_is_monotone(n in 2usize..200, ratio in 0.1f64..10.0) {
            prop_assume!((ratio - 1.0).abs() > 1e-6);
            let rates = geometric_rate_profile(n, ratio, 1.0).unwrap();
            for w in rates.windows(2) {
                if ratio < 1.0 {
                    prop_assert!(w[1] < w[0]);
                } else {
                    prop_assert!(w[1] > w[0]);
                }
            }
        }

        #[test]
        fn uniform_equals_unit_ratio_geometric(n in 1usize..500, total in 0.01f64..1e3) {
            let u = uniform_rate_profile(n, total).unwrap();
            let g = geometric_rate_profile(n, 1.0, total).unwrap();
            for (a, b) in u.iter().zip(&g) {
                prop_assert!((a - b).abs() <= 1e-12 * total.max(1.0));
            }
        }
    }
}
