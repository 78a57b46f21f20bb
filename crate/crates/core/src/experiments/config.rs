//! Scenario configuration: a population (inline or generated from rate
//! profiles), an optional sweep, and solver / simulator settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    geometric_rate_profile, uniform_rate_profile, validate_population, PersonParams,
    PopulationSpec, TestPolicy,
};
use crate::optimizer::SolverOptions;
use crate::simulator::DEFAULT_HORIZON;

pub const DEFAULT_THETA: f64 = 0.5;
pub const DEFAULT_TOTAL_RATE: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Geometric,
    Uniform,
}

/// Generated population: infection rates `a·lambda_ratio^i` summing to
/// `lambda_total`, recovery rates `b·mu_ratio^i` summing to `mu_total`.
/// Ratios are ignored for the uniform kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileDirective {
    pub kind: ProfileKind,
    pub n: usize,
    pub lambda_ratio: f64,
    pub mu_ratio: f64,
    pub lambda_total: f64,
    pub mu_total: f64,
}

impl Default for ProfileDirective {
    fn default() -> Self {
        Self {
            kind: ProfileKind::Geometric,
            n: 10,
            lambda_ratio: 0.9,
            mu_ratio: 1.1,
            lambda_total: 6.0,
            mu_total: 4.0,
        }
    }
}

impl ProfileDirective {
    pub fn with_kind(self, kind: ProfileKind) -> Self {
        Self { kind, ..self }
    }

    pub fn with_n(self, n: usize) -> Self {
        Self { n, ..self }
    }

    pub fn people(&self) -> Result<Vec<PersonParams>> {
        let (lambdas, mus) = match self.kind {
            ProfileKind::Geometric => (
                geometric_rate_profile(self.n, self.lambda_ratio, self.lambda_total)?,
                geometric_rate_profile(self.n, self.mu_ratio, self.mu_total)?,
            ),
            ProfileKind::Uniform => (
                uniform_rate_profile(self.n, self.lambda_total)?,
                uniform_rate_profile(self.n, self.mu_total)?,
            ),
        };
        Ok(lambdas
            .into_iter()
            .zip(mus)
            .map(|(lambda, mu)| PersonParams { lambda, mu })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    #[serde(rename = "C")]
    TotalRate,
    #[serde(rename = "n")]
    Population,
    #[serde(rename = "theta")]
    Theta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl SweepSpec {
    pub fn new(param: SweepParam, values: Vec<f64>) -> Result<Self> {
        let sweep = Self { param, values };
        sweep.check()?;
        Ok(sweep)
    }

    fn check(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::InvalidArgument(
                "sweep needs at least one value".into(),
            ));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("sweep values must be finite".into()));
        }
        if self.values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "sweep values must be strictly increasing".into(),
            ));
        }
        if self.param == SweepParam::Population
            && self.values.iter().any(|&v| v < 1.0 || v.fract() != 0.0)
        {
            return Err(Error::InvalidArgument(
                "population sweep values must be positive integers".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub enabled: bool,
    pub horizon: f64,
    /// Falls back to the solver seed.
    pub seed: Option<u64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            horizon: DEFAULT_HORIZON,
            seed: None,
        }
    }
}

/// On-disk scenario document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub people: Option<Vec<PersonParams>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileDirective>,
    /// Policy to evaluate or simulate; also used as an extra solver start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<TestPolicy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// A config with its population resolved and validated.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: PopulationSpec,
    /// Profile the population came from, if any; population sweeps regenerate
    /// from it.
    pub profile: Option<ProfileDirective>,
    pub policy: Option<TestPolicy>,
    pub sweep: Option<SweepSpec>,
    pub solver: SolverOptions,
    pub sim: SimConfig,
    pub out: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.display()),
            ))
        })?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::InvalidArgument(format!("{}: {j}", path.display())),
            other => other,
        })
    }

    /// Resolves the population source. With neither `people` nor `profile`
    /// the default geometric profile is used.
    pub fn resolve(&self) -> Result<Scenario> {
        let (people, profile) = match (&self.people, &self.profile) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidArgument(
                    "config gives both `people` and `profile`; choose one population source".into(),
                ))
            }
            (Some(people), None) => (people.clone(), None),
            (None, Some(profile)) => (profile.people()?, Some(*profile)),
            (None, None) => {
                let profile = ProfileDirective::default();
                (profile.people()?, Some(profile))
            }
        };
        let spec = PopulationSpec {
            theta: self.theta.unwrap_or(DEFAULT_THETA),
            total_rate: self.total_rate.unwrap_or(DEFAULT_TOTAL_RATE),
            people,
        };
        validate_population(&spec).map_err(Error::Validation)?;
        if let Some(policy) = &self.policy {
            policy.check_dims(spec.len())?;
        }
        if let Some(sweep) = &self.sweep {
            sweep.check()?;
        }
        Ok(Scenario {
            spec,
            profile,
            policy: self.policy.clone(),
            sweep: self.sweep.clone(),
            solver: self.solver,
            sim: self.sim,
            out: self.out.clone(),
        })
    }
}

impl Scenario {
    /// Population with ten people, budget 16, theta 0.5 and geometric
    /// infection (ratio 0.9, total 6) and recovery (ratio 1.1, total 4) rates.
    pub fn reference() -> Self {
        ScenarioConfig::default()
            .resolve()
            .expect("reference scenario is valid")
    }

    pub fn sim_seed(&self) -> u64 {
        self.sim.seed.unwrap_or(self.solver.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_parses() {
        let cfg = ScenarioConfig::from_json(
            r#"{"theta": 0.5, "total_rate": 2, "people": [{"lambda": 1, "mu": 1}]}"#,
        )
        .unwrap();
        let sc = cfg.resolve().unwrap();
        assert_eq!(sc.spec.len(), 1);
        assert_eq!(sc.solver, SolverOptions::default());
        assert!(sc.profile.is_none());
    }

    #[test]
    fn full_document_parses() {
        let cfg = ScenarioConfig::from_json(
            r#"{
                "theta": 0.4, "total_rate": 12,
                "profile": {"kind": "uniform", "n": 4},
                "sweep": {"param": "theta", "values": [0.2, 0.3]},
                "solver": {"restarts": 5, "seed": 9},
                "sim": {"enabled": true, "horizon": 1000}
            }"#,
        )
        .unwrap();
        let sc = cfg.resolve().unwrap();
        assert_eq!(
            sc.spec.people,
            vec![
                PersonParams {
                    lambda: 1.5,
                    mu: 1.0
                };
                4
            ]
        );
        assert_eq!(sc.solver.restarts, 5);
        assert_eq!(sc.solver.tol, 1e-9);
        assert_eq!(sc.sweep.as_ref().unwrap().param, SweepParam::Theta);
        assert_eq!(sc.sim_seed(), 9);
    }

    #[test]
    fn two_population_sources_rejected() {
        let cfg = ScenarioConfig::from_json(
            r#"{"people": [{"lambda": 1, "mu": 1}], "profile": {"n": 3}}"#,
        )
        .unwrap();
        assert!(matches!(cfg.resolve(), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(ScenarioConfig::from_json(r#"{"thetta": 0.5}"#).is_err());
    }

    #[test]
    fn sweep_must_increase() {
        assert!(SweepSpec::new(SweepParam::TotalRate, vec![5.0, 5.0]).is_err());
        assert!(SweepSpec::new(SweepParam::TotalRate, vec![6.0, 5.0]).is_err());
        assert!(SweepSpec::new(SweepParam::Population, vec![2.0, 2.5]).is_err());
        assert!(SweepSpec::new(SweepParam::Theta, vec![]).is_err());
        assert!(SweepSpec::new(SweepParam::Population, vec![2.0, 3.0]).is_ok());
    }

    #[test]
    fn invalid_population_reports_violations() {
        let cfg = ScenarioConfig::from_json(
            r#"{"theta": 2, "people": [{"lambda": 1, "mu": 1}, {"lambda": 0, "mu": 1}]}"#,
        )
        .unwrap();
        match cfg.resolve() {
            Err(Error::Validation(v)) => assert_eq!(v.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reference_scenario() {
        let sc = Scenario::reference();
        assert_eq!(sc.spec.len(), 10);
        assert_eq!(sc.spec.total_rate, 16.0);
        let lambda_sum: f64 = sc.spec.people.iter().map(|p| p.lambda).sum();
        assert!((lambda_sum - 6.0).abs() < 1e-12);
    }
}
