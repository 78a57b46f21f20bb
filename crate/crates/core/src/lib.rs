//! Timely tracking of many independent two-state Markov sources with
//! rate-limited random testing.
//!
//! - [`model`]: sources, budgets and test policies.
//! - [`analytic`]: closed-form long-run error and an exact joint-chain check.
//! - [`optimizer`]: budgeted test-rate allocation by water-filling.
//! - [`simulator`]: event-driven Monte Carlo of the tracking process.
//! - [`experiments`]: scenario configs, reference sweeps and CSV/JSON output.

pub mod analytic;
pub mod error;
pub mod experiments;
pub mod model;
pub mod optimizer;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result, Violation};
pub use model::{FixedLabel, PersonParams, PopulationSpec, TestPolicy};
