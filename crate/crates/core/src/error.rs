use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A closed form was evaluated outside the region where it is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected} entries, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("person {index} has no test rates and no fixed estimate label")]
    MissingLabel { index: usize },

    #[error("{}", ViolationList(.0))]
    Validation(Vec<Violation>),

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A single broken invariant of a population description. Person indices are
/// 1-based to match how people are numbered in configs and reports.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyPopulation,
    Lambda { index: usize, value: f64 },
    Mu { index: usize, value: f64 },
    TotalRate(f64),
    Theta(f64),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyPopulation => write!(f, "population must contain at least one person"),
            Violation::Lambda { index, value } => {
                write!(
                    f,
                    "person {index}: lambda must be positive and finite, got {value}"
                )
            }
            Violation::Mu { index, value } => {
                write!(
                    f,
                    "person {index}: mu must be positive and finite, got {value}"
                )
            }
            Violation::TotalRate(v) => write!(f, "total_rate must be finite and >= 0, got {v}"),
            Violation::Theta(v) => write!(f, "theta must lie in [0, 1], got {v}"),
        }
    }
}

struct ViolationList<'a>(&'a [Violation]);

impl fmt::Display for ViolationList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid population:")?;
        for v in self.0 {
            write!(f, "\n  - {v}")?;
        }
        Ok(())
    }
}
