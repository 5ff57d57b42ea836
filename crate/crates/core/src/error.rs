use std::fmt;

use catl_neural::NeuralError;

/// Syntax error in a specification source, 1-based position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, thiserror::Error)]
pub enum CatlError {
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
    #[error("unknown capability `{0}`")]
    UnknownCapability(String),
    #[error("unknown region `{0}`")]
    UnknownRegion(String),
    #[error("trajectory has {available} states but evaluation needs {needed}")]
    TrajectoryTooShort { needed: usize, available: usize },
    #[error("task needs {count} agents with `{capability}` but only {available} exist")]
    TaskCountExceeds {
        capability: String,
        count: usize,
        available: usize,
    },
    #[error("DNF would have about {estimate} clauses, above the cap of {cap}")]
    ClauseCapExceeded { estimate: f64, cap: usize },
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("invalid trajectory: {0}")]
    Trajectory(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = CatlError> = std::result::Result<T, E>;
