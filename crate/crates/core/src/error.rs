use thiserror::Error;

use crate::data::Side;

pub type Result<T> = std::result::Result<T, Error>;

/// One problem found while reading a battle-series CSV file.
///
/// `row` is the 1-based line number in the file (the header is line 1).
/// Cells that are missing entirely have no row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowIssue {
    pub row: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for RowIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.row {
            Some(row) => write!(f, "row {row}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("no data rows")]
    NoDataRows,

    #[error("{} validation error(s): {}", .0.len(), join_issues(.0))]
    Validation(Vec<RowIssue>),

    #[error("invalid battle series: {0}")]
    InvalidSeries(String),

    #[error("day window {first}:{last} is outside the series range {min}:{max}")]
    WindowOutOfRange {
        first: u32,
        last: u32,
        min: u32,
        max: u32,
    },

    #[error("invalid day window: {0}")]
    InvalidWindow(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unknown category `{0}`")]
    UnknownCategory(String),

    #[error("negative strength {value} for side {side:?}")]
    NegativeStrength { side: Side, value: f64 },

    #[error("zero strength raised to negative exponent {exponent} (side {side:?})")]
    Singularity { side: Side, exponent: f64 },

    #[error("state equation undefined: {0}")]
    UndefinedState(String),

    #[error("unknown preset `{0}` (expected linear, square or ambush)")]
    UnknownPreset(String),

    #[error("log-likelihood domain error on day {day}: {component} rate is {value}")]
    LogDomain {
        day: u32,
        component: String,
        value: f64,
    },

    #[error("log-linear fit domain error on day {day}: {what} is not strictly positive")]
    LogLinearDomain { day: u32, what: String },

    #[error("zero denominator in concentrated rate estimate for side {0:?}")]
    ZeroDenominator(Side),

    #[error("insufficient observations: need at least {needed} days, got {got}")]
    InsufficientObservations { needed: usize, got: usize },

    #[error("rank-deficient design matrix")]
    RankDeficient,

    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),

    #[error("all {restarts} restart(s) diverged: {detail}")]
    Diverged { restarts: usize, detail: String },

    #[error("ill-conditioned Hessian (condition estimate {condition:e}) after {iterations} iteration(s)")]
    IllConditioned {
        condition: f64,
        iterations: usize,
        last: Vec<f64>,
    },

    #[error("{0}")]
    Gof(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("phase {phase} ({first}:{last}) failed: {source}")]
    PhaseFailed {
        phase: usize,
        first: u32,
        last: u32,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
}

fn join_issues(issues: &[RowIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
