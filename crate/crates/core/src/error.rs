use thiserror::Error;

use crate::simnet::PartyId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("outlier budget {z} must be smaller than the total weight {n}")]
    OutlierBudget { z: f64, n: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("enumeration of {combinations} center sets exceeds the budget of {budget}")]
    BudgetExceeded { combinations: u128, budget: u128 },

    #[error("witness is not a valid solution: cost {cost} exceeds {limit}")]
    InvalidWitness { cost: f64, limit: f64 },

    #[error("illegal link {from} -> {to}: only coordinator/machine links exist")]
    IllegalLink { from: PartyId, to: PartyId },

    #[error("message from {from} stamped for round {stamped} during round {current}")]
    StaleRound {
        from: PartyId,
        stamped: usize,
        current: usize,
    },

    #[error("{party} tried to send as {claimed}")]
    Spoofed { party: PartyId, claimed: PartyId },

    #[error("protocol exceeded its declared maximum of {max} rounds")]
    TooManyRounds { max: usize },

    #[error("no candidate center set is feasible at budget {budget} (iteration {iteration})")]
    Infeasible { budget: f64, iteration: usize },

    #[error("no ladder value produced a solution")]
    NoLadderSolution,

    #[error("line {row}, column {col}: cannot parse {value:?} as a number")]
    Parse {
        row: usize,
        col: usize,
        value: String,
    },

    #[error("line {row}: expected {expected} columns, found {found}")]
    Ragged {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("unknown algorithm {0:?}")]
    UnknownAlgorithm(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
