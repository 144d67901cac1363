use thiserror::Error;

/// Errors raised by the consensus laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("graph must have at least 2 nodes, got {0}")]
    TooFewNodes(usize),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("incompatible graphs: expected {expected} nodes, got {found}")]
    IncompatibleGraphs { expected: usize, found: usize },

    #[error("cannot take the union of an empty sequence of graphs")]
    EmptyUnion,

    #[error("union of the periodic components is not strongly connected")]
    DisconnectedComponents,

    #[error("index out of covered range: {0}")]
    OutOfRange(String),

    #[error("joint connectivity never completes within the trace (window from t={start} stays disconnected)")]
    NeverConnected { start: usize },

    #[error("no extensible exponent on the grid up to {max_delta} satisfies the condition")]
    NoExponentOnGrid { max_delta: f64 },

    #[error("no consensus guarantee for extensible exponent {0} > 1/2")]
    ExponentTooLarge(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("gain schedule undefined at t={t}: {reason}")]
    GainUndefined { t: usize, reason: String },

    #[error("operation requires a deterministic topology process")]
    NonDeterministicProcess,

    #[error("exact moment propagation does not support {0} noise")]
    UnsupportedNoise(&'static str),

    #[error("factor {value} outside (0, 1) at schedule index {index}")]
    FactorOutOfRange { index: usize, value: f64 },

    #[error("nonpositive value {value} at t={t} in rate fit")]
    NonPositive { t: f64, value: f64 },

    #[error("rate fit window holds {0} points, need at least 10")]
    TooFewPoints(usize),

    #[error("distance budget radicand {0} is negative; the bound is vacuous")]
    VacuousBudget(f64),

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
