use thiserror::Error;

/// Errors raised by the simulator and the verification harness.
#[derive(Debug, Error)]
pub enum FiapError {
    #[error("intensity {intensity} exceeds dominating rate {bound} at t = {time}")]
    BoundViolation { time: f64, intensity: f64, bound: f64 },

    #[error("dominating rate {bound} is not positive while the intensity at t = {time} is {intensity}")]
    NonPositiveBound { time: f64, intensity: f64, bound: f64 },

    #[error("non-finite value {value} in {context} at t = {time}")]
    NonFinite { context: &'static str, time: f64, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("at least 2 replicas are required, got {0}")]
    TooFewReplicas(usize),

    #[error("exact enumeration needs {needed} free coordinates, budget is {budget}")]
    EnumerationBudget { needed: usize, budget: usize },

    #[error("unknown builtin model `{0}`")]
    UnknownModel(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error("empty sample")]
    EmptySample,

    #[error("degenerate binning: {0}")]
    DegenerateBinning(String),

    #[error("too few usable points for a slope fit: {0} (need 3)")]
    TooFewPoints(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FiapError>;
