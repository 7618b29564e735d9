use thiserror::Error;

/// Errors raised across the design, simulation and estimation pipeline.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not reach tolerance: estimate {estimate} with error {error}")]
    Accuracy { estimate: f64, error: f64 },

    #[error("root not bracketed: f({lo}) = {f_lo}, f({hi}) = {f_hi}")]
    Bracketing { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("numeric derivative failed: {0}")]
    Derivative(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("infeasible error spend: requested {requested}, available {available}")]
    InfeasibleSpend { requested: f64, available: f64 },

    #[error("information must increase across analyses: stage 1 = {stage1}, stage 2 = {stage2}")]
    Ordering { stage1: f64, stage2: f64 },

    #[error("maximum-information search failed: {0}")]
    Search(String),

    #[error("invalid parameters: {0}")]
    Parameter(String),

    #[error("model not identifiable: {0}")]
    NonIdentifiable(String),

    #[error("information prediction failed: {0}")]
    Prediction(String),

    #[error("invalid boundaries: a = {a}, b = {b}")]
    Boundary { a: f64, b: f64 },

    #[error("likelihood evaluation failed: {0}")]
    Likelihood(String),

    #[error("I/O error at {path}: {message}")]
    Io { path: String, message: String },

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
