use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("{what} failed; last residual {residual:e}")]
    SolverFailure { what: String, residual: f64 },

    #[error("matrix exponential overflow (scaled norm {scaled_norm:e})")]
    ExpOverflow { scaled_norm: f64 },

    #[error("matrix is singular")]
    Singular,

    #[error("irreducibility required by the endemic equilibrium theorem: {0}")]
    Reducible(String),

    #[error("hypothesis fails: {0}")]
    Hypothesis(String),

    #[error("shift below JLE: sampled semigroup norm reached {growth:e}")]
    ShiftBelowJle { growth: f64 },

    #[error("invariance drift at t={time}: component {component} = {value:e}")]
    InvarianceDrift { time: f64, component: usize, value: f64 },

    #[error("time {t} beyond signal horizon {horizon}")]
    BeyondHorizon { t: f64, horizon: f64 },

    #[error("combinatorial budget exceeded: {count:e} products (limit 1e6)")]
    Budget { count: f64 },
}

impl Error {
    /// True for failures of a theorem's hypotheses (as opposed to malformed input).
    pub fn is_hypothesis_failure(&self) -> bool {
        matches!(self, Error::Hypothesis(_) | Error::Reducible(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
