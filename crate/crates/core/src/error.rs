use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("link distance must be positive, got {0}")]
    NonPositiveDistance(f64),

    #[error("program is infeasible: {0}")]
    Infeasible(String),

    #[error("SINR targets unattainable; binding information users {binding:?}")]
    SinrInfeasible { binding: Vec<usize> },

    #[error("energy-harvesting targets unattainable; best min Q_j/E_j ratio {best_ratio:.4e}")]
    EnergyInfeasible { best_ratio: f64 },

    #[error("iteration limit reached after {0} iterations")]
    IterationLimit(usize),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("matrix is not rank one: lambda_2/lambda_1 = {ratio:.3e}")]
    RankTooHigh { ratio: f64 },

    #[error("no feasible candidate among {draws} randomization draws")]
    NoFeasibleCandidate { draws: usize },

    #[error("IRS amplification budget exhausted by noise alone (remaining {remaining:.3e} W)")]
    BudgetExhausted { remaining: f64 },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("verification failed: {what} (index {index})")]
    VerificationFailed { what: String, index: usize },

    #[error("experiment aborted: {0}")]
    Aborted(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
