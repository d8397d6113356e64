use thiserror::Error;

/// Errors produced by model construction, quadrature, and estimation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("sigma must be nonnegative, got {0}")]
    NegativeSigma(f64),

    #[error("params.sigma = {sigma} does not equal the fixed sigma-tilde = {fixed}")]
    FixedSigmaMismatch { sigma: f64, fixed: f64 },

    #[error("quadrature order {0} outside supported range 1..=200")]
    OrderOutOfRange(usize),

    #[error("integrand returned a non-finite value at node {node}")]
    NonFiniteIntegrand { node: f64 },

    #[error("non-finite log-likelihood value: {0}")]
    NonFinite(f64),

    #[error("subset size {k} exceeds cluster size {m}")]
    SubsetTooLarge { k: usize, m: usize },

    #[error("score requested at a boundary point (sigma = 0 with free sigma)")]
    BoundaryPoint,

    #[error("posterior mode search did not converge (last gradient {grad:.3e})")]
    NewtonDivergence { grad: f64 },

    #[error("curvature of log g is zero at eta = {0}")]
    ZeroCurvature(f64),

    #[error("expected-score solver failed: {0}")]
    SolverFailure(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("csv error at line {line}: {msg}")]
    Csv { line: u64, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
