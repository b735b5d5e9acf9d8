use thiserror::Error;

/// Errors raised by the certification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid Hilbert-space dimension {0} (need D >= 2)")]
    InvalidDimension(usize),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("measurement is not informationally complete: rank {rank} < d = {d}")]
    NotInformationallyComplete { rank: usize, d: usize },

    #[error("invalid measurement: {0}")]
    InvalidPovm(String),

    #[error("state ensemble is degenerate (frame operator min eigenvalue {0:e})")]
    DegenerateEnsemble(f64),

    #[error("probability vector is not normalized (sum = {0})")]
    InvalidDistribution(f64),

    #[error("likelihood maximization did not converge after {iterations} iterations (projected gradient norm {grad_norm:e})")]
    Convergence {
        iterations: usize,
        grad_norm: f64,
        last_iterate: Vec<f64>,
    },

    #[error("outcome {outcome} has nonpositive probability {p:e}")]
    DegenerateProbability { outcome: usize, p: f64 },

    #[error("Fisher information is ill-conditioned (min eigenvalue {min:e}, max {max:e})")]
    IllConditionedFisher { min: f64, max: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("reference point lies outside the bounding ellipsoid (quadratic form {0})")]
    ReferenceOutside(f64),

    #[error("could not find a point inside the region at lambda = {lambda:e}")]
    EmptyRegion { lambda: f64 },

    #[error("hit-and-run step exceeded {0} interval shrinks")]
    StepFailure(usize),

    #[error("chain unhealthy: {failures} failed steps out of {steps}")]
    ChainUnhealthy { failures: usize, steps: usize },

    #[error("empty sample")]
    EmptySample,

    #[error("data quality: {0}")]
    DataQuality(String),

    #[error("out of asymptotic regime: cap parameter l = {0} >= 1")]
    OutOfRegime(f64),

    #[error("infeasible request: {0}")]
    Feasibility(String),

    #[error("at lambda = {lambda:e}: {source}")]
    AtLambda {
        lambda: f64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
