//! Abstractions shared by the region geometry, the sampler and the oracles.
//!
//! The sampler only needs a convex parameter space with a membership test
//! and a log-likelihood on it. Quantum state space is one instance; the
//! synthetic Gaussian models used for validation are others.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// A convex parameter space `R₀` in real coordinates.
pub trait ParameterSpace: Sync {
    /// Number of real coordinates.
    fn dim(&self) -> usize;

    /// Whether `r` lies in `R₀`, up to `tol`.
    fn contains(&self, r: &DVector<f64>, tol: f64) -> bool;

    /// Euclidean projection onto `R₀`.
    fn project(&self, r: &DVector<f64>) -> DVector<f64>;

    /// A point well inside `R₀`, used to pull boundary points inward.
    fn interior_point(&self) -> DVector<f64>;
}

/// A log-likelihood defined on a parameter space.
pub trait LikelihoodModel: ParameterSpace {
    /// `log L(r)` in nats; `f64::NEG_INFINITY` where the likelihood vanishes.
    fn log_likelihood(&self, r: &DVector<f64>) -> f64;
}

/// Whether the estimator is interior to `R₀` (Case A) or on its boundary (Case B).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimatorCase {
    A,
    B,
}

impl std::fmt::Display for EstimatorCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimatorCase::A => f.write_str("A"),
            EstimatorCase::B => f.write_str("B"),
        }
    }
}

/// The maximum-likelihood point together with the local quantities that
/// shape the credible regions around it.
#[derive(Clone, Debug)]
pub struct PointEstimate {
    pub r_ml: DVector<f64>,
    pub log_l_max: f64,
    /// Gradient of `log L` at `r_ml`.
    pub gradient: DVector<f64>,
    /// Fisher information at `r_ml`.
    pub fisher: DMatrix<f64>,
    pub case: EstimatorCase,
}

impl PointEstimate {
    pub fn dim(&self) -> usize {
        self.r_ml.len()
    }
}
