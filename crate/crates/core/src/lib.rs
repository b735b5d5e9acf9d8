//! In-region sampling certification of Bayesian credible regions.
//!
//! For a maximum-likelihood estimate, the credible regions
//! `R_λ = {r : L(r) ≥ λ L_max}` are characterized by their size `S_λ`
//! (prior content), credibility `C_λ` (posterior content) and capacity
//! (region-average distance to the estimator). Instead of filtering a sample
//! of the whole parameter space, points are drawn inside each `R_λ` with an
//! accelerated hit-and-run chain, and `S_λ` follows from the region average
//! `u_λ` of `log L − log(λ L_max)` through the ODE `∂y/∂λ = −y/(λ u_λ)` with
//! `y = u_λ S_λ`.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod bloch;
pub mod certify;
pub mod error;
pub mod hitrun;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod region;
pub mod stats;
pub mod tomography;

pub use error::{Error, Result};
