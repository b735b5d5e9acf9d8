//! Closed-form asymptotics for the Gaussian regime.
//!
//! For large N the likelihood is Gaussian around the estimator, so region
//! averages reduce to moments over an ellipsoid (interior estimator) or over
//! an ellipsoidal cap cut by the tangent hyperplane through the estimator
//! (boundary estimator). In whitened coordinates the cap is
//! `{|z| ≤ 1, z·ẑ ≥ l}` and its `x`-th radial normalizer is
//! `𝒩_{d,l,x} = V_d · I_{(1−l)/2}((d+x)/2, (d+x)/2)`; `𝒩_{d,l,1}` is the cap
//! volume in units of the ellipsoid's.

use nalgebra::{DMatrix, DVector};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::linalg::spd_inverse;
use crate::model::{EstimatorCase, PointEstimate};

/// Volume of the unit `d`-ball, `π^{d/2}/Γ(d/2 + 1)`.
pub fn ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    (h * std::f64::consts::PI.ln() - ln_gamma(h + 1.0)).exp()
}

/// `𝒩_{d,l,x} = V_d · I_{(1−l)/2}((d+x)/2, (d+x)/2)`.
pub fn cap_normalizer(d: usize, l: f64, x: f64) -> f64 {
    let a = (d as f64 + x) / 2.0;
    let t = ((1.0 - l) / 2.0).clamp(0.0, 1.0);
    ball_volume(d) * beta_reg(a, a, t)
}

/// Region-averaged squared Hilbert–Schmidt distance to the estimator and
/// region-averaged `log L − log(λ L_max)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticPoint {
    pub s2: f64,
    pub u: f64,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "lambda must lie in (0, 1), got {lambda}"
        )))
    }
}

/// Interior estimator: `S₂ = Tr(F⁻¹)(−log λ)/(d/2 + 1)`, `u = −2 log λ/(d + 2)`.
pub fn analytic_case_a(fisher: &DMatrix<f64>, lambda: f64) -> Result<AnalyticPoint> {
    check_lambda(lambda)?;
    let d = fisher.nrows() as f64;
    let tr = spd_inverse(fisher)?.trace();
    let neg_log = -lambda.ln();
    Ok(AnalyticPoint {
        s2: tr * neg_log / (d / 2.0 + 1.0),
        u: 2.0 * neg_log / (d + 2.0),
    })
}

/// Cap moments shared by the boundary-estimator formulas.
struct CapMoments {
    log_lambda_prime: f64,
    n1: f64,
    /// `m`: unnormalized first moment of `r − r_ML` over the cap.
    m: DVector<f64>,
    /// `M̄`: half the unnormalized second moment of `r − r_ML` over the cap.
    m_bar: DMatrix<f64>,
}

fn cap_moments(fisher: &DMatrix<f64>, gradient: &DVector<f64>, lambda: f64) -> Result<CapMoments> {
    check_lambda(lambda)?;
    let d = fisher.nrows();
    if gradient.len() != d {
        return Err(Error::Shape {
            expected: d,
            got: gradient.len(),
        });
    }
    let f_inv = spd_inverse(fisher)?;
    let w = &f_inv * gradient;
    let gfg = gradient.dot(&w);
    let log_lambda_prime = lambda.ln() - 0.5 * gfg;
    let l = (0.5 * gfg / -log_lambda_prime).sqrt();
    if !(l < 1.0) {
        return Err(Error::OutOfRegime(l));
    }
    let df = d as f64;
    let n1 = cap_normalizer(d, l, 1.0);
    let n3 = cap_normalizer(d, l, 3.0);
    let m = if l > 0.0 {
        let rim = ball_volume(d - 1) / (l * (df + 1.0)) * (1.0 - l * l).powf((df + 1.0) / 2.0);
        &w * (n1 - rim)
    } else {
        DVector::zeros(d)
    };
    let m_bar = &f_inv * (-log_lambda_prime / (df + 2.0) * n3) + (&m * w.transpose()) * 0.5;
    Ok(CapMoments {
        log_lambda_prime,
        n1,
        m,
        m_bar,
    })
}

/// Boundary estimator: averages over the ellipsoidal cap.
///
/// `u` is the cap average of the Gaussian surrogate
/// `gᵀδ − δᵀFδ/2 − log λ`, i.e. `−log λ + Tr(g mᵀ − F M̄)/𝒩_{d,l,1}`.
pub fn analytic_case_b(
    fisher: &DMatrix<f64>,
    gradient: &DVector<f64>,
    lambda: f64,
) -> Result<AnalyticPoint> {
    let c = cap_moments(fisher, gradient, lambda)?;
    let s2 = 2.0 * c.m_bar.trace() / c.n1;
    let u = -lambda.ln() + (gradient.dot(&c.m) - (fisher * &c.m_bar).trace()) / c.n1;
    Ok(AnalyticPoint { s2, u })
}

/// The alternative form
/// `[−log λ′ + Tr(g mᵀ − F M̄)/𝒩_{d,l,1}] · log(λ L_max)/log(λ′ L_max)`.
///
/// It coincides with [`analytic_case_b`] when `g = 0` but not otherwise; it
/// is kept for comparison only.
pub fn case_b_u_alternative(
    fisher: &DMatrix<f64>,
    gradient: &DVector<f64>,
    lambda: f64,
    log_l_max: f64,
) -> Result<f64> {
    let c = cap_moments(fisher, gradient, lambda)?;
    let bracket = -c.log_lambda_prime + (gradient.dot(&c.m) - (fisher * &c.m_bar).trace()) / c.n1;
    Ok(bracket * (lambda.ln() + log_l_max) / (c.log_lambda_prime + log_l_max))
}

/// Dispatches on the estimator case.
pub fn analytic_point(est: &PointEstimate, lambda: f64) -> Result<AnalyticPoint> {
    match est.case {
        EstimatorCase::A => analytic_case_a(&est.fisher, lambda),
        EstimatorCase::B => analytic_case_b(&est.fisher, &est.gradient, lambda),
    }
}
