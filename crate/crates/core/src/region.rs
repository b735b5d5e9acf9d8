//! Per-λ geometry of the credible region `R_λ = {r ∈ R₀ : L(r) ≥ λ L_max}`.
//!
//! Near the estimator, `log L ≈ log L_max + gᵀδ − δᵀFδ/2` with `δ = r − r_ML`.
//! Its isocontour at `λ L_max` is the ellipsoid
//! `(r − r_c)ᵀ F (r − r_c) ≤ −2 log λ′` centered at `r_c = r_ML + F⁻¹g`,
//! where `log λ′ = log λ − gᵀF⁻¹g/2`. An inflated copy of that ellipsoid
//! bounds the hit-and-run chords; membership itself always uses the exact
//! likelihood.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{quad_form, spd_inverse};
use crate::model::{EstimatorCase, LikelihoodModel, PointEstimate};

pub const DEFAULT_INFLATION: f64 = 2.0;
pub const DEFAULT_START_ATTEMPTS: usize = 32;

/// Bounding ellipsoid `{r : (r − center)ᵀ A (r − center) ≤ 1}` and region
/// threshold for one λ.
#[derive(Clone, Debug)]
pub struct RegionGeometry {
    pub lambda: f64,
    pub lambda_prime: f64,
    pub center: DVector<f64>,
    pub a: DMatrix<f64>,
    /// Distance from the ellipsoid center to the tangent hyperplane through
    /// `r_ML`, in units of the (uninflated) ellipsoid radius.
    pub l: f64,
    pub inflation: f64,
    /// `log λ + log L_max`.
    pub log_threshold: f64,
}

pub fn build_geometry(est: &PointEstimate, lambda: f64, inflation: f64) -> Result<RegionGeometry> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::Domain(format!(
            "lambda must lie in (0, 1), got {lambda}"
        )));
    }
    if !(inflation >= 1.0) {
        return Err(Error::Domain(format!(
            "inflation must be >= 1, got {inflation}"
        )));
    }
    let f_inv = spd_inverse(&est.fisher)?;
    let log_lambda = lambda.ln();
    let (log_lambda_prime, center) = match est.case {
        EstimatorCase::A => (log_lambda, est.r_ml.clone()),
        EstimatorCase::B => {
            let shift = &f_inv * &est.gradient;
            let gfg = est.gradient.dot(&shift);
            (log_lambda - 0.5 * gfg, &est.r_ml + shift)
        }
    };
    let l = ((log_lambda - log_lambda_prime) / -log_lambda_prime)
        .max(0.0)
        .sqrt();
    let a = &est.fisher / (-2.0 * log_lambda_prime * inflation * inflation);
    Ok(RegionGeometry {
        lambda,
        lambda_prime: log_lambda_prime.exp(),
        center,
        a,
        l,
        inflation,
        log_threshold: log_lambda + est.log_l_max,
    })
}

impl RegionGeometry {
    /// A geometry with an explicit ellipsoid, for synthetic bodies.
    pub fn from_ellipsoid(center: DVector<f64>, a: DMatrix<f64>, log_threshold: f64) -> Self {
        Self {
            lambda: log_threshold.exp().min(1.0),
            lambda_prime: log_threshold.exp().min(1.0),
            center,
            a,
            l: 0.0,
            inflation: 1.0,
            log_threshold,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `(r − center)ᵀ A (r − center)`.
    pub fn quad_form(&self, r: &DVector<f64>) -> f64 {
        quad_form(&self.a, &(r - &self.center))
    }

    /// Parameters `μ₋ < 0 < μ₊` where the line `r_ref + μ e` crosses the
    /// ellipsoid boundary.
    pub fn chord_endpoints(&self, r_ref: &DVector<f64>, e: &DVector<f64>) -> Result<(f64, f64)> {
        let delta = r_ref - &self.center;
        let ae = &self.a * e;
        let a = e.dot(&ae);
        let b = delta.dot(&ae);
        let c = quad_form(&self.a, &delta);
        if !(c < 1.0) {
            return Err(Error::ReferenceOutside(c));
        }
        if !(a > 0.0) {
            return Err(Error::Domain(
                "bounding matrix is not positive definite".into(),
            ));
        }
        let disc = (b * b - a * (c - 1.0)).sqrt();
        // Cancellation-free roots of a μ² + 2 b μ + (c − 1) = 0.
        let q = -(b + b.signum() * disc);
        let (r1, r2) = if q == 0.0 {
            (-disc / a, disc / a)
        } else {
            (q / a, (c - 1.0) / q)
        };
        Ok((r1.min(r2), r1.max(r2)))
    }
}

/// Tests points for membership in a region; returns `log L` for members.
pub trait MembershipOracle: Sync {
    fn dim(&self) -> usize;
    fn evaluate(&self, r: &DVector<f64>) -> Option<f64>;
}

/// `R_λ` of a likelihood model: physical and above the likelihood threshold.
pub struct CredibleRegion<'a, M> {
    pub model: &'a M,
    pub log_threshold: f64,
    pub tol: f64,
}

impl<'a, M: LikelihoodModel> CredibleRegion<'a, M> {
    pub fn new(model: &'a M, geom: &RegionGeometry, tol: f64) -> Self {
        Self {
            model,
            log_threshold: geom.log_threshold,
            tol,
        }
    }
}

impl<M: LikelihoodModel> MembershipOracle for CredibleRegion<'_, M> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn evaluate(&self, r: &DVector<f64>) -> Option<f64> {
        let ll = self.model.log_likelihood(r);
        (ll >= self.log_threshold && self.model.contains(r, self.tol)).then_some(ll)
    }
}

/// Whether `r ∈ R_λ` under the exact likelihood criterion.
pub fn membership<M: LikelihoodModel>(
    r: &DVector<f64>,
    geom: &RegionGeometry,
    model: &M,
    tol: f64,
) -> bool {
    CredibleRegion::new(model, geom, tol).evaluate(r).is_some()
}

/// Margin used to decide that a point is strictly inside `R₀`.
const STRICT_MARGIN: f64 = 1e-12;

/// A starting point for the chain that passes membership and lies strictly
/// inside `R₀` where possible.
pub fn find_interior_start<M: LikelihoodModel>(
    est: &PointEstimate,
    geom: &RegionGeometry,
    model: &M,
    n_attempts: usize,
    tol: f64,
    seed: u64,
) -> Result<DVector<f64>> {
    let region = CredibleRegion::new(model, geom, tol);
    let usable = |r: &DVector<f64>| region.evaluate(r).is_some() && geom.quad_form(r) < 1.0;
    let strict = |r: &DVector<f64>| usable(r) && model.contains(r, -STRICT_MARGIN);

    if strict(&est.r_ml) {
        return Ok(est.r_ml.clone());
    }
    let interior = model.interior_point();
    for k in 0..7 {
        let t = 10f64.powi(k - 6);
        let r = &est.r_ml * (1.0 - t) + &interior * t;
        if strict(&r) {
            return Ok(r);
        }
    }

    // Fallback: drive random physical points toward the ellipsoid surface,
    // then pull them back toward r_ML.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = est.dim();
    let scale = geom.quad_form(&interior).max(1.0).recip().sqrt();
    for _ in 0..n_attempts {
        let jitter = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut x = model.project(&(&geom.center + jitter * scale * 0.1));
        let mut step = 0.1;
        for _ in 0..200 {
            let delta = &x - &geom.center;
            let residual = 1.0 - quad_form(&geom.a, &delta);
            let grad = &geom.a * &delta * (-4.0 * residual);
            let candidate = model.project(&(&x - &grad * step));
            let new_residual = 1.0 - geom.quad_form(&candidate);
            if new_residual * new_residual < residual * residual {
                x = candidate;
                step *= 1.2;
            } else {
                step *= 0.5;
            }
        }
        for t in [0.5, 0.9, 0.99, 0.999] {
            let r = &x * (1.0 - t) + &est.r_ml * t;
            if strict(&r) {
                return Ok(r);
            }
        }
    }
    if usable(&est.r_ml) {
        return Ok(est.r_ml.clone());
    }
    Err(Error::EmptyRegion {
        lambda: geom.lambda,
    })
}
