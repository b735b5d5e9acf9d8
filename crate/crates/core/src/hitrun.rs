//! Accelerated hit-and-run inside a credible region.
//!
//! Each step draws a random direction, clips the line to the bounding
//! ellipsoid, and draws from the prior's marginal on the chord. Rejected
//! draws shrink the chord toward the reference point, so the step always
//! terminates on a convex region containing the reference.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{quad_form, spd_inverse};
use crate::region::{MembershipOracle, RegionGeometry};
use crate::stats::{substream, truncated_standard_normal};

/// Prior measure on the parameter space.
#[derive(Clone, Debug)]
pub enum Prior {
    Uniform,
    Gaussian {
        mean: DVector<f64>,
        precision: DMatrix<f64>,
    },
}

impl Prior {
    pub fn gaussian(mean: DVector<f64>, covariance: &DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != mean.len() || covariance.ncols() != mean.len() {
            return Err(Error::Shape {
                expected: mean.len(),
                got: covariance.nrows(),
            });
        }
        if covariance.clone().cholesky().is_none() {
            return Err(Error::Domain(
                "prior covariance is not positive definite".into(),
            ));
        }
        Ok(Prior::Gaussian {
            mean,
            precision: spd_inverse(covariance)?,
        })
    }

    fn chord_marginal(&self, r_ref: &DVector<f64>, e: &DVector<f64>) -> ChordMarginal {
        match self {
            Prior::Uniform => ChordMarginal::Uniform,
            Prior::Gaussian { mean, precision } => {
                let pe = precision * e;
                let a = e.dot(&pe);
                ChordMarginal::Normal {
                    mean: (mean - r_ref).dot(&pe) / a,
                    sd: a.sqrt().recip(),
                }
            }
        }
    }
}

enum ChordMarginal {
    Uniform,
    Normal { mean: f64, sd: f64 },
}

impl ChordMarginal {
    fn draw<R: Rng + ?Sized>(&self, lo: f64, hi: f64, rng: &mut R) -> f64 {
        match *self {
            ChordMarginal::Uniform => lo + (hi - lo) * rng.random::<f64>(),
            ChordMarginal::Normal { mean, sd } => {
                let z = truncated_standard_normal((lo - mean) / sd, (hi - mean) / sd, rng);
                (mean + sd * z).clamp(lo, hi)
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct ChainConfig {
    pub k_samples: usize,
    /// Discarded initial steps; `None` means `10·d`.
    pub burn_in: Option<usize>,
    pub thinning: usize,
    pub seed: u64,
    /// Stream under `seed`; chains differing only in stream are independent.
    pub stream: u64,
    pub max_shrink_iters: usize,
    /// Fraction of failed steps tolerated before the chain is declared unhealthy.
    pub failure_budget: f64,
    /// Probe chord endpoints for region points outside the bounding ellipsoid.
    pub check_containment: bool,
}

impl ChainConfig {
    pub fn new(k_samples: usize, seed: u64) -> Self {
        Self {
            k_samples,
            burn_in: None,
            thinning: 1,
            seed,
            stream: 0,
            max_shrink_iters: 64,
            failure_budget: 0.01,
            check_containment: true,
        }
    }

    pub fn burn_in_for(&self, d: usize) -> usize {
        self.burn_in.unwrap_or(10 * d)
    }
}

#[derive(Clone, Debug, Default)]
pub struct AcceptStats {
    /// `shrink_histogram[k]`: steps accepted after `k` shrinks.
    pub shrink_histogram: Vec<u64>,
    pub steps: u64,
    pub failures: u64,
    /// Chord endpoints that passed membership, i.e. region points the
    /// bounding ellipsoid failed to cover.
    pub containment_violations: u64,
}

impl AcceptStats {
    fn record_accept(&mut self, shrinks: usize) {
        if self.shrink_histogram.len() <= shrinks {
            self.shrink_histogram.resize(shrinks + 1, 0);
        }
        self.shrink_histogram[shrinks] += 1;
    }

    pub fn mean_shrinks(&self) -> f64 {
        let (n, s) = self
            .shrink_histogram
            .iter()
            .enumerate()
            .fold((0u64, 0u64), |(n, s), (k, &c)| (n + c, s + k as u64 * c));
        if n == 0 {
            0.0
        } else {
            s as f64 / n as f64
        }
    }

    pub fn merge(&mut self, other: &AcceptStats) {
        if self.shrink_histogram.len() < other.shrink_histogram.len() {
            self.shrink_histogram
                .resize(other.shrink_histogram.len(), 0);
        }
        for (a, b) in self
            .shrink_histogram
            .iter_mut()
            .zip(&other.shrink_histogram)
        {
            *a += b;
        }
        self.steps += other.steps;
        self.failures += other.failures;
        self.containment_violations += other.containment_violations;
    }
}

#[derive(Clone, Debug)]
pub struct RegionSample {
    /// One point per row.
    pub points: DMatrix<f64>,
    pub log_l_values: Vec<f64>,
    pub stats: AcceptStats,
}

impl RegionSample {
    pub fn len(&self) -> usize {
        self.log_l_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_l_values.is_empty()
    }

    pub fn point(&self, i: usize) -> DVector<f64> {
        self.points.row(i).transpose()
    }
}

fn random_direction<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 0.0 {
            return v / n;
        }
    }
}

/// Fraction of the chord endpoint probed for containment, just inside the
/// ellipsoid so round-off cannot push it out.
const ENDPOINT_PROBE: f64 = 1.0 - 1e-9;

/// One accelerated hit-and-run step from `r_ref`. Returns the new point and
/// its log-likelihood.
#[allow(clippy::too_many_arguments)]
pub fn hit_and_run_step<O, R>(
    r_ref: &DVector<f64>,
    geom: &RegionGeometry,
    oracle: &O,
    prior: &Prior,
    rng: &mut R,
    max_shrink_iters: usize,
    check_containment: bool,
    stats: &mut AcceptStats,
) -> Result<(DVector<f64>, f64)>
where
    O: MembershipOracle + ?Sized,
    R: Rng + ?Sized,
{
    stats.steps += 1;
    let e = random_direction(r_ref.len(), rng);
    let (mut b1, mut b2) = geom.chord_endpoints(r_ref, &e)?;
    if check_containment {
        for mu in [b1, b2] {
            if oracle
                .evaluate(&(r_ref + &e * (mu * ENDPOINT_PROBE)))
                .is_some()
            {
                stats.containment_violations += 1;
            }
        }
    }
    let marginal = prior.chord_marginal(r_ref, &e);
    for shrinks in 0..=max_shrink_iters {
        let beta = marginal.draw(b1, b2, rng);
        let y = r_ref + &e * beta;
        if let Some(ll) = oracle.evaluate(&y) {
            stats.record_accept(shrinks);
            return Ok((y, ll));
        }
        if beta < 0.0 {
            b1 = beta;
        } else if beta > 0.0 {
            b2 = beta;
        }
    }
    stats.failures += 1;
    Err(Error::StepFailure(max_shrink_iters))
}

/// Runs one chain from `start` and records `k_samples` region points.
pub fn sample_region<O: MembershipOracle + ?Sized>(
    geom: &RegionGeometry,
    oracle: &O,
    prior: &Prior,
    cfg: &ChainConfig,
    start: &DVector<f64>,
) -> Result<RegionSample> {
    if cfg.k_samples == 0 || cfg.thinning == 0 {
        return Err(Error::Domain(
            "k_samples and thinning must be positive".into(),
        ));
    }
    let d = oracle.dim();
    let mut ll = oracle
        .evaluate(start)
        .ok_or_else(|| Error::Domain("chain start is outside the region".into()))?;
    let mut rng = substream(cfg.seed, cfg.stream);
    let burn_in = cfg.burn_in_for(d);
    let total = burn_in + cfg.k_samples * cfg.thinning;
    let allowed = cfg.failure_budget * total as f64;

    let mut stats = AcceptStats::default();
    let mut r = start.clone();
    let mut points = DMatrix::zeros(cfg.k_samples, d);
    let mut log_l_values = Vec::with_capacity(cfg.k_samples);
    for step in 0..total {
        match hit_and_run_step(
            &r,
            geom,
            oracle,
            prior,
            &mut rng,
            cfg.max_shrink_iters,
            cfg.check_containment,
            &mut stats,
        ) {
            Ok((next, next_ll)) => {
                r = next;
                ll = next_ll;
            }
            Err(Error::StepFailure(_)) => {
                if stats.failures as f64 > allowed {
                    return Err(Error::ChainUnhealthy {
                        failures: stats.failures as usize,
                        steps: total,
                    });
                }
            }
            Err(e) => return Err(e),
        }
        if step >= burn_in && (step - burn_in + 1).is_multiple_of(cfg.thinning) {
            points.row_mut(log_l_values.len()).copy_from(&r.transpose());
            log_l_values.push(ll);
        }
    }
    Ok(RegionSample {
        points,
        log_l_values,
        stats,
    })
}

/// Solid ellipsoid `{(r − center)ᵀ A (r − center) ≤ 1}` as a membership
/// oracle, with log-likelihood surrogate `−(r − center)ᵀ A (r − center)`.
pub struct EllipsoidBody {
    pub center: DVector<f64>,
    pub a: DMatrix<f64>,
}

impl EllipsoidBody {
    /// The body and a bounding geometry that coincides with it.
    pub fn with_geometry(center: DVector<f64>, a: DMatrix<f64>) -> (Self, RegionGeometry) {
        let geom = RegionGeometry::from_ellipsoid(center.clone(), a.clone(), -1.0);
        (Self { center, a }, geom)
    }
}

impl MembershipOracle for EllipsoidBody {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn evaluate(&self, r: &DVector<f64>) -> Option<f64> {
        let q = quad_form(&self.a, &(r - &self.center));
        (q <= 1.0).then_some(-q)
    }
}
