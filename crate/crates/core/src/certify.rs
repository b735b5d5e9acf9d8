//! Size, credibility and capacity of credible regions from in-region samples.
//!
//! `S_λ` follows from the region average `u_λ` through
//! `d log y/dλ = −1/(λ u_λ)` with `y = u S`, and the credibility from
//! `C_λ = (λ S_λ + ∫_λ¹ S)/∫₀¹ S`.

use log::{debug, warn};
use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hitrun::{sample_region, AcceptStats, ChainConfig, Prior, RegionSample};
use crate::model::{EstimatorCase, LikelihoodModel, PointEstimate};
use crate::region::{
    build_geometry, find_interior_start, CredibleRegion, DEFAULT_INFLATION, DEFAULT_START_ATTEMPTS,
};
use crate::stats::{batch_means, isotonic_nonincreasing, substream, McEstimate};
use statrs::function::gamma::{gamma_ur, ln_gamma};

pub const DEFAULT_GRID_POINTS: usize = 200;
pub const DEFAULT_LAMBDA_MIN: f64 = 1e-6;
pub const DEFAULT_LAMBDA_MAX: f64 = 1.0 - 1e-3;
pub const DEFAULT_EULER_SUBSTEPS: usize = 128;

/// How grid points are spaced between the end points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridSpacing {
    /// Geometric in `τ = −log λ`: resolves both `λ → 0` and `λ → 1`.
    LogTau,
    /// Geometric in `λ`.
    LogLambda,
}

/// Strictly increasing λ values in `(0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    values: Vec<f64>,
}

impl LambdaGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("lambda grid is empty".into()));
        }
        if values.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::Domain(
                "lambda grid values must lie in (0, 1)".into(),
            ));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain(
                "lambda grid must be strictly increasing".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn spaced(
        n: usize,
        lambda_min: f64,
        lambda_max: f64,
        spacing: GridSpacing,
    ) -> Result<Self> {
        if n == 0 || !(0.0 < lambda_min && lambda_min < 1.0 && 0.0 < lambda_max && lambda_max < 1.0)
        {
            return Err(Error::Domain("invalid lambda grid specification".into()));
        }
        if n == 1 {
            return Self::new(vec![lambda_min]);
        }
        if lambda_min >= lambda_max {
            return Err(Error::Domain("lambda_min must be below lambda_max".into()));
        }
        let frac = |i: usize| i as f64 / (n - 1) as f64;
        let mut values: Vec<f64> = match spacing {
            GridSpacing::LogTau => {
                let (a, b) = ((-lambda_min.ln()).ln(), (-lambda_max.ln()).ln());
                (0..n)
                    .map(|i| (-(a + (b - a) * frac(i)).exp()).exp())
                    .collect()
            }
            GridSpacing::LogLambda => {
                let (a, b) = (lambda_min.ln(), lambda_max.ln());
                (0..n).map(|i| (a + (b - a) * frac(i)).exp()).collect()
            }
        };
        // Exact endpoints, free of round-trip error through the logs.
        values[0] = lambda_min;
        values[n - 1] = lambda_max;
        Self::new(values)
    }

    /// The default 200-point grid on `[10⁻⁶, 1 − 10⁻³]`.
    pub fn default_grid() -> Self {
        Self::spaced(
            DEFAULT_GRID_POINTS,
            DEFAULT_LAMBDA_MIN,
            DEFAULT_LAMBDA_MAX,
            GridSpacing::LogTau,
        )
        .expect("default grid is valid")
    }

    /// Inserts the midpoint in `log τ` between consecutive points.
    pub fn refined(&self) -> Self {
        let mut values = Vec::with_capacity(2 * self.values.len() - 1);
        for w in self.values.windows(2) {
            values.push(w[0]);
            let mid = ((-w[0].ln()).ln() + (-w[1].ln()).ln()) / 2.0;
            values.push((-mid.exp()).exp());
        }
        values.extend(self.values.last());
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Region average of `log L − log(λ L_max)`.
pub fn u_average(sample: &RegionSample, lambda: f64, log_l_max: f64) -> Result<McEstimate> {
    let offset = lambda.ln() + log_l_max;
    let values: Vec<f64> = sample.log_l_values.iter().map(|ll| ll - offset).collect();
    batch_means(&values)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapacityMode {
    /// `(Σ|Δ_j|^p)^{1/p}`.
    Root,
    /// `Σ|Δ_j|^p`; with `p = 2` the squared Hilbert–Schmidt distance.
    Power,
}

/// Region average of the `l_p` distance to `r_ml`.
pub fn capacity_average(
    sample: &RegionSample,
    r_ml: &DVector<f64>,
    p: f64,
    mode: CapacityMode,
) -> Result<McEstimate> {
    if !(p > 0.0) {
        return Err(Error::Domain(format!(
            "capacity exponent must be positive, got {p}"
        )));
    }
    let values: Vec<f64> = (0..sample.len())
        .map(|i| {
            let row = sample.points.row(i);
            let s: f64 = row
                .iter()
                .zip(r_ml.iter())
                .map(|(a, b)| {
                    let x = (a - b).abs();
                    if p == 2.0 {
                        x * x
                    } else {
                        x.powf(p)
                    }
                })
                .sum();
            match mode {
                CapacityMode::Power => s,
                CapacityMode::Root => s.powf(1.0 / p),
            }
        })
        .collect();
    batch_means(&values)
}

/// Integrates the size ODE from the first grid point. Returns `S_λ` relative
/// to `S_{λ₁}`.
///
/// Each grid interval takes `substeps` forward-Euler steps in `log y` with
/// `u` interpolated linearly in `−log λ`.
pub fn solve_size_ode(grid: &LambdaGrid, u: &[f64], substeps: usize) -> Result<Vec<f64>> {
    let lam = grid.values();
    if u.len() != lam.len() {
        return Err(Error::Shape {
            expected: lam.len(),
            got: u.len(),
        });
    }
    if let Some(j) = u.iter().position(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::DataQuality(format!(
            "region average u = {} is not positive at lambda = {}",
            u[j], lam[j]
        )));
    }
    let k = substeps.max(1);
    let mut log_y = u[0].ln();
    let mut s = Vec::with_capacity(lam.len());
    s.push(1.0);
    for j in 0..lam.len() - 1 {
        let (ta, tb) = (-lam[j].ln(), -lam[j + 1].ln());
        let h = (lam[j + 1] - lam[j]) / k as f64;
        for i in 0..k {
            let x = lam[j] + h * i as f64;
            let w = (ta + x.ln()) / (ta - tb);
            let ux = u[j] + (u[j + 1] - u[j]) * w;
            log_y -= h / (x * ux);
        }
        s.push((log_y - u[j + 1].ln()).exp());
    }
    Ok(s)
}

/// `∫_{λ_j}^1 S` at every grid point and `∫₀¹ S`, with `S` held at
/// `s_rel[0]` below the grid and tapering linearly to zero above it.
fn size_integrals(lam: &[f64], s_rel: &[f64]) -> (Vec<f64>, f64) {
    let n = lam.len();
    let mut tail = vec![0.0; n];
    tail[n - 1] = s_rel[n - 1] * (1.0 - lam[n - 1]) / 2.0;
    for j in (0..n - 1).rev() {
        tail[j] = tail[j + 1] + (lam[j + 1] - lam[j]) * (s_rel[j] + s_rel[j + 1]) / 2.0;
    }
    let total = tail[0] + s_rel[0] * lam[0];
    (tail, total)
}

/// `C_λ` on the grid by trapezoidal quadrature of `S`.
///
/// Below `λ₁` the size is held at `s_rel[0]`; above the last grid point it
/// tapers linearly to zero at `λ = 1`.
pub fn credibility(grid: &LambdaGrid, s_rel: &[f64]) -> Vec<f64> {
    let lam = grid.values();
    let (tail, total) = size_integrals(lam, s_rel);
    (0..lam.len())
        .map(|j| ((lam[j] * s_rel[j] + tail[j]) / total).clamp(0.0, 1.0))
        .collect()
}

/// Relative mass `∫₀^{λ₁}(S − S_{λ₁}) / ∫₀¹ S` missed by holding `S` constant
/// below the grid, estimated by continuing the local power law `S ∝ τ^κ`
/// (`τ = −log λ`) through the first two grid points.
pub fn lower_extension_error(grid: &LambdaGrid, s_rel: &[f64]) -> f64 {
    let lam = grid.values();
    if lam.len() < 2 || !(s_rel[0] > 0.0 && s_rel[1] > 0.0) {
        return 0.0;
    }
    let (t0, t1) = (-lam[0].ln(), -lam[1].ln());
    let kappa = ((s_rel[0] / s_rel[1]).ln() / (t0 / t1).ln()).max(0.0);
    // ∫_{τ₀}^∞ ((τ/τ₀)^κ − 1) e^{−τ} dτ
    let a = kappa + 1.0;
    let upper = (ln_gamma(a) + gamma_ur(a, t0).ln() - kappa * t0.ln()).exp();
    let missed = (upper - (-t0).exp()).max(0.0);
    let (_, total) = size_integrals(lam, s_rel);
    missed * s_rel[0] / total
}

/// Grid indices where `s_rel` rises by more than three standard errors.
pub fn monotonicity_violations(s_rel: &[f64], stderr: &[f64]) -> Vec<usize> {
    let mut running_min = f64::INFINITY;
    let mut running_err = 0.0;
    let mut out = Vec::new();
    for (j, (&s, &e)) in s_rel.iter().zip(stderr).enumerate() {
        if s > running_min + 3.0 * (e * e + running_err * running_err).sqrt() {
            out.push(j);
        }
        if s < running_min {
            running_min = s;
            running_err = e;
        }
    }
    out
}

/// Size and credibility together with standard errors propagated from the
/// per-λ standard errors of `u`, plus discretization and below-grid
/// extension estimates.
#[derive(Clone, Debug)]
pub struct SizeCredibility {
    pub s_rel: Vec<f64>,
    pub s_rel_stderr: Vec<f64>,
    pub c: Vec<f64>,
    pub c_stderr: Vec<f64>,
}

pub fn size_and_credibility(
    grid: &LambdaGrid,
    u: &[f64],
    u_stderr: &[f64],
    substeps: usize,
) -> Result<SizeCredibility> {
    let n = grid.len();
    let s_rel = solve_size_ode(grid, u, substeps)?;
    let c = credibility(grid, &s_rel);

    // Delta method with independent per-λ errors.
    let mut s_var = vec![0.0; n];
    let mut c_var = vec![0.0; n];
    let mut perturbed = u.to_vec();
    for j in 0..n {
        if u_stderr[j] == 0.0 {
            continue;
        }
        let h = 1e-4 * u_stderr[j].min(u[j]);
        perturbed[j] = u[j] + h;
        let s_p = solve_size_ode(grid, &perturbed, substeps)?;
        let c_p = credibility(grid, &s_p);
        perturbed[j] = u[j];
        let scale = u_stderr[j] / h;
        for k in 0..n {
            s_var[k] += ((s_p[k] - s_rel[k]) * scale).powi(2);
            c_var[k] += ((c_p[k] - c[k]) * scale).powi(2);
        }
    }

    // Discretization: compare with the half-resolution grid.
    let disc = discretization_error(grid, u, substeps, &s_rel, &c)?;
    // Below-grid extension shifts every C by about C·ε.
    let ext = lower_extension_error(grid, &s_rel);
    let s_rel_stderr = s_var
        .iter()
        .zip(&disc.0)
        .map(|(v, d)| (v + d * d).sqrt())
        .collect();
    let c_stderr = c_var
        .iter()
        .zip(&disc.1)
        .zip(&c)
        .map(|((v, d), ci)| (v + d * d + (ci * ext).powi(2)).sqrt())
        .collect();
    Ok(SizeCredibility {
        s_rel,
        s_rel_stderr,
        c,
        c_stderr,
    })
}

/// `|X(grid) − X(every other point)|`, interpolated in `log τ` at the
/// dropped points, for `X ∈ {s_rel, C}`.
fn discretization_error(
    grid: &LambdaGrid,
    u: &[f64],
    substeps: usize,
    s_rel: &[f64],
    c: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = grid.len();
    if n < 5 {
        return Ok((vec![0.0; n], vec![0.0; n]));
    }
    let idx: Vec<usize> = (0..n)
        .step_by(2)
        .chain(if n.is_multiple_of(2) {
            Some(n - 1)
        } else {
            None
        })
        .collect();
    let coarse = LambdaGrid::new(idx.iter().map(|&i| grid.values()[i]).collect())?;
    let cu: Vec<f64> = idx.iter().map(|&i| u[i]).collect();
    let cs = solve_size_ode(&coarse, &cu, substeps)?;
    let cc = credibility(&coarse, &cs);
    let lt = |l: f64| (-l.ln()).ln();
    let mut ds = vec![0.0; n];
    let mut dc = vec![0.0; n];
    let mut seg = 0;
    for k in 0..n {
        let x = lt(grid.values()[k]);
        while seg + 2 < idx.len() && idx[seg + 1] < k {
            seg += 1;
        }
        let (a, b) = (idx[seg], idx[(seg + 1).min(idx.len() - 1)]);
        let (xa, xb) = (lt(grid.values()[a]), lt(grid.values()[b]));
        let w = if a == b {
            0.0
        } else {
            ((x - xa) / (xb - xa)).clamp(0.0, 1.0)
        };
        let si = cs[seg] + (cs[(seg + 1).min(idx.len() - 1)] - cs[seg]) * w;
        let ci = cc[seg] + (cc[(seg + 1).min(idx.len() - 1)] - cc[seg]) * w;
        ds[k] = (si - s_rel[k]).abs();
        dc[k] = (ci - c[k]).abs();
    }
    Ok((ds, dc))
}

/// Per-λ sampling diagnostics.
#[derive(Clone, Debug)]
pub struct LambdaDiagnostics {
    pub lambda: f64,
    pub stats: AcceptStats,
    pub ess_u: f64,
}

#[derive(Clone, Debug)]
pub struct CertificationResult {
    pub grid: LambdaGrid,
    pub u: Vec<f64>,
    pub u_stderr: Vec<f64>,
    pub s_rel: Vec<f64>,
    pub s_rel_stderr: Vec<f64>,
    pub c: Vec<f64>,
    pub c_stderr: Vec<f64>,
    pub capacity_p2: Vec<f64>,
    pub capacity_p2_stderr: Vec<f64>,
    pub case: EstimatorCase,
    pub diagnostics: Vec<LambdaDiagnostics>,
}

impl CertificationResult {
    pub fn membership_violations(&self) -> u64 {
        self.diagnostics
            .iter()
            .map(|d| d.stats.containment_violations)
            .sum()
    }

    pub fn step_failures(&self) -> u64 {
        self.diagnostics.iter().map(|d| d.stats.failures).sum()
    }
}

#[derive(Clone, Debug)]
pub struct CertifyOptions {
    pub inflation: f64,
    pub chain: ChainConfig,
    pub prior: Prior,
    pub tol_psd: f64,
    pub start_attempts: usize,
    pub euler_substeps: usize,
    /// Pool-adjacent-violators smoothing of `u` before the ODE solve.
    pub isotonic: bool,
}

impl CertifyOptions {
    pub fn new(k_samples: usize, seed: u64) -> Self {
        Self {
            inflation: DEFAULT_INFLATION,
            chain: ChainConfig::new(k_samples, seed),
            prior: Prior::Uniform,
            tol_psd: crate::bloch::DEFAULT_TOL_PSD,
            start_attempts: DEFAULT_START_ATTEMPTS,
            euler_substeps: DEFAULT_EULER_SUBSTEPS,
            isotonic: false,
        }
    }
}

/// Errors from one grid point, tagged with its λ.
fn at_lambda(lambda: f64) -> impl Fn(Error) -> Error {
    move |e| Error::AtLambda {
        lambda,
        source: Box::new(e),
    }
}

/// Sampled averages at one grid point.
#[derive(Clone, Debug)]
pub struct PointSample {
    pub lambda: f64,
    pub u: McEstimate,
    pub capacity: McEstimate,
    pub stats: AcceptStats,
}

/// Stream bit reserved for start-point searches, disjoint from chain streams.
const START_STREAM: u64 = 1 << 63;

fn certify_point<M: LikelihoodModel>(
    model: &M,
    est: &PointEstimate,
    lambda: f64,
    index: usize,
    opts: &CertifyOptions,
) -> Result<PointSample> {
    let geom = build_geometry(est, lambda, opts.inflation)?;
    let stream = index as u64;
    let start_seed = substream(opts.chain.seed, stream | START_STREAM).random();
    let start = find_interior_start(
        est,
        &geom,
        model,
        opts.start_attempts,
        opts.tol_psd,
        start_seed,
    )?;
    let oracle = CredibleRegion::new(model, &geom, opts.tol_psd);
    let cfg = ChainConfig {
        stream,
        ..opts.chain.clone()
    };
    let sample = sample_region(&geom, &oracle, &opts.prior, &cfg, &start)?;
    let u = u_average(&sample, lambda, est.log_l_max)?;
    let capacity = capacity_average(&sample, &est.r_ml, 2.0, CapacityMode::Power)?;
    debug!(
        "lambda = {lambda:.3e}: u = {:.4e} ± {:.1e}, mean shrinks {:.2}",
        u.mean,
        u.stderr,
        sample.stats.mean_shrinks()
    );
    Ok(PointSample {
        lambda,
        u,
        capacity,
        stats: sample.stats,
    })
}

/// Samples every grid point in parallel. Failures are tagged with their λ
/// and do not stop the other points.
pub fn sample_grid<M: LikelihoodModel>(
    model: &M,
    est: &PointEstimate,
    grid: &LambdaGrid,
    opts: &CertifyOptions,
) -> Vec<Result<PointSample>> {
    grid.values()
        .par_iter()
        .enumerate()
        .map(|(i, &lambda)| certify_point(model, est, lambda, i, opts).map_err(at_lambda(lambda)))
        .collect()
}

/// Samples every grid point and assembles size, credibility and capacity.
pub fn certify<M: LikelihoodModel>(
    model: &M,
    est: &PointEstimate,
    grid: &LambdaGrid,
    opts: &CertifyOptions,
) -> Result<CertificationResult> {
    let points = sample_grid(model, est, grid, opts)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    assemble(grid, est.case, points, opts)
}

/// Combines per-point samples (in grid order) into a full result.
pub fn assemble(
    grid: &LambdaGrid,
    case: EstimatorCase,
    points: Vec<PointSample>,
    opts: &CertifyOptions,
) -> Result<CertificationResult> {
    if points.len() != grid.len() {
        return Err(Error::Shape {
            expected: grid.len(),
            got: points.len(),
        });
    }
    let mut u: Vec<f64> = points.iter().map(|p| p.u.mean).collect();
    let u_stderr: Vec<f64> = points.iter().map(|p| p.u.stderr).collect();
    if opts.isotonic {
        let w: Vec<f64> = u_stderr.iter().map(|e| 1.0 / (e * e).max(1e-300)).collect();
        u = isotonic_nonincreasing(&u, &w);
    }
    let sc = size_and_credibility(grid, &u, &u_stderr, opts.euler_substeps)?;
    let bad = monotonicity_violations(&sc.s_rel, &sc.s_rel_stderr);
    if !bad.is_empty() {
        warn!(
            "relative size rises beyond 3 standard errors at {} grid points",
            bad.len()
        );
    }
    let violations: u64 = points.iter().map(|p| p.stats.containment_violations).sum();
    if violations > 0 {
        warn!("{violations} region points found outside the bounding ellipsoid");
    }
    Ok(CertificationResult {
        grid: grid.clone(),
        u,
        u_stderr,
        s_rel: sc.s_rel,
        s_rel_stderr: sc.s_rel_stderr,
        c: sc.c,
        c_stderr: sc.c_stderr,
        capacity_p2: points.iter().map(|p| p.capacity.mean).collect(),
        capacity_p2_stderr: points.iter().map(|p| p.capacity.stderr).collect(),
        case,
        diagnostics: points
            .into_iter()
            .map(|p| LambdaDiagnostics {
                lambda: p.lambda,
                ess_u: p.u.ess,
                stats: p.stats,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn gaussian_u(d: usize) -> impl Fn(f64) -> f64 {
        move |l: f64| -2.0 * l.ln() / (d as f64 + 2.0)
    }

    #[test]
    fn grid_construction() {
        let g = LambdaGrid::default_grid();
        assert_eq!(g.len(), 200);
        assert_eq!(g.values()[0], 1e-6);
        assert_eq!(g.values()[199], 1.0 - 1e-3);
        let r = g.refined();
        assert_eq!(r.len(), 399);
        assert!(r.values().windows(2).all(|w| w[0] < w[1]));
        assert!(LambdaGrid::new(vec![0.5, 0.4]).is_err());
        assert!(LambdaGrid::new(vec![0.0, 0.4]).is_err());
        let ll = LambdaGrid::spaced(4, 1e-4, 0.1, GridSpacing::LogLambda).unwrap();
        assert_relative_eq!(ll.values()[1], 1e-3, max_relative = 1e-12);
    }

    #[test]
    fn single_point_grid() {
        let g = LambdaGrid::new(vec![0.3]).unwrap();
        assert_eq!(solve_size_ode(&g, &[0.7], 8).unwrap(), vec![1.0]);
    }

    #[test]
    fn nonpositive_u_is_data_quality_error() {
        let g = LambdaGrid::new(vec![0.1, 0.2, 0.3]).unwrap();
        assert!(matches!(
            solve_size_ode(&g, &[1.0, 0.0, 0.5], 8),
            Err(Error::DataQuality(_))
        ));
    }

    fn ode_error(n: usize, d: usize) -> f64 {
        let g = LambdaGrid::spaced(
            n,
            DEFAULT_LAMBDA_MIN,
            DEFAULT_LAMBDA_MAX,
            GridSpacing::LogTau,
        )
        .unwrap();
        let uf = gaussian_u(d);
        let u: Vec<f64> = g.values().iter().map(|&l| uf(l)).collect();
        let s = solve_size_ode(&g, &u, DEFAULT_EULER_SUBSTEPS).unwrap();
        let t0 = -g.values()[0].ln();
        g.values()
            .iter()
            .zip(&s)
            .map(|(&l, &s)| (s / ((-l.ln()) / t0).powf(d as f64 / 2.0) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn ode_reproduces_gaussian_size() {
        let e = ode_error(400, 3);
        assert!(e < 5e-3, "max relative error {e}");
    }

    #[test]
    fn credibility_matches_chi_squared() {
        let d = 3;
        let g = LambdaGrid::spaced(
            400,
            DEFAULT_LAMBDA_MIN,
            DEFAULT_LAMBDA_MAX,
            GridSpacing::LogTau,
        )
        .unwrap();
        let uf = gaussian_u(d);
        let u: Vec<f64> = g.values().iter().map(|&l| uf(l)).collect();
        let s = solve_size_ode(&g, &u, DEFAULT_EULER_SUBSTEPS).unwrap();
        let c = credibility(&g, &s);
        let chi = ChiSquared::new(d as f64).unwrap();
        for (&l, &c) in g.values().iter().zip(&c) {
            if l <= 0.9 {
                assert!((c - chi.cdf(-2.0 * l.ln())).abs() < 0.01, "lambda {l}: {c}");
            }
        }
    }

    #[test]
    fn credibility_endpoints() {
        let g = LambdaGrid::default_grid();
        let s: Vec<f64> = g.values().iter().map(|l| (-l.ln()).powf(1.5)).collect();
        let c = credibility(&g, &s);
        assert!(c[0] > 0.999);
        assert!(c[199] < 1e-3);
    }

    #[test]
    fn extension_error_matches_gaussian_tail() {
        // S = τ^{3/2}: the missed mass is exactly τ₀^{-3/2}Γ(5/2, τ₀) − e^{−τ₀}.
        let g = LambdaGrid::default_grid();
        let s: Vec<f64> = g.values().iter().map(|l| (-l.ln()).powf(1.5)).collect();
        let s0 = s[0];
        let s: Vec<f64> = s.iter().map(|x| x / s0).collect();
        let c = credibility(&g, &s);
        let chi = ChiSquared::new(3.0).unwrap();
        let exact_gap = 1.0 - chi.cdf(-2.0 * g.values()[0].ln()) - (1.0 - c[0]);
        let est = lower_extension_error(&g, &s);
        assert_relative_eq!(est, exact_gap, max_relative = 0.05);
    }

    #[test]
    fn monotonicity_flags_real_rises_only() {
        let s = [1.0, 0.8, 0.81, 0.5, 0.9];
        let e = [0.0, 0.01, 0.01, 0.01, 0.01];
        assert_eq!(monotonicity_violations(&s, &e), vec![4]);
    }

    #[test]
    fn stderr_propagation_scales_with_u_noise() {
        let g = LambdaGrid::spaced(50, 1e-4, 0.99, GridSpacing::LogTau).unwrap();
        let uf = gaussian_u(3);
        let u: Vec<f64> = g.values().iter().map(|&l| uf(l)).collect();
        let e1: Vec<f64> = u.iter().map(|x| 0.01 * x).collect();
        let e2: Vec<f64> = u.iter().map(|x| 0.02 * x).collect();
        let a = size_and_credibility(&g, &u, &e1, 32).unwrap();
        let b = size_and_credibility(&g, &u, &vec![0.0; 50], 32).unwrap();
        let c = size_and_credibility(&g, &u, &e2, 32).unwrap();
        assert_eq!(a.s_rel, b.s_rel);
        for k in 1..50 {
            let mc_a = (a.c_stderr[k].powi(2) - b.c_stderr[k].powi(2))
                .max(0.0)
                .sqrt();
            let mc_c = (c.c_stderr[k].powi(2) - b.c_stderr[k].powi(2))
                .max(0.0)
                .sqrt();
            if mc_a > 1e-6 {
                assert_relative_eq!(mc_c / mc_a, 2.0, max_relative = 1e-3);
            }
        }
    }

    proptest! {
        #[test]
        fn credibility_is_scale_invariant(
            raw in proptest::collection::vec(0.01f64..1.0, 2..40),
            k in prop_oneof![Just(1e-6), Just(1.0), Just(1e6)],
        ) {
            let n = raw.len();
            let g = LambdaGrid::spaced(n, 1e-5, 0.99, GridSpacing::LogTau).unwrap();
            let mut s = raw.clone();
            s.sort_by(|a, b| b.total_cmp(a));
            let c1 = credibility(&g, &s);
            let scaled: Vec<f64> = s.iter().map(|x| x * k).collect();
            let c2 = credibility(&g, &scaled);
            for (a, b) in c1.iter().zip(&c2) {
                prop_assert!((a - b).abs() <= 4.0 * f64::EPSILON);
            }
        }

        #[test]
        fn credibility_monotone_for_monotone_size(raw in proptest::collection::vec(0.0f64..1.0, 2..60)) {
            let n = raw.len();
            let g = LambdaGrid::spaced(n, 1e-6, 0.999, GridSpacing::LogTau).unwrap();
            let mut s = raw.clone();
            s.sort_by(|a, b| b.total_cmp(a));
            if s[0] > 0.0 {
                let c = credibility(&g, &s);
                prop_assert!(c.windows(2).all(|w| w[1] <= w[0]));
                prop_assert!(c.iter().all(|&x| (0.0..=1.0).contains(&x)));
            }
        }

        #[test]
        fn size_is_finite_for_positive_u(raw in proptest::collection::vec(0.01f64..5.0, 2..30)) {
            let n = raw.len();
            let g = LambdaGrid::spaced(n, 1e-6, 0.999, GridSpacing::LogTau).unwrap();
            let mut u = raw.clone();
            u.sort_by(|a, b| b.total_cmp(a));
            let s = solve_size_ode(&g, &u, 16).unwrap();
            prop_assert_eq!(s[0], 1.0);
            prop_assert!(s.iter().all(|x| x.is_finite() && *x >= 0.0));
        }
    }
}
