//! Brute-force references: MC filtering of the whole parameter space, an
//! exactly Gaussian toy model, and a rejection sampler for ellipsoidal caps.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::bloch::HermitianBasis;
use crate::certify::LambdaGrid;
use crate::error::{Error, Result};
use crate::linalg::{quad_form, spd_inverse, spd_inverse_sqrt};
use crate::model::{EstimatorCase, LikelihoodModel, ParameterSpace, PointEstimate};
use crate::stats::{substream, McEstimate};

/// Draws per parallel block in the streaming samplers.
const BLOCK: u64 = 1 << 16;

/// Largest Hilbert-space dimension for which rejection from the purity ball
/// is practical.
pub const MAX_ORACLE_DIM: usize = 3;

fn uniform_in_ball<R: Rng + ?Sized>(d: usize, radius: f64, rng: &mut R) -> DVector<f64> {
    let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let n = v.norm();
    let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
    v * (r / n)
}

/// Fails with a feasibility error when `D` exceeds [`MAX_ORACLE_DIM`].
pub fn check_oracle_dim(basis: &HermitianBasis) -> Result<()> {
    if basis.dim_hilbert() > MAX_ORACLE_DIM {
        return Err(Error::Feasibility(format!(
            "uniform state-space sampling is limited to D <= {MAX_ORACLE_DIM} (got D = {})",
            basis.dim_hilbert()
        )));
    }
    Ok(())
}

/// One rejection draw from the flat measure on Bloch coordinates; `None`
/// when the proposal is not a state.
pub fn draw_state<R: Rng + ?Sized>(basis: &HermitianBasis, rng: &mut R) -> Option<DVector<f64>> {
    let radius = (1.0 - 1.0 / basis.dim_hilbert() as f64).sqrt();
    let r = uniform_in_ball(basis.d(), radius, rng);
    (basis.dim_hilbert() == 2 || basis.min_eigenvalue(&r) >= 0.0).then_some(r)
}

/// `n` states uniform in the flat Bloch measure, by rejection from the
/// purity ball. Also returns the acceptance ratio.
pub fn sample_state_space_uniform(
    basis: &HermitianBasis,
    n: usize,
    seed: u64,
) -> Result<(Vec<DVector<f64>>, f64)> {
    check_oracle_dim(basis)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut tries = 0u64;
    while out.len() < n {
        tries += 1;
        if let Some(r) = draw_state(basis, &mut rng) {
            out.push(r);
        }
    }
    Ok((out, n as f64 / tries.max(1) as f64))
}

#[derive(Clone, Debug)]
pub struct OracleResult {
    pub grid: LambdaGrid,
    /// Fraction of the prior mass inside `R_λ`.
    pub s_abs: Vec<f64>,
    pub s_abs_stderr: Vec<f64>,
    pub c: Vec<f64>,
    pub c_stderr: Vec<f64>,
    pub n_total: u64,
    pub n_in: Vec<u64>,
}

impl OracleResult {
    /// Grid points with at least `min_yield` samples inside the region.
    pub fn usable(&self, min_yield: u64) -> Vec<bool> {
        self.n_in.iter().map(|&n| n >= min_yield).collect()
    }
}

/// Per-bin sums, where bin `b` holds samples inside exactly the first `b`
/// regions of the grid.
#[derive(Clone)]
struct Tally {
    n: u64,
    count: Vec<u64>,
    w: Vec<f64>,
    w2: Vec<f64>,
}

impl Tally {
    fn new(n_grid: usize) -> Self {
        Self {
            n: 0,
            count: vec![0; n_grid + 1],
            w: vec![0.0; n_grid + 1],
            w2: vec![0.0; n_grid + 1],
        }
    }

    fn add(&mut self, log_lambdas: &[f64], rel_log_l: f64) {
        let bin = log_lambdas.partition_point(|&ll| ll <= rel_log_l);
        let w = rel_log_l.exp();
        self.n += 1;
        self.count[bin] += 1;
        self.w[bin] += w;
        self.w2[bin] += w * w;
    }

    fn merge(mut self, other: Tally) -> Tally {
        self.n += other.n;
        for b in 0..self.count.len() {
            self.count[b] += other.count[b];
            self.w[b] += other.w[b];
            self.w2[b] += other.w2[b];
        }
        self
    }

    fn finish(self, grid: &LambdaGrid) -> OracleResult {
        let k = grid.len();
        let total_w: f64 = self.w.iter().sum();
        let total_w2: f64 = self.w2.iter().sum();
        let nf = self.n as f64;
        let (mut s_abs, mut s_abs_stderr, mut c, mut c_stderr, mut n_in) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        // Running sums over bins above k.
        let (mut cnt, mut w, mut w2) = (0u64, 0.0, 0.0);
        let mut acc = vec![(0u64, 0.0, 0.0); k];
        for b in (1..=k).rev() {
            cnt += self.count[b];
            w += self.w[b];
            w2 += self.w2[b];
            acc[b - 1] = (cnt, w, w2);
        }
        for &(cnt, w, w2) in &acc {
            let s = cnt as f64 / nf;
            s_abs.push(s);
            s_abs_stderr.push((s * (1.0 - s) / nf).sqrt());
            let ci = if total_w > 0.0 { w / total_w } else { 0.0 };
            c.push(ci);
            let var = ((1.0 - 2.0 * ci) * w2 + ci * ci * total_w2) / (total_w * total_w);
            c_stderr.push(var.max(0.0).sqrt());
            n_in.push(cnt);
        }
        OracleResult {
            grid: grid.clone(),
            s_abs,
            s_abs_stderr,
            c,
            c_stderr,
            n_total: self.n,
            n_in,
        }
    }
}

fn merge_in_order(tallies: Vec<Tally>, n_grid: usize) -> Tally {
    tallies.into_iter().fold(Tally::new(n_grid), Tally::merge)
}

/// MC filtering of a given list of prior samples.
pub fn filter_certify<M: LikelihoodModel>(
    states: &[DVector<f64>],
    model: &M,
    log_l_max: f64,
    grid: &LambdaGrid,
) -> OracleResult {
    let log_lambdas: Vec<f64> = grid.values().iter().map(|l| l.ln()).collect();
    // Fixed chunks merged in order keep the sums independent of scheduling.
    let tallies: Vec<Tally> = states
        .par_chunks(BLOCK as usize)
        .map(|chunk| {
            let mut t = Tally::new(grid.len());
            for r in chunk {
                t.add(&log_lambdas, model.log_likelihood(r) - log_l_max);
            }
            t
        })
        .collect();
    merge_in_order(tallies, grid.len()).finish(grid)
}

/// MC filtering with `n_total` accepted prior draws from `draw`, generated in
/// parallel blocks seeded `seed ⊕ block`. `draw` returns `None` on rejection.
pub fn filter_certify_stream<M, F>(
    model: &M,
    log_l_max: f64,
    grid: &LambdaGrid,
    n_total: u64,
    seed: u64,
    draw: F,
) -> OracleResult
where
    M: LikelihoodModel,
    F: Fn(&mut ChaCha8Rng) -> Option<DVector<f64>> + Sync,
{
    let log_lambdas: Vec<f64> = grid.values().iter().map(|l| l.ln()).collect();
    let n_blocks = n_total.div_ceil(BLOCK);
    let tallies: Vec<Tally> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, b);
            let want = BLOCK.min(n_total - b * BLOCK);
            let mut t = Tally::new(grid.len());
            while t.n < want {
                if let Some(r) = draw(&mut rng) {
                    t.add(&log_lambdas, model.log_likelihood(&r) - log_l_max);
                }
            }
            t
        })
        .collect();
    merge_in_order(tallies, grid.len()).finish(grid)
}

/// MC filtering of the quantum state space under the flat prior.
pub fn filter_certify_states<M: LikelihoodModel>(
    basis: &HermitianBasis,
    model: &M,
    log_l_max: f64,
    grid: &LambdaGrid,
    n_total: u64,
    seed: u64,
) -> Result<OracleResult> {
    check_oracle_dim(basis)?;
    Ok(filter_certify_stream(
        model,
        log_l_max,
        grid,
        n_total,
        seed,
        |rng| draw_state(basis, rng),
    ))
}

/// Exactly Gaussian log-likelihood `log L_max − (r − r₀)ᵀF(r − r₀)/2` on the
/// hypercube `|r_i − r₀ᵢ| ≤ half_width`.
#[derive(Clone, Debug)]
pub struct GaussianToy {
    pub center: DVector<f64>,
    pub fisher: DMatrix<f64>,
    pub half_width: f64,
    pub log_l_max: f64,
}

pub const MAX_TOY_DIM: usize = 8;

impl GaussianToy {
    pub fn new(fisher: DMatrix<f64>, half_width: f64) -> Result<Self> {
        let d = fisher.nrows();
        if d == 0 || d > MAX_TOY_DIM || fisher.ncols() != d {
            return Err(Error::Domain(format!(
                "toy model needs 1 <= d <= {MAX_TOY_DIM}, got {d}"
            )));
        }
        spd_inverse(&fisher)?;
        if !(half_width > 0.0) {
            return Err(Error::Domain("box half-width must be positive".into()));
        }
        Ok(Self {
            center: DVector::zeros(d),
            fisher,
            half_width,
            log_l_max: 0.0,
        })
    }

    pub fn d(&self) -> usize {
        self.center.len()
    }

    pub fn estimate(&self) -> PointEstimate {
        PointEstimate {
            r_ml: self.center.clone(),
            log_l_max: self.log_l_max,
            gradient: DVector::zeros(self.d()),
            fisher: self.fisher.clone(),
            case: EstimatorCase::A,
        }
    }

    /// Whether the region at `lambda` fits inside the box, so that the closed
    /// forms below are exact.
    pub fn region_fits(&self, lambda: f64) -> bool {
        let f_inv = spd_inverse(&self.fisher).expect("validated at construction");
        let r2 = -2.0 * lambda.ln();
        (0..self.d()).all(|i| (r2 * f_inv[(i, i)]).sqrt() <= self.half_width)
    }

    /// `P(χ²_d ≤ −2 log λ)`.
    pub fn credibility(&self, lambda: f64) -> f64 {
        ChiSquared::new(self.d() as f64)
            .expect("d >= 1")
            .cdf(-2.0 * lambda.ln())
    }

    pub fn u(&self, lambda: f64) -> f64 {
        -2.0 * lambda.ln() / (self.d() as f64 + 2.0)
    }

    pub fn s2(&self, lambda: f64) -> f64 {
        let tr = spd_inverse(&self.fisher)
            .expect("validated at construction")
            .trace();
        tr * (-lambda.ln()) / (self.d() as f64 / 2.0 + 1.0)
    }

    /// Region size up to a λ-independent constant: `(−log λ)^{d/2}`.
    pub fn relative_size(&self, lambda: f64) -> f64 {
        (-lambda.ln()).powf(self.d() as f64 / 2.0)
    }

    /// A uniform draw from the box.
    pub fn draw_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(self.d(), |i, _| {
            self.center[i] + self.half_width * (2.0 * rng.random::<f64>() - 1.0)
        })
    }
}

impl ParameterSpace for GaussianToy {
    fn dim(&self) -> usize {
        self.d()
    }

    fn contains(&self, r: &DVector<f64>, tol: f64) -> bool {
        r.iter()
            .zip(self.center.iter())
            .all(|(x, c)| (x - c).abs() <= self.half_width + tol)
    }

    fn project(&self, r: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.d(), |i, _| {
            r[i].clamp(
                self.center[i] - self.half_width,
                self.center[i] + self.half_width,
            )
        })
    }

    fn interior_point(&self) -> DVector<f64> {
        self.center.clone()
    }
}

impl LikelihoodModel for GaussianToy {
    fn log_likelihood(&self, r: &DVector<f64>) -> f64 {
        self.log_l_max - 0.5 * quad_form(&self.fisher, &(r - &self.center))
    }
}

/// Brute-force averages over the ellipsoidal cap of a boundary estimator.
#[derive(Clone, Copy, Debug)]
pub struct CapAverage {
    /// Mean of `|r − r_ML|²`.
    pub s2: McEstimate,
    /// Mean of the Gaussian surrogate `gᵀδ − δᵀFδ/2 − log λ`.
    pub u: McEstimate,
    pub accepted: u64,
    pub drawn: u64,
}

/// Uniform draws over the bounding cube of the whitened ellipsoid, keeping
/// those inside the ellipsoid on the feasible side `gᵀ(r − r_ML) ≤ 0`.
pub fn cap_average_oracle(
    fisher: &DMatrix<f64>,
    gradient: &DVector<f64>,
    lambda: f64,
    n_draws: u64,
    seed: u64,
) -> Result<CapAverage> {
    let d = fisher.nrows();
    let f_inv = spd_inverse(fisher)?;
    let w = &f_inv * gradient;
    let log_lambda_prime = lambda.ln() - 0.5 * gradient.dot(&w);
    let rho = (-2.0 * log_lambda_prime).sqrt();
    let map = spd_inverse_sqrt(fisher)? * rho;
    let log_lambda = lambda.ln();

    // (accepted, Σs2, Σs2², Σu, Σu²)
    type Sums = (u64, f64, f64, f64, f64);
    let n_blocks = n_draws.div_ceil(BLOCK);
    let sums: Sums = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = substream(seed, b);
            let mut s: Sums = (0, 0.0, 0.0, 0.0, 0.0);
            for _ in 0..BLOCK.min(n_draws - b * BLOCK) {
                let z = DVector::from_fn(d, |_, _| 2.0 * rng.random::<f64>() - 1.0);
                if z.norm_squared() > 1.0 {
                    continue;
                }
                let delta = &map * z + &w;
                let gd = gradient.dot(&delta);
                if gd > 0.0 {
                    continue;
                }
                let s2 = delta.norm_squared();
                let u = gd - 0.5 * quad_form(fisher, &delta) - log_lambda;
                s.0 += 1;
                s.1 += s2;
                s.2 += s2 * s2;
                s.3 += u;
                s.4 += u * u;
            }
            s
        })
        .collect::<Vec<Sums>>()
        .into_iter()
        .fold((0, 0.0, 0.0, 0.0, 0.0), |a, b| {
            (a.0 + b.0, a.1 + b.1, a.2 + b.2, a.3 + b.3, a.4 + b.4)
        });
    let n = sums.0;
    if n < 2 {
        return Err(Error::EmptySample);
    }
    let nf = n as f64;
    let est = |s: f64, s2: f64| {
        let mean = s / nf;
        let var = (s2 / nf - mean * mean).max(0.0) * nf / (nf - 1.0);
        McEstimate {
            mean,
            stderr: (var / nf).sqrt(),
            ess: nf,
        }
    };
    Ok(CapAverage {
        s2: est(sums.1, sums.2),
        u: est(sums.3, sums.4),
        accepted: n,
        drawn: n_draws,
    })
}
