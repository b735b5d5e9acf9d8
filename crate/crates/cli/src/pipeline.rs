//! Pipeline stages, free of argument parsing so tests can drive them
//! directly.

use std::time::Instant;

use log::info;
use nalgebra::DVector;
use rand::Rng;
use serde::Serialize;

use regcert_core::analytic::analytic_point;
use regcert_core::bloch::BlochVector;
use regcert_core::certify::{
    assemble, credibility, sample_grid, solve_size_ode, CertificationResult, LambdaGrid,
    PointSample,
};
use regcert_core::model::PointEstimate;
use regcert_core::oracle::{check_oracle_dim, draw_state, filter_certify_stream, OracleResult};
use regcert_core::tomography::{mle_fit, simulate_counts, MlFit, PovmModel};

use crate::bundle::DataBundle;
use crate::config::{ExperimentConfig, PovmKind, PriorSpec, TrueState};
use crate::error::{CliError, Result};

/// POVM, true state and counts for the configured experiment.
pub fn simulate(cfg: &ExperimentConfig) -> Result<DataBundle> {
    let basis = cfg.basis()?;
    let seeds = cfg.seeds;
    let m = cfg.n_outcomes();
    let povm = match cfg.povm {
        PovmKind::Pauli6 => PovmModel::pauli6(&basis)?,
        PovmKind::Sqrt => PovmModel::sqrt_measurement(&basis, m, seeds.povm)?,
        PovmKind::Random => PovmModel::random(&basis, m, seeds.povm)?,
    };
    let true_state = match &cfg.true_state {
        TrueState::MaximallyMixed => BlochVector::zeros(basis.d()),
        TrueState::PureRandom => basis.random_pure_state(seeds.state),
        TrueState::Bloch { r } => BlochVector::from_vec(r.clone()),
    };
    let p = povm.born_probabilities(&true_state)?;
    let counts = simulate_counts(p.as_slice(), cfg.n_total(), seeds.simulation)?;
    Ok(DataBundle::new(
        cfg.hash(),
        seeds,
        cfg.povm,
        basis,
        povm,
        true_state,
        counts,
    ))
}

/// Rejects a bundle simulated for a different experiment shape.
pub fn check_bundle(cfg: &ExperimentConfig, bundle: &DataBundle) -> Result<()> {
    let meta = &bundle.meta;
    if meta.dim_hilbert != cfg.dim_hilbert || meta.n_outcomes != cfg.n_outcomes() {
        return Err(CliError::Config(format!(
            "bundle holds D = {}, M = {} but the config asks for D = {}, M = {}; rerun `simulate`",
            meta.dim_hilbert,
            meta.n_outcomes,
            cfg.dim_hilbert,
            cfg.n_outcomes()
        )));
    }
    Ok(())
}

pub fn fit(cfg: &ExperimentConfig, bundle: &DataBundle) -> Result<MlFit> {
    let model = bundle.model()?;
    Ok(mle_fit(&model, &cfg.mle_options())?)
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct WallTimes {
    pub fit: f64,
    pub sampling: f64,
    pub assembly: f64,
    pub total: f64,
}

#[derive(Debug)]
pub struct CertifyRun {
    pub fit: MlFit,
    pub grid: LambdaGrid,
    /// Per-λ samples in grid order; failures carry their λ.
    pub points: Vec<regcert_core::Result<PointSample>>,
    /// Present when every grid point succeeded.
    pub result: Option<regcert_core::Result<CertificationResult>>,
    pub times: WallTimes,
}

impl CertifyRun {
    /// The assembled result, or the first error encountered.
    pub fn into_result(self) -> Result<(MlFit, CertificationResult)> {
        for p in self.points {
            p?;
        }
        let res = self.result.expect("assembled when all points succeed")?;
        Ok((self.fit, res))
    }
}

/// Fit, sample every grid point and assemble size and credibility.
pub fn certify(cfg: &ExperimentConfig, bundle: &DataBundle) -> Result<CertifyRun> {
    let t0 = Instant::now();
    let model = bundle.model()?;
    let fit = mle_fit(&model, &cfg.mle_options())?;
    let t_fit = t0.elapsed().as_secs_f64();
    info!(
        "fit: rank {}, case {}, log L_max = {:.6}, {} iterations",
        fit.rank,
        fit.case(),
        fit.estimate.log_l_max,
        fit.iterations
    );
    let grid = cfg.lambda_grid()?;
    let opts = cfg.certify_options()?;
    let t1 = Instant::now();
    let points = sample_grid(&model, &fit.estimate, &grid, &opts);
    let t_sampling = t1.elapsed().as_secs_f64();
    let t2 = Instant::now();
    let result = if points.iter().all(|p| p.is_ok()) {
        let ok: Vec<PointSample> = points
            .iter()
            .map(|p| p.as_ref().expect("checked").clone())
            .collect();
        Some(assemble(&grid, fit.estimate.case, ok, &opts))
    } else {
        None
    };
    let times = WallTimes {
        fit: t_fit,
        sampling: t_sampling,
        assembly: t2.elapsed().as_secs_f64(),
        total: t0.elapsed().as_secs_f64(),
    };
    Ok(CertifyRun {
        fit,
        grid,
        points,
        result,
        times,
    })
}

/// Asymptotic curves on the grid, with `C` from the analytic `u` pushed
/// through the same ODE and credibility integral as the sampled one.
#[derive(Clone, Debug)]
pub struct AnalyticCurves {
    pub lambda: Vec<f64>,
    pub s2: Vec<f64>,
    pub u: Vec<f64>,
    pub c: Vec<f64>,
}

pub fn analytic(cfg: &ExperimentConfig, est: &PointEstimate) -> Result<AnalyticCurves> {
    analytic_on_grid(&cfg.lambda_grid()?, est, cfg.ode.euler_substeps)
}

pub fn analytic_on_grid(
    grid: &LambdaGrid,
    est: &PointEstimate,
    substeps: usize,
) -> Result<AnalyticCurves> {
    let points = grid
        .values()
        .iter()
        .map(|&l| analytic_point(est, l))
        .collect::<regcert_core::Result<Vec<_>>>()?;
    let u: Vec<f64> = points.iter().map(|p| p.u).collect();
    let s = solve_size_ode(grid, &u, substeps)?;
    Ok(AnalyticCurves {
        lambda: grid.values().to_vec(),
        s2: points.iter().map(|p| p.s2).collect(),
        c: credibility(grid, &s),
        u,
    })
}

impl AnalyticCurves {
    /// Analytic `S₂` at credibility `c`, interpolated linearly along the
    /// parametric curve; `None` outside its range.
    pub fn s2_at_credibility(&self, c: f64) -> Option<f64> {
        self.c
            .windows(2)
            .zip(self.s2.windows(2))
            .find_map(|(cw, sw)| {
                let (hi, lo) = (cw[0], cw[1]);
                (hi >= c && c >= lo).then(|| {
                    if hi == lo {
                        sw[0]
                    } else {
                        sw[0] + (hi - c) / (hi - lo) * (sw[1] - sw[0])
                    }
                })
            })
    }
}

/// MC filtering of the whole state space under the configured prior.
pub fn oracle(cfg: &ExperimentConfig, bundle: &DataBundle, log_l_max: f64) -> Result<OracleResult> {
    let basis = &bundle.basis;
    check_oracle_dim(basis)?;
    let model = bundle.model()?;
    let grid = cfg.lambda_grid()?;
    let n = cfg.oracle.samples;
    let seed = cfg.seeds.oracle;
    let res = match &cfg.prior {
        PriorSpec::Uniform => filter_certify_stream(&model, log_l_max, &grid, n, seed, |rng| {
            draw_state(basis, rng)
        }),
        PriorSpec::Gaussian { sigma, mean } => {
            // Flat draws thinned by the Gaussian density give the truncated Gaussian.
            let mean = mean
                .clone()
                .map(DVector::from_vec)
                .unwrap_or_else(|| DVector::zeros(basis.d()));
            let inv_two_var = 0.5 / (sigma * sigma);
            filter_certify_stream(&model, log_l_max, &grid, n, seed, |rng| {
                let r = draw_state(basis, rng)?;
                let keep = (-(&r - &mean).norm_squared() * inv_two_var).exp();
                (rng.random::<f64>() < keep).then_some(r)
            })
        }
    };
    Ok(res)
}

/// Pipeline columns needed for the oracle comparison.
#[derive(Clone, Debug)]
pub struct PipelineColumns {
    pub lambda: Vec<f64>,
    pub c: Vec<f64>,
    pub c_stderr: Vec<f64>,
    pub s_rel: Vec<f64>,
    pub s_rel_stderr: Vec<f64>,
}

impl From<&CertificationResult> for PipelineColumns {
    fn from(r: &CertificationResult) -> Self {
        Self {
            lambda: r.grid.values().to_vec(),
            c: r.c.clone(),
            c_stderr: r.c_stderr.clone(),
            s_rel: r.s_rel.clone(),
            s_rel_stderr: r.s_rel_stderr.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ComparisonRow {
    pub lambda: f64,
    pub c_pipeline: f64,
    pub c_pipeline_stderr: f64,
    pub c_oracle: f64,
    pub c_oracle_stderr: f64,
    pub z_c: f64,
    /// `s_abs / s_rel`, constant when both estimate the same size.
    pub ratio: f64,
    pub ratio_stderr: f64,
    /// Deviation of `ratio` from the weighted mean over usable rows.
    pub z_ratio: f64,
    pub n_in: u64,
    pub usable: bool,
}

#[derive(Clone, Debug)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub ratio_mean: f64,
    pub max_abs_z_c: f64,
    pub max_abs_z_ratio: f64,
    pub n_usable: usize,
    pub z_max: f64,
}

impl Comparison {
    pub fn passed(&self) -> bool {
        self.n_usable > 0 && self.max_abs_z_c <= self.z_max && self.max_abs_z_ratio <= self.z_max
    }

    pub fn verdict(&self) -> String {
        format!(
            "{}: {} usable grid points; max |z| for C = {:.2}, for s_abs/s_rel = {:.2} (limit {})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.n_usable,
            self.max_abs_z_c,
            self.max_abs_z_ratio,
            self.z_max
        )
    }
}

fn combined_z(a: f64, sa: f64, b: f64, sb: f64) -> f64 {
    let s = (sa * sa + sb * sb).sqrt();
    if s > 0.0 {
        (a - b) / s
    } else if a == b {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Pointwise z-scores of pipeline against oracle on a shared grid.
pub fn compare(
    p: &PipelineColumns,
    o: &OracleResult,
    min_yield: u64,
    z_max: f64,
) -> Result<Comparison> {
    let ol = o.grid.values();
    let same_grid = p.lambda.len() == ol.len()
        && p.lambda
            .iter()
            .zip(ol)
            .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()));
    if !same_grid {
        return Err(CliError::Config(
            "pipeline and oracle λ grids differ".into(),
        ));
    }
    let usable = o.usable(min_yield);
    let mut rows: Vec<ComparisonRow> = (0..ol.len())
        .map(|k| {
            let ratio = o.s_abs[k] / p.s_rel[k];
            let rel = ((o.s_abs_stderr[k] / o.s_abs[k]).powi(2)
                + (p.s_rel_stderr[k] / p.s_rel[k]).powi(2))
            .sqrt();
            ComparisonRow {
                lambda: p.lambda[k],
                c_pipeline: p.c[k],
                c_pipeline_stderr: p.c_stderr[k],
                c_oracle: o.c[k],
                c_oracle_stderr: o.c_stderr[k],
                z_c: combined_z(p.c[k], p.c_stderr[k], o.c[k], o.c_stderr[k]),
                ratio,
                ratio_stderr: ratio * rel,
                z_ratio: f64::NAN,
                n_in: o.n_in[k],
                usable: usable[k],
            }
        })
        .collect();
    let (mut sw, mut swx) = (0.0, 0.0);
    for r in rows.iter().filter(|r| r.usable) {
        let w = 1.0 / (r.ratio_stderr * r.ratio_stderr);
        sw += w;
        swx += w * r.ratio;
    }
    let ratio_mean = swx / sw;
    for r in rows.iter_mut().filter(|r| r.usable) {
        r.z_ratio = (r.ratio - ratio_mean) / r.ratio_stderr;
    }
    let max_abs = |f: fn(&ComparisonRow) -> f64| {
        rows.iter()
            .filter(|r| r.usable)
            .map(|r| f(r).abs())
            .fold(0.0, f64::max)
    };
    Ok(Comparison {
        ratio_mean,
        max_abs_z_c: max_abs(|r| r.z_c),
        max_abs_z_ratio: max_abs(|r| r.z_ratio),
        n_usable: rows.iter().filter(|r| r.usable).count(),
        z_max,
        rows,
    })
}
