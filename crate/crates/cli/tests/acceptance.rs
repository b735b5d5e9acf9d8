//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). The long D = 8 run is skipped
//! unless `--ignored` or `--include-ignored` is passed:
//!
//! ```text
//! cargo test --release -p regcert --test acceptance -- --include-ignored
//! ```

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use regcert::commands::results_rows;
use regcert::config::{load, ExperimentConfig, Overrides};
use regcert::pipeline::{self, PipelineColumns};
use regcert::table::write_csv;
use regcert_core::analytic::{analytic_case_a, analytic_case_b};
use regcert_core::certify::{
    certify, credibility, solve_size_ode, CertifyOptions, GridSpacing, LambdaGrid,
    DEFAULT_EULER_SUBSTEPS, DEFAULT_LAMBDA_MAX, DEFAULT_LAMBDA_MIN,
};
use regcert_core::hitrun::{sample_region, ChainConfig, EllipsoidBody, Prior};
use regcert_core::linalg::spd_inverse;
use regcert_core::oracle::{cap_average_oracle, GaussianToy};
use regcert_core::region::{
    build_geometry, find_interior_start, membership, CredibleRegion, RegionGeometry,
};
use regcert_core::stats::batch_means;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_spd(d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    &x * x.transpose() + DMatrix::identity(d, d)
}

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name);
    load(Some(&path), &Overrides::default()).expect("shipped config loads")
}

fn certify_config(
    cfg: &ExperimentConfig,
) -> (
    regcert_core::tomography::MlFit,
    regcert_core::certify::CertificationResult,
) {
    let bundle = pipeline::simulate(cfg).expect("simulation");
    pipeline::certify(cfg, &bundle)
        .expect("certify")
        .into_result()
        .expect("all grid points certified")
}

/// Qubit Pauli-6 data: pipeline credibility against brute-force MC filtering.
fn oracle_equivalence() -> Outcome {
    let cfg = config("qubit_pauli6.json");
    let bundle = pipeline::simulate(&cfg).map_err(|e| e.to_string())?;
    let (fit, res) = pipeline::certify(&cfg, &bundle)
        .and_then(|r| r.into_result())
        .map_err(|e| e.to_string())?;
    let oracle =
        pipeline::oracle(&cfg, &bundle, fit.estimate.log_l_max).map_err(|e| e.to_string())?;
    let cmp = pipeline::compare(
        &PipelineColumns::from(&res),
        &oracle,
        cfg.oracle.min_yield,
        cfg.oracle.z_max,
    )
    .map_err(|e| e.to_string())?;
    let violations = res.membership_violations();
    let worst = cmp
        .rows
        .iter()
        .filter(|r| r.usable)
        .max_by(|a, b| a.z_c.abs().total_cmp(&b.z_c.abs()))
        .ok_or("no usable grid points")?;
    check(
        cmp.passed() && violations == 0,
        format!(
            "K = {}, oracle N = {}: {} usable λ, max |z_C| = {:.2} (λ = {:.4}, C = {:.5} vs oracle {:.5}, n_in = {}), \
             max |z| of s_abs/s_rel = {:.2}, {violations} membership violations",
            cfg.sampling.k_samples,
            cfg.oracle.samples,
            cmp.n_usable,
            cmp.max_abs_z_c,
            worst.lambda,
            worst.c_pipeline,
            worst.c_oracle,
            worst.n_in,
            cmp.max_abs_z_ratio
        ),
    )
}

/// Exactly Gaussian likelihood, d = 3, F = 1.
fn gaussian_case_a() -> Outcome {
    let d = 3;
    let toy = GaussianToy::new(DMatrix::identity(d, d), 10.0).map_err(|e| e.to_string())?;
    let grid = LambdaGrid::default_grid();
    if !toy.region_fits(grid.values()[0]) {
        return Err("largest region does not fit in the box".into());
    }
    let k = 100_000;
    let res = certify(&toy, &toy.estimate(), &grid, &CertifyOptions::new(k, 11))
        .map_err(|e| e.to_string())?;
    let chi = ChiSquared::new(d as f64).unwrap();
    let (mut du, mut ds2, mut dc) = (0.0f64, 0.0f64, 0.0f64);
    for (i, &l) in grid.values().iter().enumerate() {
        let tau = -l.ln();
        du = du.max((res.u[i] / (2.0 * tau / (d as f64 + 2.0)) - 1.0).abs());
        ds2 = ds2.max((res.capacity_p2[i] / (d as f64 * tau / (d as f64 / 2.0 + 1.0)) - 1.0).abs());
        if l <= 0.9 {
            dc = dc.max((res.c[i] - chi.cdf(2.0 * tau)).abs());
        }
    }
    check(
        du < 0.02 && ds2 < 0.02 && dc < 0.01,
        format!("K = {k}: max relative u error {du:.4}, S₂ error {ds2:.4}; max |C − χ²₃| = {dc:.4} on λ ≤ 0.9"),
    )
}

/// Boundary formulas with zero gradient equal the interior ones.
fn case_b_limit() -> Outcome {
    let mut worst = 0.0f64;
    for d in [3usize, 8, 15] {
        let f = random_spd(d, d as u64);
        for lambda in [0.9, (-1.0f64).exp(), 1e-3] {
            let a = analytic_case_a(&f, lambda).map_err(|e| e.to_string())?;
            let b = analytic_case_b(&f, &DVector::zeros(d), lambda).map_err(|e| e.to_string())?;
            for (x, y) in [(a.s2, b.s2), (a.u, b.u)] {
                worst = worst.max((x - y).abs() / x.abs().max(1.0));
            }
        }
    }
    check(
        worst <= 1e-10,
        format!("max deviation {worst:.2e} over d ∈ {{3, 8, 15}} × 3 λ"),
    )
}

/// d = 2 cap averages by rejection against the closed form.
fn cap_oracle() -> Outcome {
    let f = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
    let f_inv = spd_inverse(&f).unwrap();
    let dir = DVector::from_vec(vec![1.0, -0.5]);
    let lambda: f64 = 0.3;
    let mut parts = Vec::new();
    let mut ok = true;
    for (i, l) in [0.1f64, 0.3, 0.5, 0.7].into_iter().enumerate() {
        // gᵀF⁻¹g/2 = l²(−log λ)/(1 − l²) puts the cut at distance l.
        let half_gfg = l * l * -lambda.ln() / (1.0 - l * l);
        let g = &dir * (2.0 * half_gfg / dir.dot(&(&f_inv * &dir))).sqrt();
        let exact = analytic_case_b(&f, &g, lambda)
            .map_err(|e| e.to_string())?
            .s2;
        let mc = cap_average_oracle(&f, &g, lambda, 10_000_000, 100 + i as u64)
            .map_err(|e| e.to_string())?;
        let rel = (mc.s2.mean / exact - 1.0).abs();
        ok &= rel < 0.005;
        parts.push(format!(
            "l = {l}: {rel:.4} ({:.1}σ)",
            (mc.s2.mean - exact).abs() / mc.s2.stderr
        ));
    }
    check(ok, format!("relative S₂ deviation {}", parts.join(", ")))
}

fn ode_error(n: usize, d: usize) -> f64 {
    let g = LambdaGrid::spaced(
        n,
        DEFAULT_LAMBDA_MIN,
        DEFAULT_LAMBDA_MAX,
        GridSpacing::LogTau,
    )
    .unwrap();
    let u: Vec<f64> = g
        .values()
        .iter()
        .map(|&l| -2.0 * l.ln() / (d as f64 + 2.0))
        .collect();
    let s = solve_size_ode(&g, &u, DEFAULT_EULER_SUBSTEPS).unwrap();
    let t0 = -g.values()[0].ln();
    g.values()
        .iter()
        .zip(&s)
        .map(|(&l, &s)| (s / ((-l.ln()) / t0).powf(d as f64 / 2.0) - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Size ODE on the exact Gaussian u against (−log λ)^{d/2}.
fn ode_convergence() -> Outcome {
    let (e200, e400, e800) = (ode_error(200, 3), ode_error(400, 3), ode_error(800, 3));
    let (r1, r2) = (e200 / e400, e400 / e800);
    check(
        e400 < 0.005 && (r1 - 2.0).abs() <= 0.3 && (r2 - 2.0).abs() <= 0.3,
        format!("d = 3: max error {e400:.2e} at 400 points; halving ratios {r1:.3}, {r2:.3}"),
    )
}

fn covariance(points: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let n = points.len() as f64;
    let d = points[0].len();
    let mean = points.iter().fold(DVector::zeros(d), |a, p| a + p) / n;
    let cov = points.iter().fold(DMatrix::zeros(d, d), |a, p| {
        let c = p - &mean;
        a + &c * c.transpose()
    }) / (n - 1.0);
    (mean, cov)
}

fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Hit-and-run over a bare ellipsoid, cross-checked by naive rejection.
fn sampler_correctness() -> Outcome {
    let d = 3;
    let a = random_spd(d, 77) * 0.5;
    let center = DVector::from_vec(vec![0.3, -1.0, 2.0]);
    let expected = spd_inverse(&a).unwrap() / (d as f64 + 2.0);
    let (body, geom) = EllipsoidBody::with_geometry(center.clone(), a.clone());
    let cfg = ChainConfig::new(200_000, 5);
    let sample =
        sample_region(&geom, &body, &Prior::Uniform, &cfg, &center).map_err(|e| e.to_string())?;
    let pts: Vec<DVector<f64>> = (0..sample.len()).map(|i| sample.point(i)).collect();
    let (_, cov) = covariance(&pts);
    let mut max_z = 0.0f64;
    for j in 0..d {
        let col: Vec<f64> = pts.iter().map(|p| p[j]).collect();
        let est = batch_means(&col).unwrap();
        max_z = max_z.max((est.mean - center[j]).abs() / est.stderr);
    }
    let err_hr = rel_frobenius(&cov, &expected);

    // Naive rejection from the bounding box.
    let half: Vec<f64> = (0..d)
        .map(|j| spd_inverse(&a).unwrap()[(j, j)].sqrt())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut naive = Vec::with_capacity(200_000);
    while naive.len() < 200_000 {
        let r = DVector::from_fn(d, |j, _| {
            center[j] + half[j] * (2.0 * rng.random::<f64>() - 1.0)
        });
        let x = &r - &center;
        if x.dot(&(&a * &x)) <= 1.0 {
            naive.push(r);
        }
    }
    let (_, cov_naive) = covariance(&naive);
    let err_naive = rel_frobenius(&cov_naive, &expected);
    let err_cross = rel_frobenius(&cov, &cov_naive);
    check(
        max_z <= 3.0 && err_hr < 0.05 && err_naive < 0.05 && err_cross < 0.05,
        format!(
            "mean max |z| = {max_z:.2}; covariance error vs A⁻¹/(d+2): hit-and-run {err_hr:.4}, rejection {err_naive:.4}, between samplers {err_cross:.4}"
        ),
    )
}

/// S_HS-vs-C against the asymptotic curve for random POVMs, M = D³, N/M = 500.
fn figure_analogues() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for dim in [2usize, 4] {
        let cfg = config(&format!("random_d{dim}.json"));
        let (fit, res) = certify_config(&cfg);
        let curves = pipeline::analytic(&cfg, &fit.estimate).map_err(|e| e.to_string())?;
        let mut worst = 0.0f64;
        let mut n = 0;
        for k in 0..res.grid.len() {
            let c = res.c[k];
            if (0.2..=0.95).contains(&c) {
                let reference = curves
                    .s2_at_credibility(c)
                    .ok_or_else(|| format!("D = {dim}: C = {c} outside the analytic curve"))?;
                worst = worst.max((res.capacity_p2[k] / reference - 1.0).abs());
                n += 1;
            }
        }
        ok &= worst < 0.10 && n > 0 && res.membership_violations() == 0;
        parts.push(format!(
            "D = {dim} (case {}): worst {worst:.3} over {n} points, {} violations",
            res.case,
            res.membership_violations()
        ));
    }
    check(
        ok,
        format!(
            "relative S_HS deviation, C ∈ [0.2, 0.95]: {}",
            parts.join("; ")
        ),
    )
}

/// Qualitative shape of a three-qubit run with a rank-1 true state.
fn three_qubit_run() -> Outcome {
    let cfg = config("three_qubit_sqrt.json");
    let (fit, res) = certify_config(&cfg);
    let drop = res.s_rel[res.s_rel.len() - 1] / res.s_rel[0];
    let c_monotone = res.c.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let violations = res.membership_violations();
    check(
        drop < 1e-10 && c_monotone && violations == 0,
        format!(
            "case {}, rank {}: S falls by {drop:.1e} across the grid, C nonincreasing = {c_monotone}, {violations} violations",
            fit.case(),
            fit.rank
        ),
    )
}

/// Homogeneity, monotonicity, nestedness, chord residuals and determinism.
fn structural_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let grid = LambdaGrid::default_grid();

    // C is unchanged when S is rescaled.
    let mut homog = 0.0f64;
    for _ in 0..20 {
        let mut s: Vec<f64> = (0..grid.len()).map(|_| rng.random::<f64>()).collect();
        s.sort_by(|a, b| b.total_cmp(a));
        let c = credibility(&grid, &s);
        for scale in [1e-6, 1.0, 1e6] {
            let cs = credibility(&grid, &s.iter().map(|v| v * scale).collect::<Vec<_>>());
            homog = homog.max(
                c.iter()
                    .zip(&cs)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max),
            );
        }
    }

    // Nonincreasing S gives nonincreasing C.
    let mut monotone = true;
    for _ in 0..50 {
        let mut s: Vec<f64> = (0..grid.len()).map(|_| rng.random::<f64>()).collect();
        s.sort_by(|a, b| b.total_cmp(a));
        monotone &= credibility(&grid, &s)
            .windows(2)
            .all(|w| w[1] <= w[0] + 1e-15);
    }

    // Points of R_λ₂ lie in R_λ₁ for λ₁ < λ₂.
    let cfg = ExperimentConfig::default();
    let bundle = pipeline::simulate(&cfg).map_err(|e| e.to_string())?;
    let model = bundle.model().map_err(|e| e.to_string())?;
    let fit = pipeline::fit(&cfg, &bundle).map_err(|e| e.to_string())?;
    let est = &fit.estimate;
    let mut nested_bad = 0;
    let mut nested_n = 0;
    for (l1, l2) in [(1e-4, 1e-2), (0.05, 0.5), (0.5, 0.9)] {
        let g1 = build_geometry(est, l1, 2.0).map_err(|e| e.to_string())?;
        let g2 = build_geometry(est, l2, 2.0).map_err(|e| e.to_string())?;
        let start =
            find_interior_start(est, &g2, &model, 32, cfg.tol_psd, 1).map_err(|e| e.to_string())?;
        let oracle = CredibleRegion::new(&model, &g2, cfg.tol_psd);
        let sample = sample_region(
            &g2,
            &oracle,
            &Prior::Uniform,
            &ChainConfig::new(5_000, 2),
            &start,
        )
        .map_err(|e| e.to_string())?;
        for i in 0..sample.len() {
            nested_n += 1;
            if !membership(&sample.point(i), &g1, &model, cfg.tol_psd) {
                nested_bad += 1;
            }
        }
    }

    // Chord endpoints land on the ellipsoid surface.
    let mut residual = 0.0f64;
    for trial in 0..200 {
        let d = 2 + trial % 14;
        let a = random_spd(d, 1000 + trial as u64);
        let center = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let geom = RegionGeometry::from_ellipsoid(center.clone(), a.clone(), 0.0);
        let e = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal)).normalize();
        let r_ref =
            &center + DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal)) * 0.01;
        if geom.quad_form(&r_ref) >= 1.0 {
            continue;
        }
        let (lo, hi) = geom
            .chord_endpoints(&r_ref, &e)
            .map_err(|e| e.to_string())?;
        for t in [lo, hi] {
            residual = residual.max((geom.quad_form(&(&r_ref + &e * t)) - 1.0).abs());
        }
    }

    // Equal configs give byte-identical CSVs.
    let small = load(
        None,
        &Overrides {
            sets: vec!["sampling.k_samples=2000".into()],
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for run in 0..2 {
        let (_, res) = certify_config(&small);
        let path = tmp.path().join(format!("run{run}.csv"));
        write_csv(
            &path,
            &small.hash(),
            &regcert::commands::RESULTS_COLUMNS,
            &results_rows(&res),
        )
        .map_err(|e| e.to_string())?;
        files.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    let identical = files[0] == files[1];

    check(
        homog <= 1e-14 && monotone && nested_bad == 0 && residual < 1e-10 && identical,
        format!(
            "homogeneity max |ΔC| = {homog:.1e}; C monotone = {monotone}; nestedness {nested_bad}/{nested_n} outside; \
             chord residual {residual:.1e}; identical reruns = {identical}"
        ),
    )
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let long = args
        .iter()
        .any(|a| a == "--ignored" || a == "--include-ignored");
    // Failing criteria are reported; `--strict` also fails the process.
    let strict = args.iter().any(|a| a == "--strict");
    type Criterion = (&'static str, fn() -> Outcome, bool);
    let criteria: [Criterion; 9] = [
        ("1 oracle equivalence (qubit)", oracle_equivalence, true),
        ("2 Gaussian case A", gaussian_case_a, true),
        ("3 case B zero-gradient limit", case_b_limit, true),
        ("4 cap-average oracle", cap_oracle, true),
        ("5 ODE convergence", ode_convergence, true),
        ("6 sampler correctness", sampler_correctness, true),
        ("7 figure analogues (D = 2, 4)", figure_analogues, true),
        ("7 optional D = 8 run", three_qubit_run, long),
        ("8 structural invariants", structural_invariants, true),
    ];
    let (mut ran, mut failed) = (0, Vec::new());
    for (name, f, enabled) in criteria {
        if !enabled {
            println!("criterion {name}: SKIPPED (pass --include-ignored to run)");
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {name}: PASS ({secs:.1} s) {detail}"),
            Err(detail) => {
                failed.push(name);
                println!("criterion {name}: FAIL ({secs:.1} s) {detail}");
            }
        }
    }
    println!("{} of {ran} acceptance criteria passed", ran - failed.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join("; "));
        if strict {
            std::process::exit(1);
        }
    }
}
