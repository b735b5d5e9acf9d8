use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regcert_core::bloch::{BlochVector, HermitianBasis};
use regcert_core::certify::{certify, u_average, CertifyOptions, GridSpacing, LambdaGrid};
use regcert_core::hitrun::{sample_region, ChainConfig, Prior};
use regcert_core::linalg::spd_inverse;
use regcert_core::oracle::GaussianToy;
use regcert_core::region::{build_geometry, CredibleRegion, MembershipOracle, DEFAULT_INFLATION};
use regcert_core::tomography::{
    mle_fit, simulate_counts, CountData, MleOptions, PovmModel, TomographyModel,
};

fn qubit(n_total: u64, seed: u64) -> TomographyModel {
    let basis = HermitianBasis::new(2).unwrap();
    let povm = PovmModel::pauli6(&basis).unwrap();
    let p = povm.born_probabilities(&BlochVector::zeros(3)).unwrap();
    let counts = simulate_counts(p.as_slice(), n_total, seed).unwrap();
    TomographyModel::new(basis, povm, counts).unwrap()
}

fn coarse_grid() -> LambdaGrid {
    LambdaGrid::spaced(24, 1e-6, 1.0 - 1e-3, GridSpacing::LogTau).unwrap()
}

// 10⁴ near-independent points: with consecutive steps the d = 8 standard
// error alone is ~1.6%, comparable to the 2% tolerance.
#[test]
fn gaussian_u_matches_closed_form() {
    let grid = LambdaGrid::new(vec![1e-3, (-1.0f64).exp(), 0.9]).unwrap();
    for d in [2, 3, 8] {
        let toy = GaussianToy::new(DMatrix::identity(d, d), 10.0).unwrap();
        let mut opts = CertifyOptions::new(10_000, d as u64);
        opts.chain.thinning = 10;
        let res = certify(&toy, &toy.estimate(), &grid, &opts).unwrap();
        for (k, &l) in grid.values().iter().enumerate() {
            let rel = (res.u[k] / toy.u(l) - 1.0).abs();
            assert!(
                rel < 0.02,
                "d = {d}, lambda = {l:e}: relative u error {rel:.4}"
            );
        }
    }
}

#[test]
fn independent_seed_sets_agree() {
    let model = qubit(500, 23);
    let fit = mle_fit(&model, &MleOptions::default()).unwrap();
    let grid = coarse_grid();
    let a = certify(
        &model,
        &fit.estimate,
        &grid,
        &CertifyOptions::new(5_000, 101),
    )
    .unwrap();
    let b = certify(
        &model,
        &fit.estimate,
        &grid,
        &CertifyOptions::new(5_000, 202),
    )
    .unwrap();
    for k in 0..grid.len() {
        let z_u = (a.u[k] - b.u[k]) / a.u_stderr[k].hypot(b.u_stderr[k]);
        let z_s = (a.capacity_p2[k] - b.capacity_p2[k])
            / a.capacity_p2_stderr[k].hypot(b.capacity_p2_stderr[k]);
        assert!(
            z_u.abs() <= 3.0 && z_s.abs() <= 3.0,
            "lambda = {:e}: z_u {z_u:.2}, z_s2 {z_s:.2}",
            grid.values()[k]
        );
    }
}

#[test]
fn credibility_starts_near_one_and_decreases() {
    // N/M = 500 keeps the region far inside the state space at small λ.
    let model = qubit(3_000, 7);
    let fit = mle_fit(&model, &MleOptions::default()).unwrap();
    let grid = coarse_grid();
    let mut opts = CertifyOptions::new(4_000, 9);
    opts.isotonic = true;
    let res = certify(&model, &fit.estimate, &grid, &opts).unwrap();
    assert!(res.c[0] >= 0.99, "C(lambda_1) = {}", res.c[0]);
    assert!(res.c.windows(2).all(|w| w[1] <= w[0]), "{:?}", res.c);
    assert_eq!(res.membership_violations(), 0);
}

#[test]
fn chain_average_matches_rejection_sampling() {
    let basis = HermitianBasis::new(2).unwrap();
    let povm = PovmModel::pauli6(&basis).unwrap();
    let model =
        TomographyModel::new(basis, povm, CountData::new(vec![70, 82, 86, 79, 83, 100])).unwrap();
    let fit = mle_fit(&model, &MleOptions::default()).unwrap();
    let est = &fit.estimate;
    for lambda in [0.3, 0.9] {
        let geom = build_geometry(est, lambda, DEFAULT_INFLATION).unwrap();
        let region = CredibleRegion::new(&model, &geom, 1e-9);

        let chains: Vec<f64> = (0..10)
            .map(|seed| {
                let cfg = ChainConfig::new(10_000, seed);
                let sample =
                    sample_region(&geom, &region, &Prior::Uniform, &cfg, &est.r_ml).unwrap();
                u_average(&sample, lambda, est.log_l_max).unwrap().mean
            })
            .collect();
        let n = chains.len() as f64;
        let mean = chains.iter().sum::<f64>() / n;
        let se = (chains.iter().map(|u| (u - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();

        // iid rejection from the box around the bounding ellipsoid.
        let a_inv = spd_inverse(&geom.a).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut sum, mut sum2, mut hits) = (0.0, 0.0, 0u32);
        while hits < 400_000 {
            let r = DVector::from_fn(3, |i, _| {
                geom.center[i] + a_inv[(i, i)].sqrt() * (2.0 * rng.random::<f64>() - 1.0)
            });
            if let Some(ll) = region.evaluate(&r) {
                let v = ll - lambda.ln() - est.log_l_max;
                sum += v;
                sum2 += v * v;
                hits += 1;
            }
        }
        let h = hits as f64;
        let ref_mean = sum / h;
        let ref_se = ((sum2 / h - ref_mean * ref_mean) / h).sqrt();
        let z = (mean - ref_mean) / se.hypot(ref_se);
        assert!(
            z.abs() <= 3.0,
            "lambda = {lambda}: chain {mean:.5} ± {se:.1e}, rejection {ref_mean:.5} ± {ref_se:.1e}"
        );
    }
}
