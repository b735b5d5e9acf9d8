//! Monte Carlo summaries and univariate normal utilities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

/// Generator `stream` under the key derived from `seed`. Distinct
/// `(seed, stream)` pairs give non-overlapping sequences.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A Monte Carlo mean with its standard error and effective sample size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub ess: f64,
}

/// Mean of a correlated chain with a batch-means standard error.
///
/// Uses `⌊√n⌋` batches; chains shorter than 16 fall back to the iid formula.
pub fn batch_means(values: &[f64]) -> Result<McEstimate> {
    let n = values.len();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    if n == 1 {
        return Ok(McEstimate {
            mean,
            stderr: 0.0,
            ess: 1.0,
        });
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if n < 16 || var == 0.0 {
        return Ok(McEstimate {
            mean,
            stderr: (var / nf).sqrt(),
            ess: nf,
        });
    }
    let n_batches = (nf.sqrt() as usize).max(2);
    let size = n / n_batches;
    let used = size * n_batches;
    let batch_avg: Vec<f64> = values[..used]
        .chunks_exact(size)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let bm = batch_avg.iter().sum::<f64>() / n_batches as f64;
    let bvar = batch_avg.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / (n_batches as f64 - 1.0);
    // Never report less uncertainty than the iid formula.
    let sigma2 = (bvar * size as f64).max(var);
    Ok(McEstimate {
        mean,
        stderr: (sigma2 / nf).sqrt(),
        ess: nf * var / sigma2,
    })
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Windows further than this many standard deviations into a tail are
/// sampled by rejection instead of inversion.
const TAIL_CUTOFF: f64 = 8.0;

/// Standard normal truncated to `[lo, hi]`.
pub fn truncated_standard_normal<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    if !(lo < hi) {
        return lo;
    }
    // Keep the window on the lower side, where the CDF has full relative precision.
    if lo > 0.0 {
        return -truncated_standard_normal(-hi, -lo, rng);
    }
    if hi < -TAIL_CUTOFF {
        return -tail_normal(-hi, -lo, rng);
    }
    let pl = normal_cdf(lo);
    let ph = normal_cdf(hi);
    let u: f64 = rng.random();
    let x = normal_quantile(pl + (ph - pl) * u);
    if x.is_finite() {
        x.clamp(lo, hi)
    } else {
        lo + (hi - lo) * u
    }
}

/// Standard normal on `[a, b]` with `a > 0` deep in the tail.
fn tail_normal<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if b - a < 1.0 / a {
        // Narrow window: uniform proposal, acceptance ≥ e^{-1}.
        loop {
            let z = a + (b - a) * rng.random::<f64>();
            if rng.random::<f64>().ln() <= -0.5 * (z * z - a * a) {
                return z;
            }
        }
    }
    // Exponential proposal with the optimal rate.
    let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let z = a - (1.0 - rng.random::<f64>()).ln() / alpha;
        if z <= b && rng.random::<f64>().ln() <= -0.5 * (z - alpha).powi(2) {
            return z;
        }
    }
}

/// Kolmogorov–Smirnov statistic of `samples` against a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at significance `alpha` for sample size `n`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt() / (n as f64).sqrt()
}

/// Weighted pool-adjacent-violators fit constrained to be nonincreasing.
pub fn isotonic_nonincreasing(values: &[f64], weights: &[f64]) -> Vec<f64> {
    // Blocks of (weighted mean, weight, length).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() > 1 {
            let (m2, w2, n2) = blocks[blocks.len() - 1];
            let (m1, w1, n1) = blocks[blocks.len() - 2];
            if m1 >= m2 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            let w = w1 + w2;
            blocks.push(((m1 * w1 + m2 * w2) / w, w, n1 + n2));
        }
    }
    blocks
        .into_iter()
        .flat_map(|(m, _, n)| std::iter::repeat_n(m, n))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn substreams_do_not_collide_across_seeds() {
        let first = |seed, stream| substream(seed, stream).random::<u64>();
        let mut seen = std::collections::HashSet::new();
        for seed in 0..16 {
            for stream in 0..16 {
                assert!(
                    seen.insert(first(seed, stream)),
                    "seed {seed} stream {stream}"
                );
            }
        }
        assert_eq!(first(5, 9), first(5, 9));
    }

    #[test]
    fn batch_means_of_iid_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..40_000).map(|_| rng.random::<f64>()).collect();
        let est = batch_means(&v).unwrap();
        assert!((est.mean - 0.5).abs() < 4.0 * est.stderr);
        let iid = (1.0 / 12.0 / 40_000.0f64).sqrt();
        assert!(est.stderr >= iid * 0.999 && est.stderr < iid * 1.3);
    }

    #[test]
    fn batch_means_sees_autocorrelation() {
        // AR(1) with ρ = 0.9: integrated autocorrelation time (1+ρ)/(1−ρ) = 19.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut x = 0.0;
        let v: Vec<f64> = (0..200_000)
            .map(|_| {
                x = 0.9 * x + rng.sample::<f64, _>(rand_distr::StandardNormal);
                x
            })
            .collect();
        let est = batch_means(&v).unwrap();
        let tau = v.len() as f64 / est.ess;
        assert!((tau - 19.0).abs() < 5.0, "tau = {tau}");
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(batch_means(&[]), Err(Error::EmptySample)));
        assert_eq!(batch_means(&[2.0]).unwrap().mean, 2.0);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for x in [-30.0, -8.0, -1.3, 0.0, 0.7, 5.0] {
            assert_relative_eq!(
                normal_quantile(normal_cdf(x)),
                x,
                epsilon = 1e-8,
                max_relative = 1e-8
            );
        }
        assert_relative_eq!(normal_cdf(1.959963984540054), 0.975, epsilon = 1e-10);
    }

    fn truncated_cdf(lo: f64, hi: f64) -> impl Fn(f64) -> f64 {
        // Tail-stable: compute in the lower half via reflection.
        move |x| {
            if lo >= 0.0 {
                let (a, b) = (normal_cdf(-hi), normal_cdf(-lo));
                (b - normal_cdf(-x)) / (b - a)
            } else {
                let (a, b) = (normal_cdf(lo), normal_cdf(hi));
                (normal_cdf(x) - a) / (b - a)
            }
        }
    }

    #[test]
    fn truncated_normal_matches_cdf() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (lo, hi) in [
            (-1.0, 2.0),
            (0.5, 3.0),
            (-4.0, -3.5),
            (2.0, 9.0),
            (-0.1, 0.1),
        ] {
            let xs: Vec<f64> = (0..20_000)
                .map(|_| truncated_standard_normal(lo, hi, &mut rng))
                .collect();
            assert!(xs.iter().all(|&x| x >= lo && x <= hi));
            let ks = ks_statistic(&xs, truncated_cdf(lo, hi));
            assert!(ks < ks_critical(xs.len(), 1e-3), "[{lo}, {hi}]: ks = {ks}");
        }
    }

    #[test]
    fn far_tail_uses_rejection() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for (lo, hi) in [(10.0, 12.0), (20.0, 20.01), (-40.0, -30.0)] {
            let xs: Vec<f64> = (0..5_000)
                .map(|_| truncated_standard_normal(lo, hi, &mut rng))
                .collect();
            assert!(xs.iter().all(|&x| x >= lo && x <= hi));
            // Density ∝ exp(-a (x - a)) near the edge: mean excess ≈ 1/a.
            let edge = if lo > 0.0 { lo } else { -hi };
            let excess = xs.iter().map(|&x| x.abs() - edge).sum::<f64>() / xs.len() as f64;
            let expected = if hi - lo < 1.0 / edge {
                (hi - lo) / 2.0
            } else {
                1.0 / edge
            };
            assert!(
                (excess - expected).abs() < 0.1 * expected,
                "{excess} vs {expected}"
            );
        }
    }

    #[test]
    fn isotonic_pools_violators() {
        let fit = isotonic_nonincreasing(&[3.0, 1.0, 2.0, 0.5], &[1.0; 4]);
        assert_eq!(fit, vec![3.0, 1.5, 1.5, 0.5]);
        let already = [5.0, 4.0, 4.0, 1.0];
        assert_eq!(
            isotonic_nonincreasing(&already, &[1.0; 4]),
            already.to_vec()
        );
        let weighted = isotonic_nonincreasing(&[1.0, 2.0], &[3.0, 1.0]);
        assert_eq!(weighted, vec![1.25, 1.25]);
    }
}
