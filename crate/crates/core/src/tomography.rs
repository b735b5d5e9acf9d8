//! Measurement models, multinomial data, likelihood and maximum-likelihood
//! state estimation.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};

use crate::bloch::{BlochVector, HermitianBasis, DEFAULT_TOL_PSD};
use crate::error::{Error, Result};
use crate::linalg::{
    hermitian_eigenvalues, hermitian_inverse_sqrt, numerical_rank, power_iteration, C64,
};
use crate::model::{EstimatorCase, LikelihoodModel, ParameterSpace, PointEstimate};

const COMPLETENESS_TOL: f64 = 1e-10;

/// A POVM in vectorized form: `Πⱼ = tⱼ·1 + Σₖ qⱼₖ Ωₖ`, so that
/// `tⱼ = tr(Πⱼ)/D` and `qⱼ = tr(Πⱼ Ω)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PovmModel {
    dim_hilbert: usize,
    t: DVector<f64>,
    /// M × d.
    q: DMatrix<f64>,
}

impl PovmModel {
    /// Builds the model from its vectorized parts, checking positivity of
    /// every outcome and completeness.
    pub fn from_parts(basis: &HermitianBasis, t: DVector<f64>, q: DMatrix<f64>) -> Result<Self> {
        if q.ncols() != basis.d() {
            return Err(Error::Shape {
                expected: basis.d(),
                got: q.ncols(),
            });
        }
        if q.nrows() != t.len() {
            return Err(Error::Shape {
                expected: t.len(),
                got: q.nrows(),
            });
        }
        let dim = basis.dim_hilbert();
        let model = Self {
            dim_hilbert: dim,
            t,
            q,
        };
        let t_sum = model.t.sum();
        let q_sum = model.q.row_sum().norm();
        if (t_sum - 1.0).abs() > COMPLETENESS_TOL || q_sum > COMPLETENESS_TOL {
            return Err(Error::InvalidPovm(format!(
                "completeness violated: sum t = {t_sum}, |sum q| = {q_sum:e}"
            )));
        }
        for j in 0..model.n_outcomes() {
            let op = model.operator(basis, j);
            let min = hermitian_eigenvalues(&op)[0];
            if min < -COMPLETENESS_TOL {
                return Err(Error::InvalidPovm(format!(
                    "outcome {j} has eigenvalue {min:e}"
                )));
            }
        }
        Ok(model)
    }

    /// Vectorizes explicit outcome operators.
    pub fn from_operators(basis: &HermitianBasis, ops: &[DMatrix<C64>]) -> Result<Self> {
        let dim = basis.dim_hilbert() as f64;
        let mut t = DVector::zeros(ops.len());
        let mut q = DMatrix::zeros(ops.len(), basis.d());
        for (j, op) in ops.iter().enumerate() {
            t[j] = op.trace().re / dim;
            q.set_row(j, &basis.coordinates(op)?.transpose());
        }
        Self::from_parts(basis, t, q)
    }

    /// The six-outcome qubit measurement `(1 ± σₖ)/6`, ordered
    /// `+x, −x, +y, −y, +z, −z`.
    pub fn pauli6(basis: &HermitianBasis) -> Result<Self> {
        if basis.dim_hilbert() != 2 {
            return Err(Error::InvalidPovm(
                "the Pauli-6 measurement needs D = 2".into(),
            ));
        }
        let w = std::f64::consts::SQRT_2 / 6.0;
        let mut q = DMatrix::zeros(6, 3);
        for k in 0..3 {
            q[(2 * k, k)] = w;
            q[(2 * k + 1, k)] = -w;
        }
        Self::from_parts(basis, DVector::from_element(6, 1.0 / 6.0), q)
    }

    /// `M` random full-rank outcomes `G^{-1/2} AⱼA†ⱼ G^{-1/2}` from Gaussian `Aⱼ`.
    pub fn random(basis: &HermitianBasis, n_outcomes: usize, seed: u64) -> Result<Self> {
        let dim = basis.dim_hilbert();
        require_ic_count(dim, n_outcomes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<DMatrix<C64>> = (0..n_outcomes)
            .map(|_| {
                let a = gaussian_matrix(dim, dim, &mut rng);
                &a * a.adjoint()
            })
            .collect();
        let ops = condition(&raw)?;
        let model = Self::from_operators(basis, &ops)?;
        model.require_ic()?;
        Ok(model)
    }

    /// Square-root measurement built from `M` Haar-random pure states.
    pub fn sqrt_measurement(basis: &HermitianBasis, n_outcomes: usize, seed: u64) -> Result<Self> {
        let dim = basis.dim_hilbert();
        require_ic_count(dim, n_outcomes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let states: Vec<DVector<C64>> = (0..n_outcomes)
            .map(|_| {
                let v = gaussian_matrix(dim, 1, &mut rng).column(0).into_owned();
                let n = v.norm();
                v / C64::new(n, 0.0)
            })
            .collect();
        Self::sqrt_measurement_from_states(basis, &states)
    }

    /// `Πⱼ = G^{-1/2}|ψⱼ⟩⟨ψⱼ|G^{-1/2}` with `G = Σ |ψⱼ⟩⟨ψⱼ|`.
    pub fn sqrt_measurement_from_states(
        basis: &HermitianBasis,
        states: &[DVector<C64>],
    ) -> Result<Self> {
        let raw: Vec<DMatrix<C64>> = states.iter().map(|psi| psi * psi.adjoint()).collect();
        let ops = condition(&raw)?;
        Self::from_operators(basis, &ops)
    }

    pub fn n_outcomes(&self) -> usize {
        self.t.len()
    }

    pub fn dim_hilbert(&self) -> usize {
        self.dim_hilbert
    }

    pub fn d(&self) -> usize {
        self.q.ncols()
    }

    pub fn t(&self) -> &DVector<f64> {
        &self.t
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// Reassembles outcome `j` as a matrix.
    pub fn operator(&self, basis: &HermitianBasis, j: usize) -> DMatrix<C64> {
        let r = self.q.row(j).transpose();
        // basis.operator adds 1/D; shift to t_j.
        let mut op = basis.operator(&r);
        let shift = self.t[j] - 1.0 / self.dim_hilbert as f64;
        for i in 0..self.dim_hilbert {
            op[(i, i)] += C64::new(shift, 0.0);
        }
        op
    }

    pub fn rank(&self) -> usize {
        numerical_rank(&self.q, 1e-10)
    }

    pub fn is_informationally_complete(&self) -> bool {
        self.rank() == self.d()
    }

    pub fn require_ic(&self) -> Result<()> {
        let rank = self.rank();
        if rank < self.d() {
            return Err(Error::NotInformationallyComplete { rank, d: self.d() });
        }
        Ok(())
    }

    /// Born probabilities `pⱼ = tⱼ + qⱼᵀ r`.
    pub fn born_probabilities(&self, r: &BlochVector) -> Result<DVector<f64>> {
        if r.len() != self.d() {
            return Err(Error::Shape {
                expected: self.d(),
                got: r.len(),
            });
        }
        Ok(self.probabilities(r.coords()))
    }

    pub(crate) fn probabilities(&self, r: &DVector<f64>) -> DVector<f64> {
        &self.t + &self.q * r
    }

    /// Reorders outcomes: outcome `i` of the result is outcome `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let t = DVector::from_iterator(perm.len(), perm.iter().map(|&i| self.t[i]));
        let q = DMatrix::from_fn(perm.len(), self.d(), |i, k| self.q[(perm[i], k)]);
        Self {
            dim_hilbert: self.dim_hilbert,
            t,
            q,
        }
    }
}

fn require_ic_count(dim: usize, n_outcomes: usize) -> Result<()> {
    if n_outcomes < dim * dim {
        return Err(Error::NotInformationallyComplete {
            rank: n_outcomes.saturating_sub(1),
            d: dim * dim - 1,
        });
    }
    Ok(())
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<C64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

/// Normalizes positive operators to sum to the identity.
fn condition(raw: &[DMatrix<C64>]) -> Result<Vec<DMatrix<C64>>> {
    let dim = raw
        .first()
        .map(|m| m.nrows())
        .ok_or_else(|| Error::InvalidPovm("no outcomes".into()))?;
    let mut g = DMatrix::zeros(dim, dim);
    for m in raw {
        g += m;
    }
    let s = hermitian_inverse_sqrt(&g)?;
    Ok(raw
        .iter()
        .map(|m| {
            let p = &s * m * &s;
            (&p + p.adjoint()) * C64::new(0.5, 0.0)
        })
        .collect())
}

/// Observed outcome frequencies.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountData {
    counts: Vec<u64>,
}

impl CountData {
    pub fn new(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn scaled(&self, k: u64) -> Self {
        Self::new(self.counts.iter().map(|&n| n * k).collect())
    }

    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self::new(perm.iter().map(|&i| self.counts[i]).collect())
    }
}

/// Multinomial draw of `n_total` trials by sequential binomial conditioning.
pub fn simulate_counts(p: &[f64], n_total: u64, seed: u64) -> Result<CountData> {
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || p.iter().any(|&x| x < -1e-12 || !x.is_finite()) {
        return Err(Error::InvalidDistribution(sum));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut remaining_n = n_total;
    let mut remaining_p = 1.0;
    let mut counts = Vec::with_capacity(p.len());
    for (j, &pj) in p.iter().enumerate() {
        let pj = pj.max(0.0);
        let n = if j + 1 == p.len() {
            remaining_n
        } else if remaining_n == 0 || remaining_p <= 0.0 {
            0
        } else {
            let cond = (pj / remaining_p).clamp(0.0, 1.0);
            Binomial::new(remaining_n, cond)
                .map_err(|_| Error::InvalidDistribution(sum))?
                .sample(&mut rng)
        };
        counts.push(n);
        remaining_n -= n;
        remaining_p -= pj;
    }
    Ok(CountData::new(counts))
}

/// `Σⱼ nⱼ log pⱼ` over observed outcomes, or `−∞` if any observed outcome
/// has nonpositive probability.
pub fn log_likelihood_from_probabilities(counts: &CountData, p: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for (&n, &pj) in counts.counts().iter().zip(p.iter()) {
        if n > 0 {
            if pj <= 0.0 {
                return f64::NEG_INFINITY;
            }
            acc += n as f64 * pj.ln();
        }
    }
    acc
}

pub fn log_likelihood(r: &BlochVector, counts: &CountData, povm: &PovmModel) -> Result<f64> {
    let p = povm.born_probabilities(r)?;
    Ok(log_likelihood_from_probabilities(counts, &p))
}

/// Gradient `g = Σⱼ nⱼ qⱼ / pⱼ` of `log L` and Fisher information
/// `F = N Σⱼ qⱼ qⱼᵀ / pⱼ` at `r`.
pub fn fisher_and_gradient(
    r: &BlochVector,
    counts: &CountData,
    povm: &PovmModel,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let p = povm.born_probabilities(r)?;
    let n_total = counts.total() as f64;
    let d = povm.d();
    let mut g = DVector::zeros(d);
    let mut f = DMatrix::zeros(d, d);
    for j in 0..povm.n_outcomes() {
        if p[j] <= 0.0 {
            return Err(Error::DegenerateProbability {
                outcome: j,
                p: p[j],
            });
        }
        let qj = povm.q.row(j).transpose();
        let n = counts.counts()[j];
        if n > 0 {
            g.axpy(n as f64 / p[j], &qj, 1.0);
        }
        f.ger(n_total / p[j], &qj, &qj, 1.0);
    }
    Ok((g, f))
}

/// A tomography experiment: state space, measurement and data.
#[derive(Clone, Debug)]
pub struct TomographyModel {
    pub basis: HermitianBasis,
    pub povm: PovmModel,
    pub counts: CountData,
    pub tol_psd: f64,
}

impl TomographyModel {
    pub fn new(basis: HermitianBasis, povm: PovmModel, counts: CountData) -> Result<Self> {
        if povm.d() != basis.d() {
            return Err(Error::Shape {
                expected: basis.d(),
                got: povm.d(),
            });
        }
        if counts.len() != povm.n_outcomes() {
            return Err(Error::Shape {
                expected: povm.n_outcomes(),
                got: counts.len(),
            });
        }
        Ok(Self {
            basis,
            povm,
            counts,
            tol_psd: DEFAULT_TOL_PSD,
        })
    }

    /// Gradient of `log L`; `None` where an observed probability is nonpositive.
    fn gradient(&self, r: &DVector<f64>) -> Option<(f64, DVector<f64>, DVector<f64>)> {
        let p = self.povm.probabilities(r);
        let mut weights = DVector::zeros(p.len());
        let mut log_l = 0.0;
        for (j, &n) in self.counts.counts().iter().enumerate() {
            if n > 0 {
                if p[j] <= 0.0 {
                    return None;
                }
                weights[j] = n as f64 / p[j];
                log_l += n as f64 * p[j].ln();
            }
        }
        let g = self.povm.q.tr_mul(&weights);
        Some((log_l, g, p))
    }

    /// Product of the observed information `Σ nⱼ qⱼqⱼᵀ/pⱼ²` with `v`.
    fn observed_information_apply(&self, p: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        let qv = &self.povm.q * v;
        let w = DVector::from_iterator(
            p.len(),
            self.counts
                .counts()
                .iter()
                .zip(p.iter())
                .zip(qv.iter())
                .map(|((&n, &pj), &x)| if n > 0 { n as f64 * x / (pj * pj) } else { 0.0 }),
        );
        self.povm.q.tr_mul(&w)
    }
}

impl ParameterSpace for TomographyModel {
    fn dim(&self) -> usize {
        self.basis.d()
    }

    fn contains(&self, r: &DVector<f64>, tol: f64) -> bool {
        self.basis.contains(r, tol)
    }

    fn project(&self, r: &DVector<f64>) -> DVector<f64> {
        self.basis.project(r)
    }

    fn interior_point(&self) -> DVector<f64> {
        self.basis.interior_point()
    }
}

impl LikelihoodModel for TomographyModel {
    fn log_likelihood(&self, r: &DVector<f64>) -> f64 {
        log_likelihood_from_probabilities(&self.counts, &self.povm.probabilities(r))
    }
}

/// Settings for the accelerated projected-gradient likelihood maximizer.
#[derive(Clone, Debug)]
pub struct MleOptions {
    /// Stop when the projected-gradient norm drops below `tol_grad_per_count · N`.
    pub tol_grad_per_count: f64,
    pub max_iters: usize,
    /// Eigenvalues of `ρ_ML` below this count as zero.
    pub tol_rank: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            tol_grad_per_count: 1e-8,
            max_iters: 20_000,
            tol_rank: 1e-6,
        }
    }
}

/// Maximum-likelihood estimate with the quantities needed downstream.
#[derive(Clone, Debug)]
pub struct MlFit {
    pub estimate: PointEstimate,
    pub p_ml: DVector<f64>,
    pub rank: usize,
    pub eigenvalues: DVector<f64>,
    pub iterations: usize,
}

impl MlFit {
    pub fn r_ml(&self) -> BlochVector {
        BlochVector(self.estimate.r_ml.clone())
    }

    pub fn case(&self) -> EstimatorCase {
        self.estimate.case
    }
}

/// Maximizes `log L` over the state space by accelerated projected gradient
/// ascent with adaptive momentum restart and backtracking on the step.
pub fn mle_fit(model: &TomographyModel, opts: &MleOptions) -> Result<MlFit> {
    model.povm.require_ic()?;
    let n_total = model.counts.total() as f64;
    if n_total <= 0.0 {
        return Err(Error::Domain("no counts".into()));
    }
    let tol = opts.tol_grad_per_count * n_total;
    let d = model.dim();

    let mut x = model.interior_point();
    let (mut fx, _, _) = model.gradient(&x).ok_or(Error::Domain(
        "maximally mixed state has zero likelihood".into(),
    ))?;
    let mut y = x.clone();
    let mut theta = 1.0f64;
    let mut power_vec = DVector::from_element(d, 1.0);
    let mut lip = 0.0f64;
    let mut grad_norm = f64::INFINITY;

    for iter in 0..opts.max_iters {
        let (fy, gy, py) = match model.gradient(&y) {
            Some(v) => v,
            None => {
                y = x.clone();
                theta = 1.0;
                model
                    .gradient(&y)
                    .expect("iterates keep observed probabilities positive")
            }
        };
        if iter % 10 == 0 || lip == 0.0 {
            let est = power_iteration(
                |v| model.observed_information_apply(&py, v),
                &mut power_vec,
                8,
            );
            lip = est
                .max(1e-12 * n_total)
                .max(if lip > 0.0 { lip * 1e-3 } else { 0.0 });
        }

        // Backtracking on the quadratic upper bound of -log L.
        let mut x_new;
        let mut f_new;
        loop {
            x_new = model.project(&(&y + &gy / lip));
            f_new = model.log_likelihood(&x_new);
            let step = &x_new - &y;
            let bound = fy + gy.dot(&step) - 0.5 * lip * step.norm_squared();
            if f_new.is_finite() && f_new >= bound - 1e-12 * fy.abs().max(1.0) {
                break;
            }
            lip *= 2.0;
            if !lip.is_finite() {
                return Err(Error::Convergence {
                    iterations: iter,
                    grad_norm,
                    last_iterate: x.as_slice().to_vec(),
                });
            }
        }

        if f_new < fx {
            // Non-increase: drop the momentum and retry from x.
            y = x.clone();
            theta = 1.0;
            continue;
        }

        let theta_new = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let momentum = (theta - 1.0) / theta_new;
        y = &x_new + (&x_new - &x) * momentum;
        theta = theta_new;
        x = x_new;
        fx = f_new;

        if let Some((_, gx, _)) = model.gradient(&x) {
            let mapped = model.project(&(&x + &gx / lip));
            grad_norm = (&mapped - &x).norm() * lip;
            if grad_norm < tol {
                return finish_fit(model, x, iter + 1, opts);
            }
        }
    }
    Err(Error::Convergence {
        iterations: opts.max_iters,
        grad_norm,
        last_iterate: x.as_slice().to_vec(),
    })
}

fn finish_fit(
    model: &TomographyModel,
    r_ml: DVector<f64>,
    iterations: usize,
    opts: &MleOptions,
) -> Result<MlFit> {
    let r = BlochVector(r_ml);
    let p_ml = model.povm.born_probabilities(&r)?;
    let log_l_max = log_likelihood_from_probabilities(&model.counts, &p_ml);
    let (gradient, fisher) = fisher_and_gradient(&r, &model.counts, &model.povm)?;
    let eigenvalues = model.basis.eigenvalues(r.coords());
    let rank = eigenvalues.iter().filter(|&&e| e >= opts.tol_rank).count();
    let case = if rank < model.basis.dim_hilbert() {
        EstimatorCase::B
    } else {
        EstimatorCase::A
    };
    Ok(MlFit {
        estimate: PointEstimate {
            r_ml: r.into_inner(),
            log_l_max,
            gradient,
            fisher,
            case,
        },
        p_ml,
        rank,
        eigenvalues,
        iterations,
    })
}
