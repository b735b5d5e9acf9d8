//! Hermitian operator basis and Bloch-vector coordinates of quantum states.
//!
//! A state is written `ρ(r) = 1/D + Σⱼ rⱼ Ωⱼ` where the `Ωⱼ` are the
//! generalized Gell-Mann matrices normalized to `tr(Ωⱼ Ωₖ) = δⱼₖ`. Because the
//! basis is orthonormal, Frobenius distances between operators equal
//! Euclidean distances between their coordinate vectors.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, project_simplex, C64};
use crate::model::ParameterSpace;

/// Default positivity tolerance for [`HermitianBasis::is_physical`].
pub const DEFAULT_TOL_PSD: f64 = 1e-10;

/// Real coordinates of a unit-trace Hermitian operator.
#[derive(Clone, Debug, PartialEq)]
pub struct BlochVector(pub DVector<f64>);

impl BlochVector {
    pub fn zeros(d: usize) -> Self {
        Self(DVector::zeros(d))
    }

    pub fn from_vec(v: Vec<f64>) -> Self {
        Self(DVector::from_vec(v))
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Generalized Gell-Mann basis in canonical order: symmetric pairs, then
/// antisymmetric pairs (both lexicographic in `(j, k)`, `j < k`), then the
/// diagonal family.
#[derive(Clone, Debug)]
pub struct HermitianBasis {
    dim: usize,
    omegas: Vec<DMatrix<C64>>,
    // (row, col, value) triplets; each Ω has at most D nonzeros.
    sparse: Vec<Vec<(usize, usize, C64)>>,
}

impl HermitianBasis {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidDimension(dim));
        }
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut sparse = Vec::with_capacity(dim * dim - 1);
        for j in 0..dim {
            for k in j + 1..dim {
                sparse.push(vec![(j, k, C64::new(s, 0.0)), (k, j, C64::new(s, 0.0))]);
            }
        }
        for j in 0..dim {
            for k in j + 1..dim {
                sparse.push(vec![(j, k, C64::new(0.0, -s)), (k, j, C64::new(0.0, s))]);
            }
        }
        for l in 1..dim {
            let norm = 1.0 / ((l * (l + 1)) as f64).sqrt();
            let mut entries: Vec<_> = (0..l).map(|m| (m, m, C64::new(norm, 0.0))).collect();
            entries.push((l, l, C64::new(-(l as f64) * norm, 0.0)));
            sparse.push(entries);
        }
        let omegas = sparse
            .iter()
            .map(|entries| {
                let mut m = DMatrix::zeros(dim, dim);
                for &(a, b, v) in entries {
                    m[(a, b)] = v;
                }
                m
            })
            .collect();
        Ok(Self {
            dim,
            omegas,
            sparse,
        })
    }

    /// Hilbert-space dimension `D`.
    pub fn dim_hilbert(&self) -> usize {
        self.dim
    }

    /// Number of real coordinates `d = D² − 1`.
    pub fn d(&self) -> usize {
        self.omegas.len()
    }

    pub fn omegas(&self) -> &[DMatrix<C64>] {
        &self.omegas
    }

    /// `1/D + Σ rⱼ Ωⱼ`.
    pub fn to_matrix(&self, r: &BlochVector) -> Result<DMatrix<C64>> {
        self.check_len(r.len())?;
        Ok(self.operator(r.coords()))
    }

    pub(crate) fn operator(&self, r: &DVector<f64>) -> DMatrix<C64> {
        let mut m = DMatrix::from_diagonal_element(
            self.dim,
            self.dim,
            C64::new(1.0 / self.dim as f64, 0.0),
        );
        for (entries, &rj) in self.sparse.iter().zip(r.iter()) {
            if rj != 0.0 {
                for &(a, b, v) in entries {
                    m[(a, b)] += v * rj;
                }
            }
        }
        m
    }

    /// Traceless coordinates `Re tr(H Ωⱼ)` of any square matrix.
    pub fn coordinates(&self, h: &DMatrix<C64>) -> Result<DVector<f64>> {
        if h.nrows() != self.dim || h.ncols() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                got: h.nrows(),
            });
        }
        Ok(DVector::from_iterator(
            self.d(),
            self.sparse.iter().map(|entries| {
                entries
                    .iter()
                    .map(|&(a, b, v)| (v * h[(b, a)]).re)
                    .sum::<f64>()
            }),
        ))
    }

    /// Bloch coordinates of a unit-trace Hermitian matrix.
    pub fn from_matrix(&self, rho: &DMatrix<C64>) -> Result<BlochVector> {
        self.coordinates(rho).map(BlochVector)
    }

    /// Smallest eigenvalue of `ρ(r)`.
    pub fn min_eigenvalue(&self, r: &DVector<f64>) -> f64 {
        hermitian_eigenvalues(&self.operator(r))[0]
    }

    /// Eigenvalues of `ρ(r)` in ascending order.
    pub fn eigenvalues(&self, r: &DVector<f64>) -> DVector<f64> {
        hermitian_eigenvalues(&self.operator(r))
    }

    pub fn is_physical(&self, r: &BlochVector, tol_psd: f64) -> bool {
        r.len() == self.d() && self.min_eigenvalue(r.coords()) >= -tol_psd
    }

    /// Closest unit-trace positive operator to the Hermitian `h` in
    /// Frobenius distance.
    pub fn project_to_states(&self, h: &DMatrix<C64>) -> Result<BlochVector> {
        if h.nrows() != self.dim || h.ncols() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                got: h.nrows(),
            });
        }
        let herm = (h + h.adjoint()) * C64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(herm);
        let projected = project_simplex(eig.eigenvalues.as_slice());
        let diag =
            DVector::from_iterator(self.dim, projected.into_iter().map(|x| C64::new(x, 0.0)));
        let v = &eig.eigenvectors;
        let rho = v * DMatrix::from_diagonal(&diag) * v.adjoint();
        self.from_matrix(&rho)
    }

    /// Bloch coordinates of `|ψ⟩⟨ψ|/⟨ψ|ψ⟩`.
    pub fn pure_state(&self, psi: &DVector<C64>) -> Result<BlochVector> {
        if psi.len() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                got: psi.len(),
            });
        }
        let n2 = psi.norm_squared();
        if !(n2 > 0.0) {
            return Err(Error::Domain("zero state vector".into()));
        }
        self.from_matrix(&(psi * psi.adjoint() / C64::new(n2, 0.0)))
    }

    /// A Haar-random pure state.
    pub fn random_pure_state(&self, seed: u64) -> BlochVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let psi = DVector::from_fn(self.dim, |_, _| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        self.pure_state(&psi).expect("Gaussian vector is nonzero")
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.d() {
            return Err(Error::Shape {
                expected: self.d(),
                got: len,
            });
        }
        Ok(())
    }
}

impl ParameterSpace for HermitianBasis {
    fn dim(&self) -> usize {
        self.d()
    }

    fn contains(&self, r: &DVector<f64>, tol: f64) -> bool {
        r.len() == self.d() && self.min_eigenvalue(r) >= -tol
    }

    fn project(&self, r: &DVector<f64>) -> DVector<f64> {
        self.project_to_states(&self.operator(r))
            .map(BlochVector::into_inner)
            .unwrap_or_else(|_| DVector::zeros(self.d()))
    }

    fn interior_point(&self) -> DVector<f64> {
        DVector::zeros(self.d())
    }
}
