//! Small dense linear-algebra helpers shared by the modules.

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Relative eigenvalue floor applied when inverting symmetric PSD matrices.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Inverse of a symmetric positive-(semi)definite matrix through its
/// eigendecomposition, with eigenvalues clamped at `EIGEN_FLOOR * max`.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spd_function(m, |x| 1.0 / x)
}

/// `m^{-1/2}` for a symmetric positive-definite matrix.
pub fn spd_inverse_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spd_function(m, |x| 1.0 / x.sqrt())
}

/// `m^{1/2}` for a symmetric positive-semidefinite matrix.
pub fn spd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spd_function(m, f64::sqrt)
}

fn spd_function(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || !min.is_finite() || min < -1e-8 * max {
        return Err(Error::IllConditionedFisher { min, max });
    }
    let floor = EIGEN_FLOOR * max;
    let vals = eig.eigenvalues.map(|x| f(x.max(floor)));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose())
}

/// `g^{-1/2}` for a Hermitian positive-definite matrix.
pub fn hermitian_inverse_sqrt(g: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    let eig = SymmetricEigen::new(g.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || min <= 1e-12 * max {
        return Err(Error::DegenerateEnsemble(min));
    }
    let vals = eig.eigenvalues.map(|x| C64::new(1.0 / x.sqrt(), 0.0));
    let v = &eig.eigenvectors;
    Ok(v * DMatrix::from_diagonal(&vals) * v.adjoint())
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(h: &DMatrix<C64>) -> DVector<f64> {
    let mut vals = h.clone().symmetric_eigenvalues();
    vals.as_mut_slice().sort_by(|a, b| a.total_cmp(b));
    vals
}

/// Numerical rank of a real matrix from its singular values.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let max = sv.max();
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * max).count()
}

/// Largest eigenvalue of a symmetric PSD operator given as a matrix-vector
/// product, by power iteration warm-started from `v`.
pub fn power_iteration(
    apply: impl Fn(&DVector<f64>) -> DVector<f64>,
    v: &mut DVector<f64>,
    iters: usize,
) -> f64 {
    let mut estimate = 0.0;
    for _ in 0..iters {
        let norm = v.norm();
        if norm == 0.0 {
            v.fill(1.0);
            continue;
        }
        *v /= norm;
        let w = apply(v);
        estimate = v.dot(&w);
        *v = w;
    }
    let norm = v.norm();
    if norm > 0.0 {
        *v /= norm;
    }
    estimate
}

/// Euclidean projection onto the probability simplex by sorting and
/// thresholding.
pub fn project_simplex(x: &[f64]) -> Vec<f64> {
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    x.iter().map(|&v| (v - theta).max(0.0)).collect()
}

/// Quadratic form `xᵀ A x`.
pub fn quad_form(a: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    x.dot(&(a * x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn simplex_projection_matches_brute_force() {
        // (1.5, -0.5): minimize (a-1.5)^2 + (1-a+0.5)^2 over a in [0,1] -> a = 1
        assert_eq!(project_simplex(&[1.5, -0.5]), vec![1.0, 0.0]);
        let p = project_simplex(&[0.2, 0.3, 0.5]);
        for (a, b) in p.iter().zip([0.2, 0.3, 0.5]) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
        let p = project_simplex(&[0.0, 0.0, 0.0]);
        for v in p {
            assert_relative_eq!(v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn simplex_projection_beats_grid_search() {
        let x = [0.9, 0.4, -0.2];
        let p = project_simplex(&x);
        let dist = |q: &[f64]| q.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let best = dist(&p);
        let n = 400;
        for i in 0..=n {
            for j in 0..=(n - i) {
                let a = i as f64 / n as f64;
                let b = j as f64 / n as f64;
                assert!(best <= dist(&[a, b, 1.0 - a - b]) + 1e-12);
            }
        }
    }

    #[test]
    fn spd_inverse_roundtrip() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let inv = spd_inverse(&m).unwrap();
        assert_relative_eq!(&m * &inv, DMatrix::identity(3, 3), epsilon = 1e-12);
        let s = spd_inverse_sqrt(&m).unwrap();
        assert_relative_eq!(&s * &m * &s, DMatrix::identity(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn indefinite_matrix_rejected() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(
            spd_inverse(&m),
            Err(Error::IllConditionedFisher { .. })
        ));
    }

    #[test]
    fn power_iteration_finds_top_eigenvalue() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 5.0, 2.0]));
        let mut v = DVector::from_element(3, 1.0);
        let top = power_iteration(|x| &m * x, &mut v, 200);
        assert_relative_eq!(top, 5.0, epsilon = 1e-9);
    }
}
