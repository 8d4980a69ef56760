//! Dense symmetric matrix helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative diagonal jitter schedule: λ·mean(diag) with λ = 1e-10 ... 1e-6.
pub const JITTER_SCHEDULE: [f64; 5] = [1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

/// A Cholesky factor together with the jitter that was needed to obtain it.
#[derive(Clone, Debug)]
pub struct JitteredCholesky {
    pub factor: Cholesky<f64, Dyn>,
    /// Absolute amount added to every diagonal entry.
    pub jitter: f64,
}

/// Factor `a + λ·mean(diag(a))·I`, escalating λ through [`JITTER_SCHEDULE`].
pub fn jittered_cholesky(a: &DMatrix<f64>) -> Result<JitteredCholesky> {
    let n = a.nrows();
    if n == 0 || n != a.ncols() {
        return Err(Error::InvalidInput(format!(
            "expected a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let scale = (a.diagonal().sum() / n as f64).abs().max(f64::MIN_POSITIVE);
    for lambda in JITTER_SCHEDULE {
        let jitter = lambda * scale;
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(factor) = Cholesky::new(m) {
            return Ok(JitteredCholesky { factor, jitter });
        }
    }
    Err(Error::Degenerate {
        smallest_eigenvalue: smallest_eigenvalue(a),
    })
}

pub fn smallest_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// log det from a Cholesky factor.
pub fn chol_log_det(factor: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * factor.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Symmetric inverse square root (a)^{-1/2}, flooring eigenvalues at `floor`.
pub fn inverse_sqrt_sym(a: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(a));
    let n = a.nrows();
    let mut scaled = eig.eigenvectors.clone();
    for j in 0..n {
        let lam = eig.eigenvalues[j].max(floor);
        if !(lam > 0.0) {
            return Err(Error::Singular(format!(
                "eigenvalue {} is not positive; raise the regularization",
                eig.eigenvalues[j]
            )));
        }
        let s = 1.0 / lam.sqrt();
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    Ok(symmetrize(&(&scaled * eig.eigenvectors.transpose())))
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Solve `a x = b` for symmetric positive definite `a` (no jitter).
pub fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let chol = Cholesky::new(a.clone())
        .ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))?;
    Ok(chol.solve(b))
}

/// Inverse of a symmetric positive definite matrix (no jitter).
pub fn inverse_spd(a: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let chol = Cholesky::new(a.clone())
        .ok_or_else(|| Error::Singular(format!("{what} is not positive definite")))?;
    Ok(chol.inverse())
}

/// Arithmetic mean of a set of equal-length vectors.
pub fn mean_vector(items: &[DVector<f64>]) -> DVector<f64> {
    let d = items[0].len();
    let mut m = DVector::zeros(d);
    for v in items {
        m += v;
    }
    m / items.len() as f64
}

/// Scatter matrix Σ (x - mean)(x - mean)ᵀ.
pub fn scatter(items: &[DVector<f64>], mean: &DVector<f64>) -> DMatrix<f64> {
    let d = mean.len();
    let mut s = DMatrix::zeros(d, d);
    for v in items {
        let c = v - mean;
        s.ger(1.0, &c, &c, 1.0);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn inverse_sqrt_of_scaled_identity() {
        let a = DMatrix::<f64>::identity(3, 3) * 4.0;
        let r = inverse_sqrt_sym(&a, 0.0).unwrap();
        assert_abs_diff_eq!(r, DMatrix::identity(3, 3) * 0.5, epsilon = 1e-14);
    }

    #[test]
    fn inverse_sqrt_squares_to_inverse() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let r = inverse_sqrt_sym(&a, 0.0).unwrap();
        assert_abs_diff_eq!(&r * &r * &a, DMatrix::identity(3, 3), epsilon = 1e-12);
    }

    #[test]
    fn jitter_rescues_semidefinite() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let a = &v * v.transpose();
        let f = jittered_cholesky(&a).unwrap();
        assert!(f.jitter > 0.0);
    }

    #[test]
    fn indefinite_is_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match jittered_cholesky(&a) {
            Err(Error::Degenerate { smallest_eigenvalue }) => {
                assert_abs_diff_eq!(smallest_eigenvalue, -1.0, epsilon = 1e-12)
            }
            other => panic!("expected degeneracy, got {other:?}"),
        }
    }
}
