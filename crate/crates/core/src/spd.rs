//! Spectral calculus on symmetric and symmetric positive definite matrices.
//!
//! Every function here goes through one symmetric eigendecomposition
//! `S = Q diag(λ) Qᵀ` and rebuilds `Q diag(f(λ)) Qᵀ`, so outputs are exactly
//! symmetric and `sqrt`/`exp`/`log` commute with their argument.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue floor defining "nonsingular": `λ_min > floor · λ_max`.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Tolerance of [`is_symmetric`], relative to `1 + max|S|`.
pub const SYMMETRY_TOL: f64 = 1e-12;

pub fn is_symmetric(s: &DMatrix<f64>) -> bool {
    if !s.is_square() {
        return false;
    }
    let scale = 1.0 + s.amax();
    let n = s.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (s[(i, j)] - s[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return false;
            }
        }
    }
    true
}

pub(crate) fn check_finite(s: &DMatrix<f64>, what: &str) -> Result<()> {
    if s.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{what} has non-finite entries")))
    }
}

fn check_symmetric(s: &DMatrix<f64>, what: &str) -> Result<()> {
    if !s.is_square() {
        return Err(Error::Dimension {
            expected: s.nrows(),
            actual: s.ncols(),
            context: "square matrix",
        });
    }
    check_finite(s, what)?;
    if !is_symmetric(s) {
        return Err(Error::Domain(format!("{what} is not symmetric")));
    }
    Ok(())
}

/// `(S + Sᵀ) / 2`.
pub fn symmetrize(s: &DMatrix<f64>) -> DMatrix<f64> {
    (s + s.transpose()) * 0.5
}

/// Eigendecomposition of the symmetric part of `s`.
pub fn symmetric_eigen(s: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(symmetrize(s))
}

fn rebuild(eig: &SymmetricEigen<f64, nalgebra::Dyn>, values: &DVector<f64>) -> DMatrix<f64> {
    let q = &eig.eigenvectors;
    let mut scaled = q.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= values[j];
    }
    symmetrize(&(scaled * q.transpose()))
}

/// Fails with [`Error::NearSingular`] unless every eigenvalue exceeds
/// `floor · max(λ)` and zero.
pub fn check_spectrum(eigenvalues: &DVector<f64>, floor: f64) -> Result<()> {
    let max = eigenvalues.max();
    let min = eigenvalues.min();
    let threshold = (floor * max).max(0.0);
    if !(min > threshold) || !min.is_finite() {
        return Err(Error::NearSingular {
            eigenvalue: min,
            floor: threshold,
        });
    }
    Ok(())
}

/// Smallest eigenvalue of the symmetric part.
pub fn min_eigenvalue(s: &DMatrix<f64>) -> f64 {
    symmetric_eigen(s).eigenvalues.min()
}

/// Unique SPD square root, with the default [`EIGEN_FLOOR`].
pub fn spd_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    spd_sqrt_with_floor(s, EIGEN_FLOOR)
}

pub fn spd_sqrt_with_floor(s: &DMatrix<f64>, floor: f64) -> Result<DMatrix<f64>> {
    check_symmetric(s, "square-root argument")?;
    let eig = symmetric_eigen(s);
    check_spectrum(&eig.eigenvalues, floor)?;
    let roots = eig.eigenvalues.map(f64::sqrt);
    Ok(rebuild(&eig, &roots))
}

/// Matrix exponential of a symmetric matrix; the result is SPD.
pub fn matrix_exp(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(s, "exponential argument")?;
    let eig = symmetric_eigen(s);
    let values = eig.eigenvalues.map(f64::exp);
    if values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(Error::Numeric(format!(
            "matrix exponential out of range (eigenvalues in [{:e}, {:e}])",
            eig.eigenvalues.min(),
            eig.eigenvalues.max()
        )));
    }
    Ok(rebuild(&eig, &values))
}

/// Principal logarithm of an SPD matrix; the result is symmetric.
pub fn matrix_log(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(s, "logarithm argument")?;
    let eig = symmetric_eigen(s);
    if eig.eigenvalues.min() <= 0.0 {
        return Err(Error::Domain(format!(
            "logarithm of a matrix that is not positive definite (eigenvalue {:e})",
            eig.eigenvalues.min()
        )));
    }
    let logs = eig.eigenvalues.map(f64::ln);
    Ok(rebuild(&eig, &logs))
}

/// `tr(S^{1/2})` for a symmetric positive semidefinite `S`, with round-off
/// negatives (relative to the spectral radius) treated as zero.
pub(crate) fn trace_sqrt_psd(s: &DMatrix<f64>) -> f64 {
    let eig = symmetric_eigen(s);
    eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn random_symmetric(d: usize, entries: &[f64]) -> DMatrix<f64> {
        let a = DMatrix::from_iterator(d, d, entries.iter().copied().take(d * d));
        symmetrize(&a)
    }

    fn random_spd(d: usize, entries: &[f64]) -> DMatrix<f64> {
        let a = DMatrix::from_iterator(d, d, entries.iter().copied().take(d * d));
        &a * a.transpose() + DMatrix::identity(d, d) * 0.1
    }

    #[test]
    fn sqrt_of_identity_and_diagonal() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert_relative_eq!(spd_sqrt(&i).unwrap(), i, epsilon = 1e-15);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let r = spd_sqrt(&d).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        assert_relative_eq!(r, expected, epsilon = 1e-14);
    }

    #[test]
    fn exp_log_of_known_matrices() {
        let z = DMatrix::<f64>::zeros(2, 2);
        assert_relative_eq!(matrix_exp(&z).unwrap(), DMatrix::identity(2, 2), epsilon = 1e-15);
        assert_relative_eq!(matrix_log(&DMatrix::identity(2, 2)).unwrap(), z, epsilon = 1e-15);
        let l = DMatrix::from_diagonal(&DVector::from_vec(vec![2f64.ln(), 3f64.ln()]));
        let e = matrix_exp(&l).unwrap();
        assert_relative_eq!(e[(0, 0)], 2.0, epsilon = 1e-14);
        assert_relative_eq!(e[(1, 1)], 3.0, epsilon = 1e-14);
        assert!(e[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn near_singular_names_the_eigenvalue() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        match spd_sqrt(&s) {
            Err(Error::NearSingular { eigenvalue, .. }) => assert!(eigenvalue.abs() < 1e-12),
            other => panic!("expected near-singular error, got {other:?}"),
        }
    }

    #[test]
    fn log_rejects_indefinite() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(matrix_log(&s), Err(Error::Domain(_))));
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(matches!(matrix_exp(&s), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn sqrt_multiplies_back(d in 1usize..6, entries in prop::collection::vec(-2.0f64..2.0, 36)) {
            let s = random_spd(d, &entries);
            let r = spd_sqrt(&s).unwrap();
            let err = (&r * &r - &s).norm();
            prop_assert!(err <= 1e-10 * s.norm(), "err {err}");
            // SPD and commutes with its input.
            prop_assert!(min_eigenvalue(&r) > 0.0);
            prop_assert!((&r * &s - &s * &r).norm() <= 1e-9 * (1.0 + s.norm()));
        }

        #[test]
        fn log_inverts_exp(d in 1usize..6, entries in prop::collection::vec(-2.0f64..2.0, 36)) {
            let s = random_symmetric(d, &entries);
            let back = matrix_log(&matrix_exp(&s).unwrap()).unwrap();
            prop_assert!((back - &s).norm() <= 1e-9);
        }
    }
}
