//! Nondegenerate Gaussian measures and their closed-form 2-Wasserstein
//! (Bures–Wasserstein) distance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{check_dim, Error, Result};
use crate::spd;

/// Relative window below zero in which the Bures trace term is treated as
/// round-off and clamped.
pub const TRACE_CLAMP_WINDOW: f64 = 1e-9;

/// A Gaussian measure `N(mean, cov)` with symmetric positive definite `cov`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianMeasure {
    /// Validates symmetry (to [`spd::SYMMETRY_TOL`]) and positive
    /// definiteness (Cholesky must succeed). The stored covariance is the
    /// exact symmetric part of `cov`.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::Domain("Gaussian of dimension 0".into()));
        }
        check_dim(d, cov.nrows(), "covariance rows")?;
        check_dim(d, cov.ncols(), "covariance columns")?;
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("mean has non-finite entries".into()));
        }
        spd::check_finite(&cov, "covariance")?;
        if !spd::is_symmetric(&cov) {
            return Err(Error::Domain("covariance is not symmetric".into()));
        }
        let cov = spd::symmetrize(&cov);
        if cov.clone().cholesky().is_none() {
            return Err(Error::Domain(format!(
                "covariance is not positive definite (smallest eigenvalue {:e})",
                spd::min_eigenvalue(&cov)
            )));
        }
        Ok(Self { mean, cov })
    }

    pub fn from_slices(mean: &[f64], cov_row_major: &[f64]) -> Result<Self> {
        let d = mean.len();
        check_dim(d * d, cov_row_major.len(), "row-major covariance")?;
        Self::new(
            DVector::from_column_slice(mean),
            DMatrix::from_row_slice(d, d, cov_row_major),
        )
    }

    /// `N(0, I_d)`.
    pub fn standard(d: usize) -> Self {
        Self {
            mean: DVector::zeros(d),
            cov: DMatrix::identity(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn into_parts(self) -> (DVector<f64>, DMatrix<f64>) {
        (self.mean, self.cov)
    }

    /// Same covariance, mean shifted by `shift`.
    pub fn translated(&self, shift: &DVector<f64>) -> Self {
        Self {
            mean: &self.mean + shift,
            cov: self.cov.clone(),
        }
    }
}

/// Squared 2-Wasserstein distance by the Gelbrich formula
/// `‖μ1−μ2‖² + tr(Σ1 + Σ2 − 2(Σ2^{1/2} Σ1 Σ2^{1/2})^{1/2})`.
pub fn w2_squared(g1: &GaussianMeasure, g2: &GaussianMeasure) -> Result<f64> {
    check_dim(g1.dim(), g2.dim(), "Gaussian dimensions")?;
    let mean_term = (&g1.mean - &g2.mean).norm_squared();
    let root2 = spd::spd_sqrt(&g2.cov)?;
    let inner = &root2 * &g1.cov * &root2;
    let cross = spd::trace_sqrt_psd(&inner);
    let total_trace = g1.cov.trace() + g2.cov.trace();
    let mut trace_term = total_trace - 2.0 * cross;
    if trace_term < 0.0 {
        let window = TRACE_CLAMP_WINDOW * total_trace.max(1.0);
        if trace_term < -window {
            return Err(Error::Numeric(format!(
                "Bures trace term {trace_term:e} is below the round-off window -{window:e}"
            )));
        }
        trace_term = 0.0;
    }
    Ok(mean_term + trace_term)
}

/// 2-Wasserstein distance between two Gaussian measures.
pub fn w2_distance(g1: &GaussianMeasure, g2: &GaussianMeasure) -> Result<f64> {
    w2_squared(g1, g2).map(f64::sqrt)
}

#[derive(Serialize, Deserialize)]
struct GaussianRepr {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn rows_to_matrix(rows: &[Vec<f64>]) -> std::result::Result<DMatrix<f64>, String> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err("ragged matrix rows".into());
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

impl Serialize for GaussianMeasure {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        GaussianRepr {
            mean: self.mean.iter().copied().collect(),
            cov: matrix_to_rows(&self.cov),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for GaussianMeasure {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = GaussianRepr::deserialize(deserializer)?;
        let cov = rows_to_matrix(&repr.cov).map_err(serde::de::Error::custom)?;
        GaussianMeasure::new(DVector::from_vec(repr.mean), cov).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn diag(values: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(values))
    }

    fn gaussian_from(d: usize, entries: &[f64]) -> GaussianMeasure {
        let mean = DVector::from_iterator(d, entries.iter().copied().take(d));
        let a = DMatrix::from_iterator(d, d, entries.iter().copied().skip(d).take(d * d));
        let cov = &a * a.transpose() + DMatrix::identity(d, d) * 0.05;
        GaussianMeasure::new(mean, cov).unwrap()
    }

    #[test]
    fn identical_measures_are_at_distance_zero() {
        let g = GaussianMeasure::standard(3);
        assert_eq!(w2_distance(&g, &g).unwrap(), 0.0);
    }

    #[test]
    fn one_dimensional_closed_form() {
        let g1 = GaussianMeasure::from_slices(&[0.0], &[1.0]).unwrap();
        let g2 = GaussianMeasure::from_slices(&[3.0], &[4.0]).unwrap();
        assert_relative_eq!(w2_distance(&g1, &g2).unwrap(), 10f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn commuting_diagonal_case() {
        let g1 = GaussianMeasure::new(DVector::zeros(2), diag(&[1.0, 4.0])).unwrap();
        let g2 = GaussianMeasure::new(DVector::zeros(2), diag(&[4.0, 1.0])).unwrap();
        assert_relative_eq!(w2_distance(&g1, &g2).unwrap(), 2f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let e = w2_distance(&GaussianMeasure::standard(2), &GaussianMeasure::standard(3));
        assert!(matches!(e, Err(Error::Dimension { .. })));
    }

    #[test]
    fn constructor_rejects_bad_covariances() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.0, 1.0]);
        assert!(GaussianMeasure::new(DVector::zeros(2), asym).is_err());
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianMeasure::new(DVector::zeros(2), indefinite).is_err());
        let nan = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(matches!(
            GaussianMeasure::new(DVector::zeros(1), nan),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn json_is_row_major() {
        let g = GaussianMeasure::from_slices(&[1.0, 2.0], &[2.0, 0.5, 0.5, 1.0]).unwrap();
        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(json, r#"{"mean":[1.0,2.0],"cov":[[2.0,0.5],[0.5,1.0]]}"#);
        let back: GaussianMeasure = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn metric_axioms(d in 1usize..=5, entries in prop::collection::vec(-1.5f64..1.5, 90)) {
            let a = gaussian_from(d, &entries[0..30]);
            let b = gaussian_from(d, &entries[30..60]);
            let c = gaussian_from(d, &entries[60..90]);
            let ab = w2_distance(&a, &b).unwrap();
            let ba = w2_distance(&b, &a).unwrap();
            let bc = w2_distance(&b, &c).unwrap();
            let ac = w2_distance(&a, &c).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() <= 1e-9, "asymmetry {}", (ab - ba).abs());
            prop_assert!(ac <= ab + bc + 1e-8);
        }

        #[test]
        fn translation_invariance(d in 1usize..=5, entries in prop::collection::vec(-1.5f64..1.5, 65)) {
            let a = gaussian_from(d, &entries[0..30]);
            let b = gaussian_from(d, &entries[30..60]);
            let shift = DVector::from_iterator(d, entries[60..].iter().copied().take(d));
            let before = w2_distance(&a, &b).unwrap();
            let after = w2_distance(&a.translated(&shift), &b.translated(&shift)).unwrap();
            prop_assert!((before - after).abs() <= 1e-10);
        }

        #[test]
        fn commuting_covariances_reduce_to_root_difference(
            d in 1usize..=5,
            ev1 in prop::collection::vec(0.1f64..4.0, 5),
            ev2 in prop::collection::vec(0.1f64..4.0, 5),
            rot in prop::collection::vec(-1.0f64..1.0, 25),
        ) {
            // Shared eigenbasis from the QR factor of a random matrix.
            let a = DMatrix::from_iterator(d, d, rot.iter().copied().take(d * d))
                + DMatrix::identity(d, d) * 2.0;
            let q = a.qr().q();
            let s1 = &q * diag(&ev1[..d]) * q.transpose();
            let s2 = &q * diag(&ev2[..d]) * q.transpose();
            let g1 = GaussianMeasure::new(DVector::zeros(d), spd::symmetrize(&s1)).unwrap();
            let g2 = GaussianMeasure::new(DVector::zeros(d), spd::symmetrize(&s2)).unwrap();
            let r1 = spd::spd_sqrt(g1.cov()).unwrap();
            let r2 = spd::spd_sqrt(g2.cov()).unwrap();
            let expected = (r1 - r2).norm_squared();
            let trace_term = w2_squared(&g1, &g2).unwrap();
            prop_assert!((trace_term - expected).abs() <= 1e-8);
        }
    }
}
