//! The global chart `(μ, σ) ↦ N(μ, exp(sym(σ)))` on nondegenerate Gaussians.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gaussian::GaussianMeasure;
use crate::spd;

/// Number of free entries of a symmetric `d × d` matrix.
pub const fn sym_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Chart dimension `d + d(d+1)/2`.
pub const fn chart_len(d: usize) -> usize {
    d + sym_len(d)
}

/// Packed position of entry `(i, j)`, `i ≤ j`: the upper triangle is read
/// row by row, so row 0 holds `x[0..d]`, row 1 starts at `x[d]`, and so on.
#[inline]
fn packed_index(d: usize, i: usize, j: usize) -> usize {
    debug_assert!(i <= j && j < d);
    i * d - i * (i.saturating_sub(1)) / 2 + (j - i)
}

/// The linear map from `R^{d(d+1)/2}` onto symmetric `d × d` matrices.
pub fn sym_embed(x: &[f64], d: usize) -> Result<DMatrix<f64>> {
    check_dim(sym_len(d), x.len(), "packed symmetric coordinates")?;
    Ok(DMatrix::from_fn(d, d, |i, j| {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        x[packed_index(d, a, b)]
    }))
}

/// Inverse of [`sym_embed`] on symmetric matrices (reads the upper triangle).
pub fn sym_extract(s: &DMatrix<f64>) -> Result<Vec<f64>> {
    let d = s.nrows();
    check_dim(d, s.ncols(), "square matrix")?;
    let mut out = Vec::with_capacity(sym_len(d));
    for i in 0..d {
        for j in i..d {
            out.push(s[(i, j)]);
        }
    }
    Ok(out)
}

/// Coordinates `(μ, σ) ∈ R^d × R^{d(d+1)/2}`. Every finite value is admissible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartCoords {
    pub mu: Vec<f64>,
    pub sigma_coords: Vec<f64>,
}

impl ChartCoords {
    pub fn new(mu: Vec<f64>, sigma_coords: Vec<f64>) -> Result<Self> {
        check_dim(sym_len(mu.len()), sigma_coords.len(), "chart covariance coordinates")?;
        Ok(Self { mu, sigma_coords })
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            mu: vec![0.0; d],
            sigma_coords: vec![0.0; sym_len(d)],
        }
    }

    /// Splits a flat vector `[μ; σ]` of length `d + d(d+1)/2`.
    pub fn from_flat(flat: &[f64], d: usize) -> Result<Self> {
        check_dim(chart_len(d), flat.len(), "flat chart coordinates")?;
        Ok(Self {
            mu: flat[..d].to_vec(),
            sigma_coords: flat[d..].to_vec(),
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.mu.clone();
        v.extend_from_slice(&self.sigma_coords);
        v
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// `N(μ, exp(sym(σ)))`.
pub fn chart_decode(c: &ChartCoords) -> Result<GaussianMeasure> {
    let d = c.dim();
    check_dim(sym_len(d), c.sigma_coords.len(), "chart covariance coordinates")?;
    if c.mu.iter().chain(&c.sigma_coords).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("chart coordinates are not finite".into()));
    }
    let cov = spd::matrix_exp(&sym_embed(&c.sigma_coords, d)?)?;
    GaussianMeasure::new(DVector::from_column_slice(&c.mu), cov)
}

/// Inverse chart: `(μ, sym⁻¹(log Σ))`.
pub fn chart_encode(g: &GaussianMeasure) -> Result<ChartCoords> {
    let log = spd::matrix_log(g.cov())?;
    Ok(ChartCoords {
        mu: g.mean().iter().copied().collect(),
        sigma_coords: sym_extract(&log)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn two_by_two_layout() {
        let s = sym_embed(&[1.0, 2.0, 3.0], 2).unwrap();
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 3.0]));
        assert_eq!(sym_embed(&[0.0; 3], 2).unwrap(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn row_pattern_for_larger_d() {
        // Row 0 is x1..xD, row 1 continues with x_{D+1}..x_{2D-1} (1-based).
        let d = 4;
        let x: Vec<f64> = (1..=sym_len(d)).map(|v| v as f64).collect();
        let s = sym_embed(&x, d).unwrap();
        assert_eq!(s.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.row(1).iter().copied().collect::<Vec<_>>(), vec![2.0, 5.0, 6.0, 7.0]);
        assert_eq!(s[(3, 3)], sym_len(d) as f64);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(sym_embed(&[1.0, 2.0], 2), Err(Error::Dimension { .. })));
    }

    #[test]
    fn decode_known_points() {
        let g = chart_decode(&ChartCoords::zeros(3)).unwrap();
        assert_eq!(g, GaussianMeasure::standard(3));
        let g = chart_decode(&ChartCoords::new(vec![1.0], vec![2.0 * 2f64.ln()]).unwrap()).unwrap();
        assert_relative_eq!(g.mean()[0], 1.0);
        assert_relative_eq!(g.cov()[(0, 0)], 4.0, epsilon = 1e-14);
    }

    #[test]
    fn encode_known_points() {
        let c = chart_encode(&GaussianMeasure::standard(2)).unwrap();
        assert_eq!(c, ChartCoords::zeros(2));
        let g = GaussianMeasure::from_slices(&[1.0], &[4.0]).unwrap();
        let c = chart_encode(&g).unwrap();
        assert_relative_eq!(c.sigma_coords[0], 2.0 * 2f64.ln(), epsilon = 1e-14);
    }

    /// Independent index map: walk the upper triangle with an explicit counter.
    fn oracle_position(d: usize, i: usize, j: usize) -> usize {
        let mut k = 0;
        for r in 0..d {
            for c in r..d {
                if (r, c) == (i.min(j), i.max(j)) {
                    return k;
                }
                k += 1;
            }
        }
        unreachable!()
    }

    proptest! {
        #[test]
        fn embed_matches_index_oracle(d in 1usize..7, x in prop::collection::vec(-5.0f64..5.0, 28)) {
            let x = &x[..sym_len(d)];
            let s = sym_embed(x, d).unwrap();
            for i in 0..d {
                for j in 0..d {
                    prop_assert_eq!(s[(i, j)], x[oracle_position(d, i, j)]);
                }
            }
            prop_assert_eq!(sym_extract(&s).unwrap(), x.to_vec());
        }

        #[test]
        fn chart_round_trips(d in 1usize..5, v in prop::collection::vec(-1.5f64..1.5, 14)) {
            let c = ChartCoords::from_flat(&v[..chart_len(d)], d).unwrap();
            let back = chart_encode(&chart_decode(&c).unwrap()).unwrap();
            let err: f64 = c.to_flat().iter().zip(back.to_flat()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(err <= 1e-8, "coordinate round-trip error {err}");

            let g = chart_decode(&c).unwrap();
            let again = chart_decode(&chart_encode(&g).unwrap()).unwrap();
            prop_assert!((again.cov() - g.cov()).norm() <= 1e-8 * (1.0 + g.cov().norm()));
        }
    }
}
