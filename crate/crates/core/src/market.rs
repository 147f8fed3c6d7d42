//! Clipped exponential price map `ℰ = exp ∘ P`, with `P` the Euclidean
//! projection onto the ball of radius `M`, and push-forward sampling of
//! Gaussian laws through it.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::gaussian::GaussianMeasure;
use crate::rng;
use crate::spd;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipConfig {
    pub threshold: f64,
    pub dimension: usize,
}

impl ClipConfig {
    pub fn new(threshold: f64, dimension: usize) -> Result<Self> {
        if !(threshold > 0.0) || !threshold.is_finite() {
            return Err(Error::config(
                "clip_threshold",
                format!("must be positive and finite, got {threshold}"),
            ));
        }
        if dimension == 0 {
            return Err(Error::config("dimension", "must be at least 1"));
        }
        Ok(Self { threshold, dimension })
    }

    /// `√D · e^M`, the Lipschitz constant of `ℰ` and of `ℰ_#` on `W2`.
    pub fn lipschitz(&self) -> f64 {
        (self.dimension as f64).sqrt() * self.threshold.exp()
    }

    /// Price range `[e^{-M}, e^{M}]` of every coordinate.
    pub fn price_bounds(&self) -> (f64, f64) {
        ((-self.threshold).exp(), self.threshold.exp())
    }
}

/// Writes `ℰ(x)` into `out`.
pub fn clipped_exp_into(x: &[f64], threshold: f64, out: &mut [f64]) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let scale = if norm > threshold { threshold / norm } else { 1.0 };
    for (o, v) in out.iter_mut().zip(x) {
        // The clamp only absorbs the last ulp of `v * scale`.
        *o = (v * scale).clamp(-threshold, threshold).exp();
    }
}

pub fn clipped_exp(x: &DVector<f64>, cfg: &ClipConfig) -> Result<DVector<f64>> {
    check_dim(cfg.dimension, x.len(), "log-state")?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("clipped_exp of a non-finite vector".into()));
    }
    let mut out = DVector::zeros(x.len());
    clipped_exp_into(x.as_slice(), cfg.threshold, out.as_mut_slice());
    Ok(out)
}

/// `n × d` standard normal draws, row chunks of [`rng::CHUNK`] keyed by
/// `(seed, chunk index)`. Returned row-major.
pub fn standard_normals(n: usize, d: usize, seed: u64) -> Vec<f64> {
    let mut z = vec![0.0; n * d];
    z.par_chunks_mut(rng::CHUNK * d)
        .enumerate()
        .for_each(|(chunk, block)| fill_normals(seed, chunk, block));
    z
}

/// Fills one chunk of [`standard_normals`].
pub(crate) fn fill_normals(seed: u64, chunk: usize, block: &mut [f64]) {
    let mut r = rng::keyed(seed, chunk as u64);
    for v in block.iter_mut() {
        *v = StandardNormal.sample(&mut r);
    }
}

/// Rows `mean + root · z_i` for row-major normals `z`.
pub(crate) fn affine_rows(g: &GaussianMeasure, root: &DMatrix<f64>, z: &[f64]) -> Vec<f64> {
    let d = g.dim();
    let mean = g.mean().as_slice();
    let mut out = vec![0.0; z.len()];
    for (zi, oi) in z.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
        for r in 0..d {
            let mut acc = mean[r];
            for c in 0..d {
                acc += root[(r, c)] * zi[c];
            }
            oi[r] = acc;
        }
    }
    out
}

/// `n` draws of `ℰ(U)`, `U ~ g`, as an `n × D` matrix. Two calls with the
/// same seed use the same underlying normals.
pub fn pushforward_sample(g: &GaussianMeasure, cfg: &ClipConfig, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let d = g.dim();
    check_dim(cfg.dimension, d, "Gaussian dimension")?;
    if n == 0 {
        return Err(Error::Domain("sample count must be positive".into()));
    }
    let root = spd::spd_sqrt(g.cov())?;
    let z = standard_normals(n, d, seed);
    let mut rows = affine_rows(g, &root, &z);
    let mut buf = vec![0.0; d];
    for row in rows.chunks_exact_mut(d) {
        clipped_exp_into(row, cfg.threshold, &mut buf);
        row.copy_from_slice(&buf);
    }
    Ok(DMatrix::from_row_slice(n, d, &rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    #[test]
    fn zero_maps_to_ones() {
        let cfg = ClipConfig::new(2.0, 3).unwrap();
        assert_eq!(
            clipped_exp(&DVector::zeros(3), &cfg).unwrap(),
            DVector::from_element(3, 1.0)
        );
    }

    #[test]
    fn inside_ball_is_plain_exp() {
        let cfg = ClipConfig::new(2.0, 2).unwrap();
        let x = DVector::from_vec(vec![0.5, -1.2]);
        let y = clipped_exp(&x, &cfg).unwrap();
        assert_relative_eq!(y[0], 0.5f64.exp());
        assert_relative_eq!(y[1], (-1.2f64).exp());
    }

    #[test]
    fn outside_ball_projects_to_boundary() {
        let cfg = ClipConfig::new(2.0, 1).unwrap();
        let y = clipped_exp(&DVector::from_vec(vec![5.0]), &cfg).unwrap();
        assert_relative_eq!(y[0], 7.389_056_098_930_65, epsilon = 1e-12);
        let y = clipped_exp(&DVector::from_vec(vec![-5.0]), &cfg).unwrap();
        assert_relative_eq!(y[0], (-2f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn rejects_bad_threshold() {
        assert!(ClipConfig::new(0.0, 1).is_err());
        assert!(ClipConfig::new(f64::INFINITY, 1).is_err());
    }

    #[test]
    fn pointwise_lipschitz_and_range() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for d in 1..=3 {
            let cfg = ClipConfig::new(2.0, d).unwrap();
            let (lo, hi) = cfg.price_bounds();
            for _ in 0..10_000 / 3 {
                let x = DVector::from_fn(d, |_, _| rng.random_range(-4.0..4.0));
                let y = DVector::from_fn(d, |_, _| rng.random_range(-4.0..4.0));
                let ex = clipped_exp(&x, &cfg).unwrap();
                let ey = clipped_exp(&y, &cfg).unwrap();
                assert!((&ex - &ey).norm() <= cfg.lipschitz() * (&x - &y).norm());
                assert!(ex.iter().all(|v| (lo..=hi).contains(v)));
            }
        }
    }

    #[test]
    fn degenerate_gaussian_collapses_to_point() {
        let cfg = ClipConfig::new(2.0, 2).unwrap();
        let mean = DVector::from_vec(vec![0.3, -0.4]);
        let g = GaussianMeasure::new(mean.clone(), DMatrix::identity(2, 2) * 1e-18).unwrap();
        let target = clipped_exp(&mean, &cfg).unwrap();
        let s = pushforward_sample(&g, &cfg, 500, 3).unwrap();
        for row in s.row_iter() {
            for j in 0..2 {
                assert!((row[j] - target[j]).abs() <= 1e-6 * target[j]);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = ClipConfig::new(2.0, 2).unwrap();
        let g = GaussianMeasure::from_slices(&[0.1, 0.2], &[0.5, 0.1, 0.1, 0.3]).unwrap();
        let a = pushforward_sample(&g, &cfg, 3000, 5).unwrap();
        let b = pushforward_sample(&g, &cfg, 3000, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lognormal_mean() {
        // E e^Z = e^{1/2}; M = 40 makes clipping irrelevant.
        let cfg = ClipConfig::new(40.0, 1).unwrap();
        let g = GaussianMeasure::standard(1);
        let n = 1_000_000;
        let s = pushforward_sample(&g, &cfg, n, 17).unwrap();
        let mean = s.mean();
        let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        assert!((mean - 0.5f64.exp()).abs() < 3.0 * se, "mean {mean}, se {se}");
    }
}
