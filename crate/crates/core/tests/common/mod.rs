#![allow(dead_code)]

use genmarket_core::{GaussianMeasure, Scenario};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `Q diag(λ) Qᵀ` with `λ` uniform in `[lo, hi]` and `Q` from a QR of a
/// Gaussian matrix.
pub fn random_spd(r: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| r.random_range(-1.0..1.0));
    let q = a.qr().q();
    let l = DVector::from_fn(d, |_, _| r.random_range(lo..hi));
    let s = &q * DMatrix::from_diagonal(&l) * q.transpose();
    (&s + s.transpose()) * 0.5
}

pub fn random_gaussian(r: &mut ChaCha8Rng, d: usize) -> GaussianMeasure {
    let mean = DVector::from_fn(d, |_, _| r.random_range(-1.0..1.0));
    GaussianMeasure::new(mean, random_spd(r, d, 0.2, 2.0)).unwrap()
}

pub fn load_scenario(name: &str) -> Scenario {
    let path = format!("{}/../../scenarios/{name}", env!("CARGO_MANIFEST_DIR"));
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// `N × D` draws from `g` using an independent Cholesky factor.
pub fn gaussian_samples(r: &mut ChaCha8Rng, g: &GaussianMeasure, n: usize) -> DMatrix<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let d = g.dim();
    let l = g.cov().clone().cholesky().unwrap().l();
    let mut out = DMatrix::zeros(n, d);
    let mut z = DVector::zeros(d);
    for i in 0..n {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(r);
        }
        let x = g.mean() + &l * &z;
        out.row_mut(i).copy_from(&x.transpose());
    }
    out
}
