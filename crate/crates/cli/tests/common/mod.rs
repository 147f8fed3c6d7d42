#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use genmarket_core::GaussianMeasure;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

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

/// `n × D` draws from `g` through an independent Cholesky factor.
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

pub fn black_scholes_call(spot: f64, strike: f64, vol: f64, t: f64) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    let sd = vol * t.sqrt();
    let d1 = ((spot / strike).ln() + 0.5 * sd * sd) / sd;
    spot * n.cdf(d1) - strike * n.cdf(d1 - sd)
}

pub fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

/// Runs the binary with `GENMARKET_THREADS` set to `threads` (unset if `None`).
pub fn genmarket_with(args: &[&str], threads: Option<usize>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_genmarket"));
    cmd.args(args);
    match threads {
        Some(n) => cmd.env("GENMARKET_THREADS", n.to_string()),
        None => cmd.env_remove("GENMARKET_THREADS"),
    };
    cmd.output().expect("binary runs")
}

/// Runs the binary and panics with its stderr on failure.
pub fn genmarket(args: &[&str]) -> Output {
    let out = genmarket_with(args, None);
    assert!(
        out.status.success(),
        "genmarket {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Data rows of a CSV written by the tool: comments and the header skipped.
pub fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

pub fn fresh_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
