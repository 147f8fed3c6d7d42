//! Training sets and evaluation grids over `K × [δ, T]`.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chart::chart_encode;
use crate::coefficients::OuCoefficients;
use crate::error::{Error, Result};
use crate::gdn::TrainingPair;
use crate::ou::MarginalPropagator;
use crate::rng;
use crate::scenario::Scenario;

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    r
}

/// `n` points of a Halton sequence in the box, with a seeded
/// Cranley–Patterson shift. Dimensions beyond the prime table fall back to
/// uniform draws.
pub fn halton_points(domain: &[[f64; 2]], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::keyed(seed, 0x4a17);
    let shifts: Vec<f64> = domain.iter().map(|_| r.random::<f64>()).collect();
    (0..n)
        .map(|i| {
            domain
                .iter()
                .enumerate()
                .map(|(j, [lo, hi])| {
                    let u = match PRIMES.get(j) {
                        Some(&p) => (radical_inverse(i as u64 + 1, p) + shifts[j]).fract(),
                        None => r.random::<f64>(),
                    };
                    lo + (hi - lo) * u
                })
                .collect()
        })
        .collect()
}

/// `n` equally spaced values on `[lo, hi]`; a single point sits at `lo`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Tensor grid `x_per_axis^D` over `K` times `t_points` over `[δ, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_per_axis: usize,
    pub t_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            x_per_axis: 5,
            t_points: 5,
        }
    }
}

impl GridSpec {
    /// Grid points ordered by time, then lexicographically in `x`. A single
    /// point per axis sits at the midpoint of `K`.
    pub fn points(&self, scenario: &Scenario) -> Vec<(Vec<f64>, f64)> {
        let axes: Vec<Vec<f64>> = scenario
            .domain
            .iter()
            .map(|&[lo, hi]| {
                if self.x_per_axis == 1 {
                    vec![0.5 * (lo + hi)]
                } else {
                    linspace(lo, hi, self.x_per_axis)
                }
            })
            .collect();
        let mut xs: Vec<Vec<f64>> = vec![vec![]];
        for axis in &axes {
            xs = xs
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push(*v);
                        p
                    })
                })
                .collect();
        }
        let ts = if self.t_points == 1 {
            vec![scenario.horizon]
        } else {
            linspace(scenario.delta, scenario.horizon, self.t_points)
        };
        ts.iter()
            .flat_map(|&t| xs.iter().map(move |x| (x.clone(), t)))
            .collect()
    }

    pub fn len(&self, d: usize) -> usize {
        self.x_per_axis.pow(d as u32) * self.t_points
    }

    pub fn is_empty(&self) -> bool {
        self.x_per_axis == 0 || self.t_points == 0
    }
}

/// Exact laws at a set of `(x, t)` points, one propagator per distinct time.
pub fn exact_laws(
    coeffs: &OuCoefficients,
    points: &[(Vec<f64>, f64)],
    quad_steps: usize,
) -> Result<Vec<crate::GaussianMeasure>> {
    let mut cache: Vec<(f64, MarginalPropagator)> = Vec::new();
    points
        .iter()
        .map(|(x, t)| {
            let idx = match cache.iter().position(|(s, _)| s == t) {
                Some(i) => i,
                None => {
                    cache.push((*t, MarginalPropagator::new(coeffs, *t, quad_steps)?));
                    cache.len() - 1
                }
            };
            cache[idx].1.law(&DVector::from_column_slice(x))
        })
        .collect()
}

/// `n_x` Halton points in `K` times `n_t` uniform times on `[δ, T]`, each
/// labelled with the chart coordinates of its exact marginal law.
pub fn build_training_set(scenario: &Scenario, n_x: usize, n_t: usize, seed: u64) -> Result<Vec<TrainingPair>> {
    if !(scenario.delta > 0.0) {
        return Err(Error::Domain(format!("delta must be positive, got {}", scenario.delta)));
    }
    if n_x == 0 || n_t == 0 {
        return Err(Error::Domain("n_x and n_t must be positive".into()));
    }
    let coeffs = scenario.validate()?;
    let xs = halton_points(&scenario.domain, n_x, seed);
    let ts = linspace(scenario.delta, scenario.horizon, n_t);
    let mut out = Vec::with_capacity(n_x * n_t);
    for &t in &ts {
        let prop = MarginalPropagator::new(&coeffs, t, scenario.quad_steps)?;
        for x in &xs {
            let law = prop.law(&DVector::from_column_slice(x))?;
            out.push(TrainingPair {
                x: x.clone(),
                t,
                target: chart_encode(&law)?,
            });
        }
    }
    Ok(out)
}
