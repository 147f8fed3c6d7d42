//! Generalized Ornstein–Uhlenbeck dynamics
//! `X_t = x + ∫ (μ_s + M_s X_s) ds + ∫ σ_s dW_s`.
//!
//! The marginal law of `X_t` is Gaussian. Its mean solves
//! `m' = μ_t + M_t m`, `m(0) = x`, and its covariance follows from variation
//! of constants, `Σ_t = Φ(t) [∫₀ᵗ Φ(s)⁻¹ σ_s σ_sᵀ Φ(s)⁻ᵀ ds] Φ(t)ᵀ` with
//! `Φ' = M_t Φ`, `Φ(0) = I`. Both are integrated on one fixed RK4 grid.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coefficients::OuCoefficients;
use crate::error::{check_dim, Error, Result};
use crate::gaussian::GaussianMeasure;
use crate::rng;
use crate::spd;

pub const DEFAULT_QUAD_STEPS: usize = 1024;
pub const MIN_QUAD_STEPS: usize = 100;

/// Law of `X_t` started at `x0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalLaw {
    pub law: GaussianMeasure,
    pub t: f64,
    pub x0: Vec<f64>,
}

/// Everything about the marginal at a fixed time that does not depend on
/// the starting point: `mean(x0) = Φ(t) x0 + c(t)` and `Σ_t`.
///
/// RK4 is affine in the initial condition, so this factorization gives the
/// same numbers as integrating the mean ODE from each `x0` separately.
#[derive(Debug, Clone)]
pub struct MarginalPropagator {
    t: f64,
    flow: DMatrix<f64>,
    offset: DVector<f64>,
    cov: DMatrix<f64>,
}

struct Rk4Stage {
    mu: DVector<f64>,
    m: DMatrix<f64>,
}

impl MarginalPropagator {
    pub fn new(coeffs: &OuCoefficients, t: f64, quad_steps: usize) -> Result<Self> {
        let prop = Self::new_psd(coeffs, t, quad_steps)?;
        spd::check_spectrum(&spd::symmetric_eigen(&prop.cov).eigenvalues, spd::EIGEN_FLOOR)?;
        Ok(prop)
    }

    /// As [`Self::new`] but accepts a singular covariance, e.g. for `σ ≡ 0`.
    /// [`Self::law`] still rejects it.
    pub fn new_psd(coeffs: &OuCoefficients, t: f64, quad_steps: usize) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("marginal time must be positive, got {t}")));
        }
        if quad_steps < MIN_QUAD_STEPS {
            return Err(Error::Domain(format!(
                "quad_steps must be at least {MIN_QUAD_STEPS}, got {quad_steps}"
            )));
        }
        let d = coeffs.dim();
        // Simpson's rule wants an even number of intervals.
        let n = quad_steps + quad_steps % 2;
        let h = t / n as f64;
        let stage = |s: f64| Rk4Stage {
            mu: coeffs.mu(s),
            m: coeffs.m(s),
        };
        let diffusion = |s: f64| {
            let sigma = coeffs.sigma(s);
            &sigma * sigma.transpose()
        };

        let mut flow = DMatrix::<f64>::identity(d, d);
        let mut inverse = DMatrix::<f64>::identity(d, d);
        let mut offset = DVector::<f64>::zeros(d);
        let mut integral = DMatrix::<f64>::zeros(d, d);
        let integrand = |inv: &DMatrix<f64>, s: f64| inv * diffusion(s) * inv.transpose();

        let mut left = stage(0.0);
        integral += integrand(&inverse, 0.0);
        for k in 0..n {
            let s = k as f64 * h;
            let mid = stage(s + 0.5 * h);
            let right = stage(s + h);

            // Φ' = M Φ
            let k1 = &left.m * &flow;
            let k2 = &mid.m * (&flow + &k1 * (0.5 * h));
            let k3 = &mid.m * (&flow + &k2 * (0.5 * h));
            let k4 = &right.m * (&flow + &k3 * h);
            flow += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);

            // Ψ' = -Ψ M, Ψ = Φ⁻¹
            let k1 = -(&inverse * &left.m);
            let k2 = -((&inverse + &k1 * (0.5 * h)) * &mid.m);
            let k3 = -((&inverse + &k2 * (0.5 * h)) * &mid.m);
            let k4 = -((&inverse + &k3 * h) * &right.m);
            inverse += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);

            // c' = μ + M c, c(0) = 0
            let k1 = &left.mu + &left.m * &offset;
            let k2 = &mid.mu + &mid.m * (&offset + &k1 * (0.5 * h));
            let k3 = &mid.mu + &mid.m * (&offset + &k2 * (0.5 * h));
            let k4 = &right.mu + &right.m * (&offset + &k3 * h);
            offset += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);

            let weight = if k + 1 == n {
                1.0
            } else if (k + 1) % 2 == 1 {
                4.0
            } else {
                2.0
            };
            integral += integrand(&inverse, s + h) * weight;
            left = right;
        }
        integral *= h / 3.0;
        let cov = spd::symmetrize(&(&flow * integral * flow.transpose()));
        spd::check_finite(&cov, "marginal covariance")?;
        Ok(Self { t, flow, offset, cov })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// State-transition matrix `Φ(t)`.
    pub fn flow(&self) -> &DMatrix<f64> {
        &self.flow
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn mean(&self, x0: &DVector<f64>) -> DVector<f64> {
        &self.flow * x0 + &self.offset
    }

    pub fn law(&self, x0: &DVector<f64>) -> Result<GaussianMeasure> {
        check_dim(self.flow.ncols(), x0.len(), "initial state")?;
        GaussianMeasure::new(self.mean(x0), self.cov.clone())
    }
}

/// Exact Gaussian marginal of `X_t^{x0}`.
pub fn exact_marginal(coeffs: &OuCoefficients, x0: &DVector<f64>, t: f64, quad_steps: usize) -> Result<MarginalLaw> {
    check_dim(coeffs.dim(), x0.len(), "initial state")?;
    let law = MarginalPropagator::new(coeffs, t, quad_steps)?.law(x0)?;
    Ok(MarginalLaw {
        law,
        t,
        x0: x0.iter().copied().collect(),
    })
}

/// Terminal states of `n_paths` Euler–Maruyama paths on `n_steps` uniform
/// steps over `[0, t]`, one row per path. Path `i` draws its increments
/// from the stream keyed by `(seed, i)`.
pub fn euler_maruyama_paths(
    coeffs: &OuCoefficients,
    x0: &DVector<f64>,
    t: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let d = coeffs.dim();
    check_dim(d, x0.len(), "initial state")?;
    if n_steps == 0 || n_paths == 0 {
        return Err(Error::Domain("n_steps and n_paths must be positive".into()));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!(
            "horizon must be finite and non-negative, got {t}"
        )));
    }
    let h = t / n_steps as f64;
    let sqrt_h = h.sqrt();
    // Coefficients on the left end of each step, flattened.
    let mut mu = vec![0.0; n_steps * d];
    let mut m = vec![0.0; n_steps * d * d];
    let mut sigma = vec![0.0; n_steps * d * d];
    for k in 0..n_steps {
        coeffs.eval_flat(
            k as f64 * h,
            &mut mu[k * d..(k + 1) * d],
            &mut m[k * d * d..(k + 1) * d * d],
            &mut sigma[k * d * d..(k + 1) * d * d],
        );
    }
    let start: Vec<f64> = x0.iter().copied().collect();

    let mut out = vec![0.0; n_paths * d];
    out.par_chunks_mut(d).enumerate().for_each(|(path, row)| {
        let mut rng = rng::keyed(seed, path as u64);
        let mut x = start.clone();
        let mut next = vec![0.0; d];
        let mut z = vec![0.0; d];
        for k in 0..n_steps {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            let mk = &m[k * d * d..(k + 1) * d * d];
            let sk = &sigma[k * d * d..(k + 1) * d * d];
            for i in 0..d {
                let mut drift = mu[k * d + i];
                let mut shock = 0.0;
                for j in 0..d {
                    drift += mk[i * d + j] * x[j];
                    shock += sk[i * d + j] * z[j];
                }
                next[i] = x[i] + drift * h + shock * sqrt_h;
            }
            std::mem::swap(&mut x, &mut next);
        }
        row.copy_from_slice(&x);
    });
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("Euler-Maruyama paths overflowed".into()));
    }
    Ok(DMatrix::from_row_slice(n_paths, d, &out))
}

/// Column means and (unbiased) covariance of the rows of `samples`.
pub fn sample_moments(samples: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = samples.nrows() as f64;
    let mean = samples.row_mean().transpose();
    let mut centered = samples.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n - 1.0).max(1.0);
    (mean, cov)
}
