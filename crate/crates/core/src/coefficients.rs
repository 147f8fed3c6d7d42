//! Time-dependent SDE coefficients `μ_t`, `M_t`, `σ_t`.
//!
//! Each coefficient is either a constant or a natural cubic spline through
//! breakpoints, evaluated componentwise. Outside the breakpoint range the
//! end values are held.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{matrix_to_rows, rows_to_matrix};

/// Vector-valued coefficient as written in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum VectorSpec {
    Constant {
        constant: Vec<f64>,
    },
    Breakpoints {
        breakpoints: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

/// Matrix-valued coefficient; matrices are row-major nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum MatrixSpec {
    Constant {
        constant: Vec<Vec<f64>>,
    },
    Breakpoints {
        breakpoints: Vec<f64>,
        values: Vec<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub mu: VectorSpec,
    pub m: MatrixSpec,
    pub sigma: MatrixSpec,
}

impl CoefficientSpec {
    /// Constant coefficients.
    pub fn constant(mu: &DVector<f64>, m: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Self {
        Self {
            mu: VectorSpec::Constant {
                constant: mu.iter().copied().collect(),
            },
            m: MatrixSpec::Constant {
                constant: matrix_to_rows(m),
            },
            sigma: MatrixSpec::Constant {
                constant: matrix_to_rows(sigma),
            },
        }
    }
}

/// A flattened, componentwise natural cubic spline (or a constant).
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    knots: Vec<f64>,
    /// `values[k]` is the flattened value at `knots[k]`.
    values: Vec<Vec<f64>>,
    /// Second derivatives at the knots, same layout as `values`.
    second: Vec<Vec<f64>>,
    width: usize,
}

impl Curve {
    pub fn constant(value: Vec<f64>) -> Self {
        let width = value.len();
        Self {
            knots: vec![0.0],
            values: vec![value],
            second: vec![vec![0.0; width]],
            width,
        }
    }

    pub fn spline(knots: Vec<f64>, values: Vec<Vec<f64>>, field: &str) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::config(field, "breakpoints must be non-empty"));
        }
        if knots.len() != values.len() {
            return Err(Error::config(
                field,
                format!("{} breakpoints but {} values", knots.len(), values.len()),
            ));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config(field, "breakpoints must be strictly increasing"));
        }
        if knots.iter().chain(values.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::config(field, "non-finite value"));
        }
        let width = values[0].len();
        if values.iter().any(|v| v.len() != width) {
            return Err(Error::config(field, "values have inconsistent shapes"));
        }
        let second = natural_second_derivatives(&knots, &values, width);
        Ok(Self {
            knots,
            values,
            second,
            width,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.width);
        let n = self.knots.len();
        if n == 1 || t <= self.knots[0] {
            out.copy_from_slice(&self.values[0]);
            return;
        }
        if t >= self.knots[n - 1] {
            out.copy_from_slice(&self.values[n - 1]);
            return;
        }
        let k = self.knots.partition_point(|&x| x <= t) - 1;
        let (x0, x1) = (self.knots[k], self.knots[k + 1]);
        let h = x1 - x0;
        let a = (x1 - t) / h;
        let b = (t - x0) / h;
        let c = (a * a * a - a) * h * h / 6.0;
        let d = (b * b * b - b) * h * h / 6.0;
        for (i, o) in out.iter_mut().enumerate() {
            *o = a * self.values[k][i] + b * self.values[k + 1][i] + c * self.second[k][i] + d * self.second[k + 1][i];
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.width];
        self.eval_into(t, &mut out);
        out
    }

    pub fn is_constant(&self) -> bool {
        self.knots.len() == 1
    }
}

/// Solves the tridiagonal system for a natural spline, per component.
fn natural_second_derivatives(knots: &[f64], values: &[Vec<f64>], width: usize) -> Vec<Vec<f64>> {
    let n = knots.len();
    let mut second = vec![vec![0.0; width]; n];
    if n < 3 {
        return second;
    }
    for comp in 0..width {
        // Thomas algorithm on interior knots 1..n-1.
        let m = n - 2;
        let mut diag = vec![0.0; m];
        let mut upper = vec![0.0; m];
        let mut rhs = vec![0.0; m];
        for i in 1..n - 1 {
            let h0 = knots[i] - knots[i - 1];
            let h1 = knots[i + 1] - knots[i];
            diag[i - 1] = 2.0 * (h0 + h1);
            upper[i - 1] = h1;
            rhs[i - 1] =
                6.0 * ((values[i + 1][comp] - values[i][comp]) / h1 - (values[i][comp] - values[i - 1][comp]) / h0);
        }
        for i in 1..m {
            let lower = knots[i + 1] - knots[i];
            let w = lower / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        let mut sol = vec![0.0; m];
        sol[m - 1] = rhs[m - 1] / diag[m - 1];
        for i in (0..m - 1).rev() {
            sol[i] = (rhs[i] - upper[i] * sol[i + 1]) / diag[i];
        }
        for i in 0..m {
            second[i + 1][comp] = sol[i];
        }
    }
    second
}

fn vector_curve(spec: &VectorSpec, d: usize, field: &str) -> Result<Curve> {
    let check = |v: &Vec<f64>| -> Result<()> {
        if v.len() != d {
            return Err(Error::config(field, format!("expected length {d}, got {}", v.len())));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::config(field, "non-finite value"));
        }
        Ok(())
    };
    match spec {
        VectorSpec::Constant { constant } => {
            check(constant)?;
            Ok(Curve::constant(constant.clone()))
        }
        VectorSpec::Breakpoints { breakpoints, values } => {
            values.iter().try_for_each(check)?;
            Curve::spline(breakpoints.clone(), values.clone(), field)
        }
    }
}

fn flatten_matrix(rows: &[Vec<f64>], d: usize, field: &str) -> Result<Vec<f64>> {
    let m = rows_to_matrix(rows).map_err(|e| Error::config(field, e))?;
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::config(
            field,
            format!("expected {d}x{d} matrix, got {}x{}", m.nrows(), m.ncols()),
        ));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::config(field, "non-finite value"));
    }
    Ok(rows.iter().flatten().copied().collect())
}

fn matrix_curve(spec: &MatrixSpec, d: usize, field: &str) -> Result<Curve> {
    match spec {
        MatrixSpec::Constant { constant } => Ok(Curve::constant(flatten_matrix(constant, d, field)?)),
        MatrixSpec::Breakpoints { breakpoints, values } => {
            let flat = values
                .iter()
                .map(|v| flatten_matrix(v, d, field))
                .collect::<Result<Vec<_>>>()?;
            Curve::spline(breakpoints.clone(), flat, field)
        }
    }
}

/// Evaluable coefficients of `dX = (μ_t + M_t X) dt + σ_t dW`.
/// Matrix curves are flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct OuCoefficients {
    dim: usize,
    mu: Curve,
    m: Curve,
    sigma: Curve,
}

impl OuCoefficients {
    pub fn from_spec(spec: &CoefficientSpec, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::config("dimension", "must be at least 1"));
        }
        Ok(Self {
            dim: d,
            mu: vector_curve(&spec.mu, d, "coefficients.mu")?,
            m: matrix_curve(&spec.m, d, "coefficients.m")?,
            sigma: matrix_curve(&spec.sigma, d, "coefficients.sigma")?,
        })
    }

    pub fn constant(mu: &DVector<f64>, m: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<Self> {
        Self::from_spec(&CoefficientSpec::constant(mu, m, sigma), mu.len())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mu(&self, t: f64) -> DVector<f64> {
        DVector::from_vec(self.mu.eval(t))
    }

    pub fn m(&self, t: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.m.eval(t))
    }

    pub fn sigma(&self, t: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.sigma.eval(t))
    }

    pub(crate) fn eval_flat(&self, t: f64, mu: &mut [f64], m: &mut [f64], sigma: &mut [f64]) {
        self.mu.eval_into(t, mu);
        self.m.eval_into(t, m);
        self.sigma.eval_into(t, sigma);
    }

    pub fn is_constant(&self) -> bool {
        self.mu.is_constant() && self.m.is_constant() && self.sigma.is_constant()
    }

    /// Checks that `σ_t` is symmetric positive definite on `samples + 1`
    /// equally spaced times in `[0, horizon]` and all coefficients are finite.
    pub fn validate(&self, horizon: f64, samples: usize) -> Result<()> {
        self.check(horizon, samples, true)
    }

    /// As [`Self::validate`] but accepts a degenerate `σ_t`, which still
    /// defines the dynamics though not a nonsingular marginal law.
    pub fn validate_dynamics(&self, horizon: f64, samples: usize) -> Result<()> {
        self.check(horizon, samples, false)
    }

    fn check(&self, horizon: f64, samples: usize, nondegenerate: bool) -> Result<()> {
        let samples = samples.max(1);
        for k in 0..=samples {
            let t = horizon * k as f64 / samples as f64;
            let sigma = self.sigma(t);
            if self
                .mu(t)
                .iter()
                .chain(self.m(t).iter())
                .chain(sigma.iter())
                .any(|v| !v.is_finite())
            {
                return Err(Error::config("coefficients", format!("non-finite value at t={t}")));
            }
            if !crate::spd::is_symmetric(&sigma) {
                return Err(Error::config("coefficients.sigma", format!("not symmetric at t={t}")));
            }
            if nondegenerate && sigma.cholesky().is_none() {
                return Err(Error::config(
                    "coefficients.sigma",
                    format!("not positive definite at t={t}"),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn two_breakpoints_interpolate_linearly() {
        let c = Curve::spline(vec![0.0, 2.0], vec![vec![1.0, 0.0], vec![3.0, -4.0]], "x").unwrap();
        assert_eq!(c.eval(1.0), vec![2.0, -2.0]);
        assert_eq!(c.eval(-1.0), vec![1.0, 0.0]);
        assert_eq!(c.eval(5.0), vec![3.0, -4.0]);
    }

    #[test]
    fn natural_spline_reproduces_lines_and_knots() {
        let knots = vec![0.0, 0.3, 0.7, 1.0];
        let line: Vec<Vec<f64>> = knots.iter().map(|t| vec![2.0 * t - 1.0]).collect();
        let c = Curve::spline(knots.clone(), line, "x").unwrap();
        for t in [0.05, 0.5, 0.9] {
            assert_relative_eq!(c.eval(t)[0], 2.0 * t - 1.0, epsilon = 1e-14);
        }
        let bumpy = vec![vec![0.0], vec![1.0], vec![-1.0], vec![0.5]];
        let c = Curve::spline(knots.clone(), bumpy.clone(), "x").unwrap();
        for (t, v) in knots.iter().zip(&bumpy) {
            assert_relative_eq!(c.eval(*t)[0], v[0], epsilon = 1e-14);
        }
    }

    #[test]
    fn json_forms_parse() {
        let spec: CoefficientSpec = serde_json::from_str(
            r#"{"mu": {"constant": [0.1, 0.2]},
                "m": {"breakpoints": [0, 1], "values": [[[0,0],[0,0]], [[-1,0],[0,-1]]]},
                "sigma": {"constant": [[0.3, 0.0], [0.0, 0.2]]}}"#,
        )
        .unwrap();
        let c = OuCoefficients::from_spec(&spec, 2).unwrap();
        assert_relative_eq!(c.m(0.5)[(0, 0)], -0.5);
        assert!(!c.is_constant());
        c.validate(1.0, 16).unwrap();
    }

    #[test]
    fn shape_errors_name_the_field() {
        let spec: CoefficientSpec = serde_json::from_str(
            r#"{"mu": {"constant": [0.1]},
                "m": {"constant": [[0,0],[0,0]]},
                "sigma": {"constant": [[0.3, 0.0], [0.0, 0.2]]}}"#,
        )
        .unwrap();
        match OuCoefficients::from_spec(&spec, 2) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "coefficients.mu"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn indefinite_volatility_is_rejected() {
        let c = OuCoefficients::constant(
            &DVector::zeros(2),
            &DMatrix::zeros(2, 2),
            &DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
        )
        .unwrap();
        assert!(c.validate(1.0, 4).is_err());
    }
}
