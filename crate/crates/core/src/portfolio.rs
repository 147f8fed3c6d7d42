//! Closed-form mean-variance portfolio under the budget constraint `1̄ᵀw = 1`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::law::ConditionalLaw;
use crate::spd::{self, EIGEN_FLOOR};

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioInput {
    pub gamma: f64,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

/// Portfolio section of a scenario: explicit `mu`/`sigma`, or a model query
/// at `(x, t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortfolioQuery {
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
}

impl PortfolioInput {
    pub fn new(gamma: f64, mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::Domain(format!(
                "gamma must be finite and non-negative, got {gamma}"
            )));
        }
        check_dim(sigma.nrows(), sigma.ncols(), "covariance must be square")?;
        check_dim(sigma.nrows(), mu.len(), "mean vector")?;
        if sigma.nrows() == 0 {
            return Err(Error::Domain("empty portfolio".into()));
        }
        if mu.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("portfolio inputs must be finite".into()));
        }
        if !spd::is_symmetric(&sigma) {
            return Err(Error::Domain("covariance is not symmetric".into()));
        }
        Ok(Self { gamma, mu, sigma })
    }
}

/// `w = Σ⁻¹1̄/(1̄ᵀΣ⁻¹1̄) + γ(Σ⁻¹μ − (1̄ᵀΣ⁻¹μ)/(1̄ᵀΣ⁻¹1̄)·Σ⁻¹1̄)`, the
/// maximizer of `γμᵀw − ½wᵀΣw` subject to `1̄ᵀw = 1`.
pub fn efficient_portfolio(inp: &PortfolioInput) -> Result<DVector<f64>> {
    let d = inp.mu.len();
    let sigma = spd::symmetrize(&inp.sigma);
    spd::check_spectrum(&spd::symmetric_eigen(&sigma).eigenvalues, EIGEN_FLOOR)?;
    let chol = sigma.cholesky().ok_or_else(|| Error::NearSingular {
        eigenvalue: spd::min_eigenvalue(&inp.sigma),
        floor: 0.0,
    })?;
    let ones = DVector::from_element(d, 1.0);
    let a = chol.solve(&ones);
    let sa = a.sum();
    let min_var = &a / sa;
    let mut w = min_var.clone();
    if inp.gamma != 0.0 {
        let b = chol.solve(&inp.mu);
        w += inp.gamma * (&b - (b.sum() / sa) * &a);
    }
    // Remove the rounding drift from the budget along the min-variance
    // direction, which keeps the first-order conditions intact.
    let drift = 1.0 - w.sum();
    w += drift * &min_var;
    Ok(w)
}

/// [`efficient_portfolio`] for the mean and covariance the model predicts
/// at `(x, t)`.
pub fn portfolio_from_model<L: ConditionalLaw>(model: &L, x: &[f64], t: f64, gamma: f64) -> Result<DVector<f64>> {
    check_dim(model.dim(), x.len(), "initial state")?;
    let (mu, sigma) = model.law(&DVector::from_column_slice(x), t)?.into_parts();
    efficient_portfolio(&PortfolioInput::new(gamma, mu, sigma)?)
}
