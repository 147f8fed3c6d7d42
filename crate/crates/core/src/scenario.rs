//! Scenario files. Training, payoff and portfolio sections are optional.

use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientSpec, OuCoefficients};
use crate::error::{Error, Result};
use crate::gdn::TrainConfig;
use crate::market::ClipConfig;
use crate::ou::DEFAULT_QUAD_STEPS;
use crate::portfolio::PortfolioQuery;
use crate::pricing::PayoffSpec;

fn default_quad_steps() -> usize {
    DEFAULT_QUAD_STEPS
}

fn default_output_dir() -> String {
    "out".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub dimension: usize,
    pub clip_threshold: f64,
    /// Box `K`, one `[lo, hi]` per coordinate.
    pub domain: Vec<[f64; 2]>,
    pub delta: f64,
    pub horizon: f64,
    pub coefficients: CoefficientSpec,
    pub seed: u64,
    #[serde(default = "default_quad_steps")]
    pub quad_steps: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payoff: Option<PayoffSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub portfolio: Option<PortfolioQuery>,
}

impl Scenario {
    /// Parses and validates a scenario document.
    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| Error::config("scenario", e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Checks every invariant and returns the compiled coefficients.
    pub fn validate(&self) -> Result<OuCoefficients> {
        self.check(true)
    }

    /// As [`Self::validate`] but allows a degenerate volatility, which is
    /// enough to simulate paths.
    pub fn validate_dynamics(&self) -> Result<OuCoefficients> {
        self.check(false)
    }

    fn check(&self, nondegenerate: bool) -> Result<OuCoefficients> {
        let d = self.dimension;
        if d == 0 {
            return Err(Error::config("dimension", "must be at least 1"));
        }
        ClipConfig::new(self.clip_threshold, d)?;
        if self.domain.len() != d {
            return Err(Error::config(
                "domain",
                format!("expected {d} intervals, got {}", self.domain.len()),
            ));
        }
        for (i, [lo, hi]) in self.domain.iter().enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::config(
                    format!("domain[{i}]"),
                    format!("need lo < hi, got [{lo}, {hi}]"),
                ));
            }
        }
        if !(self.delta > 0.0) {
            return Err(Error::config("delta", format!("must be positive, got {}", self.delta)));
        }
        if !(self.horizon > self.delta) || !self.horizon.is_finite() {
            return Err(Error::config(
                "horizon",
                format!("must be finite and exceed delta, got {}", self.horizon),
            ));
        }
        if self.quad_steps < crate::ou::MIN_QUAD_STEPS {
            return Err(Error::config(
                "quad_steps",
                format!("must be at least {}", crate::ou::MIN_QUAD_STEPS),
            ));
        }
        let coeffs = OuCoefficients::from_spec(&self.coefficients, d)?;
        if nondegenerate {
            coeffs.validate(self.horizon, 256)?;
        } else {
            coeffs.validate_dynamics(self.horizon, 256)?;
        }
        self.training.validate()?;
        if let Some(p) = &self.payoff {
            crate::pricing::Payoff::new(p.clone(), &self.clip()?)?;
        }
        Ok(coeffs)
    }

    pub fn clip(&self) -> Result<ClipConfig> {
        ClipConfig::new(self.clip_threshold, self.dimension)
    }

    pub fn domain_center(&self) -> Vec<f64> {
        self.domain.iter().map(|[lo, hi]| 0.5 * (lo + hi)).collect()
    }

    pub fn contains(&self, x: &[f64], t: f64) -> bool {
        x.len() == self.dimension
            && x.iter().zip(&self.domain).all(|(v, [lo, hi])| (lo..=hi).contains(&v))
            && (self.delta..=self.horizon).contains(&t)
    }

    /// Canonical JSON used for hashing: fields in declaration order,
    /// defaults filled in.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("scenario serializes")
    }
}
