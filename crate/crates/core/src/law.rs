use nalgebra::DVector;

use crate::coefficients::OuCoefficients;
use crate::error::Result;
use crate::gaussian::GaussianMeasure;
use crate::ou::{MarginalPropagator, DEFAULT_QUAD_STEPS};

/// A map `(x, t) ↦ N(μ, Σ)`: either a trained network or the exact
/// marginal of the dynamics.
pub trait ConditionalLaw {
    fn dim(&self) -> usize;
    fn law(&self, x: &DVector<f64>, t: f64) -> Result<GaussianMeasure>;
}

/// The exact marginal law of the OU dynamics.
#[derive(Debug, Clone)]
pub struct ExactLaw {
    pub coeffs: OuCoefficients,
    pub quad_steps: usize,
}

impl ExactLaw {
    pub fn new(coeffs: OuCoefficients) -> Self {
        Self {
            coeffs,
            quad_steps: DEFAULT_QUAD_STEPS,
        }
    }
}

impl ConditionalLaw for ExactLaw {
    fn dim(&self) -> usize {
        self.coeffs.dim()
    }

    fn law(&self, x: &DVector<f64>, t: f64) -> Result<GaussianMeasure> {
        MarginalPropagator::new(&self.coeffs, t, self.quad_steps)?.law(x)
    }
}

impl<L: ConditionalLaw + ?Sized> ConditionalLaw for &L {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn law(&self, x: &DVector<f64>, t: f64) -> Result<GaussianMeasure> {
        (**self).law(x, t)
    }
}
