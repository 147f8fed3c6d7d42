//! Gaussian conditional laws of generalized Ornstein–Uhlenbeck log-price
//! models in the Bures–Wasserstein metric, with pricing and portfolio
//! computations on top.

// NaN-rejecting guards are written as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chart;
pub mod coefficients;
pub mod dataset;
pub mod error;
pub mod gaussian;
pub mod gdn;
pub mod law;
pub mod market;
pub mod ou;
pub mod portfolio;
pub mod pricing;
pub mod rng;
pub mod scenario;
pub mod spd;
pub mod transport;

pub use chart::{chart_decode, chart_encode, ChartCoords};
pub use coefficients::{CoefficientSpec, OuCoefficients};
pub use dataset::{build_training_set, GridSpec};
pub use error::{Error, Result};
pub use gaussian::{w2_distance, w2_squared, GaussianMeasure};
pub use gdn::{evaluate_rcd, train, Activation, EvalReport, GdnParams, TrainConfig, TrainReport, TrainingPair};
pub use law::{ConditionalLaw, ExactLaw};
pub use market::{clipped_exp, pushforward_sample, ClipConfig};
pub use ou::{euler_maruyama_paths, exact_marginal, MarginalLaw, MarginalPropagator};
pub use portfolio::{efficient_portfolio, portfolio_from_model, PortfolioInput, PortfolioQuery};
pub use pricing::{price_claim, Payoff, PayoffKind, PayoffSpec, PriceEstimate};
pub use scenario::Scenario;
pub use transport::{empirical_w2, EmpiricalW2, W2Method};

/// Version string embedded in every artifact.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
