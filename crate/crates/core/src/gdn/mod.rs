//! Geometric deep networks: feedforward maps `(x, t) ↦ N(μ, Σ)` read through
//! the global chart, their training and their evaluation.

mod eval;
mod network;
mod train;

pub use eval::{evaluate_rcd, EvalReport, EvalRow, SpotCheck, SpotCheckConfig};
pub use network::{fixed_time_width, gdn_gradient, Activation, GdnGrad, GdnParams, TrainingPair};
pub use train::{train, EpochRecord, Heldout, TrainConfig, TrainReport, DIVERGENCE_LOSS};
