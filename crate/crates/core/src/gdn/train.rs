//! Minibatch gradient descent with momentum on the chart-coordinate MSE,
//! monitored by the held-out maximum `W2` error against the exact law.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::network::{Activation, GdnGrad, GdnParams, Tape, TrainingPair};
use crate::dataset::{exact_laws, GridSpec};
use crate::error::{Error, Result};
use crate::gaussian::{w2_distance, GaussianMeasure};
use crate::rng;
use crate::scenario::Scenario;

/// Surrogate loss above which training is declared diverged.
pub const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Number of affine maps `J`.
    pub depth: usize,
    pub width: usize,
    pub activation: Activation,
    /// Training points in `K` and times in `[δ, T]`.
    pub n_x: usize,
    pub n_t: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial rate, annealed by a half cosine down to
    /// `learning_rate · final_lr_fraction`.
    pub learning_rate: f64,
    pub final_lr_fraction: f64,
    pub momentum: f64,
    /// Stop after this many epochs without a new best held-out error.
    pub patience: usize,
    pub heldout: GridSpec,
    /// Overrides the scenario seed when set.
    pub seed: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            depth: 4,
            width: 64,
            activation: Activation::Tanh,
            n_x: 64,
            n_t: 16,
            epochs: 1500,
            batch_size: 16,
            learning_rate: 0.02,
            final_lr_fraction: 0.01,
            momentum: 0.9,
            patience: 200,
            heldout: GridSpec {
                x_per_axis: 5,
                t_points: 5,
            },
            seed: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("training.depth", self.depth),
            ("training.n_x", self.n_x),
            ("training.n_t", self.n_t),
            ("training.epochs", self.epochs),
            ("training.batch_size", self.batch_size),
            ("training.heldout.x_per_axis", self.heldout.x_per_axis),
            ("training.heldout.t_points", self.heldout.t_points),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if self.depth > 1 && self.width == 0 {
            return Err(Error::config("training.width", "must be positive"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config("training.learning_rate", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.final_lr_fraction) {
            return Err(Error::config("training.final_lr_fraction", "must be in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("training.momentum", "must be in [0, 1)"));
        }
        Ok(())
    }

    fn rate(&self, epoch: usize) -> f64 {
        let progress = (epoch - 1) as f64 / (self.epochs.max(2) - 1) as f64;
        let floor = self.learning_rate * self.final_lr_fraction;
        floor + 0.5 * (self.learning_rate - floor) * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub surrogate_loss: f64,
    pub heldout_max_w2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters are returned.
    pub best_epoch: usize,
    pub heldout_max_w2: f64,
    pub stopped_early: bool,
}

/// Held-out grid with precomputed exact laws.
pub struct Heldout {
    points: Vec<(Vec<f64>, f64)>,
    laws: Vec<GaussianMeasure>,
}

impl Heldout {
    pub fn new(scenario: &Scenario, grid: &GridSpec) -> Result<Self> {
        let coeffs = scenario.validate()?;
        let points = grid.points(scenario);
        let laws = exact_laws(&coeffs, &points, scenario.quad_steps)?;
        Ok(Self { points, laws })
    }

    pub fn max_w2(&self, params: &GdnParams) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for ((x, t), exact) in self.points.iter().zip(&self.laws) {
            worst = worst.max(w2_distance(&params.forward(x, *t)?, exact)?);
        }
        Ok(worst)
    }
}

/// Fits a network to `train_set`. Deterministic given the seed.
pub fn train(scenario: &Scenario, train_set: &[TrainingPair], cfg: &TrainConfig) -> Result<(GdnParams, TrainReport)> {
    if train_set.is_empty() {
        return Err(Error::Domain("empty training set".into()));
    }
    cfg.validate()?;
    let seed = cfg.seed.unwrap_or(scenario.seed);
    let d = scenario.dimension;
    let mut params = GdnParams::with_architecture(d, cfg.width, cfg.depth, cfg.activation, seed)?;
    // Start the output layer at the mean target.
    let last = params.biases.len() - 1;
    for pair in train_set {
        for (b, v) in params.biases[last].iter_mut().zip(pair.target.to_flat()) {
            *b += v / train_set.len() as f64;
        }
    }
    let inputs: Vec<Vec<f64>> = train_set.iter().map(TrainingPair::input).collect();
    let targets: Vec<Vec<f64>> = train_set.iter().map(|p| p.target.to_flat()).collect();
    let heldout = Heldout::new(scenario, &cfg.heldout)?;

    let mut shuffle = rng::keyed(seed, 0x5eed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut velocity = GdnGrad::zeros_like(&params);
    let mut grad = GdnGrad::zeros_like(&params);
    let mut tape = Tape::new(&params);

    let mut records = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, params.clone(), 0usize);
    let mut stale = 0;
    let mut stopped_early = false;
    for epoch in 1..=cfg.epochs {
        let rate = cfg.rate(epoch);
        order.shuffle(&mut shuffle);
        for batch in order.chunks(cfg.batch_size) {
            grad.weights
                .iter_mut()
                .chain(grad.biases.iter_mut())
                .flatten()
                .for_each(|g| *g = 0.0);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                params.backprop(&inputs[i], &targets[i], scale, &mut tape, &mut grad);
            }
            for (v, g) in velocity
                .weights
                .iter_mut()
                .chain(velocity.biases.iter_mut())
                .flatten()
                .zip(grad.weights.iter().chain(&grad.biases).flatten())
            {
                *v = cfg.momentum * *v - rate * g;
            }
            params.add_scaled(&velocity, 1.0);
        }

        let loss = params.loss(train_set)?;
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(Error::TrainingDiverged { epoch, loss });
        }
        let heldout_max_w2 = match heldout.max_w2(&params) {
            Ok(v) => v,
            Err(e) if e.is_numeric() => return Err(Error::TrainingDiverged { epoch, loss }),
            Err(e) => return Err(e),
        };
        records.push(EpochRecord {
            epoch,
            surrogate_loss: loss,
            heldout_max_w2,
        });
        if heldout_max_w2 < best.0 {
            best = (heldout_max_w2, params.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (heldout_max_w2, params, best_epoch) = best;
    Ok((
        params,
        TrainReport {
            records,
            best_epoch,
            heldout_max_w2,
            stopped_early,
        },
    ))
}
