//! A feedforward network on `(x, t)` whose final affine output is read as
//! chart coordinates and decoded into a Gaussian measure.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chart::{chart_decode, chart_len, ChartCoords};
use crate::error::{check_dim, Error, Result};
use crate::gaussian::GaussianMeasure;
use crate::law::ConditionalLaw;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Sigmoid,
    Softplus,
    /// Not smooth; offered for comparison only.
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Softplus => {
                if z > 30.0 {
                    z
                } else {
                    z.exp().ln_1p()
                }
            }
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative at `z`, given `a = apply(z)`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Softplus => 1.0 / (1.0 + (-z).exp()),
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Softplus => "softplus",
            Activation::Relu => "relu",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "softplus" => Ok(Activation::Softplus),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::config("activation", format!("unknown activation {other:?}"))),
        }
    }
}

/// Hidden width that suffices for a fixed-time network on `N_d`:
/// `d(6 + 2d + d²)/2`.
pub const fn fixed_time_width(d: usize) -> usize {
    d * (6 + 2 * d + d * d) / 2
}

/// Weights and biases of a network with `layer_dims = [1+D, d_1, …, d_{J-1}, D + D(D+1)/2]`.
/// `weights[k]` maps layer `k` to layer `k+1` and is stored row-major
/// (`layer_dims[k+1]` rows, `layer_dims[k]` columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdnParams {
    pub layer_dims: Vec<usize>,
    pub width: usize,
    pub activation: Activation,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Gradient with the same layout as [`GdnParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct GdnGrad {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl GdnGrad {
    pub fn zeros_like(p: &GdnParams) -> Self {
        Self {
            weights: p.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: p.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().flatten().chain(self.biases.iter().flatten())
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// A regression example: input `(x, t)` and target chart coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub x: Vec<f64>,
    pub t: f64,
    pub target: ChartCoords,
}

impl TrainingPair {
    pub(crate) fn input(&self) -> Vec<f64> {
        let mut v = self.x.clone();
        v.push(self.t);
        v
    }
}

/// Per-layer buffers for one forward/backward pass.
pub(crate) struct Tape {
    /// `acts[0]` is the input; `acts[k]` the output of layer `k`.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of every layer.
    pre: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
}

impl Tape {
    pub(crate) fn new(p: &GdnParams) -> Self {
        Self {
            acts: p.layer_dims.iter().map(|&n| vec![0.0; n]).collect(),
            pre: p.layer_dims.iter().map(|&n| vec![0.0; n]).collect(),
            delta: p.layer_dims.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub(crate) fn output(&self) -> &[f64] {
        self.acts.last().expect("at least two layers")
    }
}

impl GdnParams {
    /// All-zero parameters; the network then outputs `N(0, I)` everywhere.
    pub fn zeros(layer_dims: Vec<usize>, width: usize, activation: Activation) -> Result<Self> {
        let weights = layer_dims.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = layer_dims[1..].iter().map(|&n| vec![0.0; n]).collect();
        let p = Self {
            layer_dims,
            width,
            activation,
            weights,
            biases,
        };
        p.validate()?;
        Ok(p)
    }

    /// Fan-in scaled uniform initialization: weights `U(-√(3/fan_in), √(3/fan_in))`, zero biases.
    pub fn init(layer_dims: Vec<usize>, width: usize, activation: Activation, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(layer_dims, width, activation)?;
        let mut r = rng::keyed(seed, 0x1417);
        for (k, w) in p.weights.iter_mut().enumerate() {
            let bound = (3.0 / p.layer_dims[k] as f64).sqrt();
            for v in w.iter_mut() {
                *v = r.random_range(-bound..bound);
            }
        }
        Ok(p)
    }

    /// `depth` affine maps; every hidden layer has `width` units.
    pub fn with_architecture(d: usize, width: usize, depth: usize, activation: Activation, seed: u64) -> Result<Self> {
        if depth == 0 {
            return Err(Error::config("depth", "must be at least 1"));
        }
        if width == 0 && depth > 1 {
            return Err(Error::config("width", "must be at least 1"));
        }
        let mut dims = vec![1 + d];
        dims.extend(std::iter::repeat_n(width, depth - 1));
        dims.push(chart_len(d));
        Self::init(dims, width, activation, seed)
    }

    /// Network of width `d(6 + 2d + d²)/2`, the width that suffices when `t` is fixed.
    pub fn fixed_time(d: usize, depth: usize, activation: Activation, seed: u64) -> Result<Self> {
        Self::with_architecture(d, fixed_time_width(d), depth, activation, seed)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = &self.layer_dims;
        if dims.len() < 2 || dims[0] < 2 {
            return Err(Error::config(
                "layer_dims",
                "need an input of size 1+D and an output layer",
            ));
        }
        let d = dims[0] - 1;
        check_dim(chart_len(d), *dims.last().unwrap(), "network output size")?;
        if let Some(&h) = dims[1..dims.len() - 1].iter().find(|&&h| h > self.width || h == 0) {
            return Err(Error::config(
                "layer_dims",
                format!("hidden size {h} is zero or exceeds the declared width {}", self.width),
            ));
        }
        check_dim(dims.len() - 1, self.weights.len(), "number of weight matrices")?;
        check_dim(dims.len() - 1, self.biases.len(), "number of bias vectors")?;
        for k in 0..dims.len() - 1 {
            check_dim(dims[k] * dims[k + 1], self.weights[k].len(), "weight matrix size")?;
            check_dim(dims[k + 1], self.biases[k].len(), "bias size")?;
        }
        if self
            .weights
            .iter()
            .chain(&self.biases)
            .flatten()
            .any(|v| !v.is_finite())
        {
            return Err(Error::Numeric("network parameters are not finite".into()));
        }
        Ok(())
    }

    /// Gaussian dimension `D`.
    pub fn state_dim(&self) -> usize {
        self.layer_dims[0] - 1
    }

    /// Number of affine maps `J`.
    pub fn depth(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    pub(crate) fn forward_tape(&self, input: &[f64], tape: &mut Tape) {
        let layers = self.depth();
        tape.acts[0].copy_from_slice(input);
        for k in 0..layers {
            let (n_in, n_out) = (self.layer_dims[k], self.layer_dims[k + 1]);
            let w = &self.weights[k];
            let (before, after) = tape.acts.split_at_mut(k + 1);
            let a_in = &before[k];
            let a_out = &mut after[0];
            let z = &mut tape.pre[k + 1];
            for r in 0..n_out {
                let row = &w[r * n_in..(r + 1) * n_in];
                let s: f64 = row.iter().zip(a_in.iter()).map(|(p, q)| p * q).sum();
                z[r] = s + self.biases[k][r];
            }
            if k + 1 < layers {
                for r in 0..n_out {
                    a_out[r] = self.activation.apply(z[r]);
                }
            } else {
                a_out.copy_from_slice(z);
            }
        }
    }

    /// Raw output `A^{(J)} x^{(J-1)} + b^{(J)}` (chart coordinates, flat).
    pub fn forward_raw(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        check_dim(self.state_dim(), x.len(), "network state input")?;
        let mut input = x.to_vec();
        input.push(t);
        let mut tape = Tape::new(self);
        self.forward_tape(&input, &mut tape);
        Ok(tape.output().to_vec())
    }

    /// The network's Gaussian prediction at `(x, t)`.
    pub fn forward(&self, x: &[f64], t: f64) -> Result<GaussianMeasure> {
        let raw = self.forward_raw(x, t)?;
        chart_decode(&ChartCoords::from_flat(&raw, self.state_dim())?)
    }

    /// Accumulates `scale · ∂‖y − target‖²/∂θ` for one example into `grad`
    /// and returns `‖y − target‖²`.
    pub(crate) fn backprop(
        &self,
        input: &[f64],
        target: &[f64],
        scale: f64,
        tape: &mut Tape,
        grad: &mut GdnGrad,
    ) -> f64 {
        self.forward_tape(input, tape);
        let layers = self.depth();
        let mut sq = 0.0;
        {
            let out = &tape.acts[layers];
            let delta = &mut tape.delta[layers];
            for i in 0..out.len() {
                let r = out[i] - target[i];
                sq += r * r;
                delta[i] = 2.0 * scale * r;
            }
        }
        for k in (0..layers).rev() {
            let (n_in, n_out) = (self.layer_dims[k], self.layer_dims[k + 1]);
            let w = &self.weights[k];
            let gw = &mut grad.weights[k];
            let gb = &mut grad.biases[k];
            let (lower, upper) = tape.delta.split_at_mut(k + 1);
            let delta_out = &upper[0];
            let a_in = &tape.acts[k];
            for r in 0..n_out {
                let dr = delta_out[r];
                gb[r] += dr;
                let row = &mut gw[r * n_in..(r + 1) * n_in];
                for (g, a) in row.iter_mut().zip(a_in.iter()) {
                    *g += dr * a;
                }
            }
            if k > 0 {
                let delta_in = &mut lower[k];
                delta_in.iter_mut().for_each(|v| *v = 0.0);
                for r in 0..n_out {
                    let dr = delta_out[r];
                    let row = &w[r * n_in..(r + 1) * n_in];
                    for (di, wv) in delta_in.iter_mut().zip(row) {
                        *di += wv * dr;
                    }
                }
                let z = &tape.pre[k];
                for (c, di) in delta_in.iter_mut().enumerate() {
                    *di *= self.activation.derivative(z[c], a_in[c]);
                }
            }
        }
        sq
    }

    /// Mean chart-coordinate squared error over `batch`.
    pub fn loss(&self, batch: &[TrainingPair]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Domain("empty batch".into()));
        }
        let mut tape = Tape::new(self);
        let mut total = 0.0;
        for pair in batch {
            check_dim(self.state_dim(), pair.x.len(), "training input")?;
            self.forward_tape(&pair.input(), &mut tape);
            let target = pair.target.to_flat();
            total += tape
                .output()
                .iter()
                .zip(&target)
                .map(|(y, t)| (y - t) * (y - t))
                .sum::<f64>();
        }
        Ok(total / batch.len() as f64)
    }

    /// In-place `θ ← θ + step · direction`.
    pub fn add_scaled(&mut self, direction: &GdnGrad, step: f64) {
        for (w, g) in self.weights.iter_mut().zip(&direction.weights) {
            w.iter_mut().zip(g).for_each(|(p, d)| *p += step * d);
        }
        for (b, g) in self.biases.iter_mut().zip(&direction.biases) {
            b.iter_mut().zip(g).for_each(|(p, d)| *p += step * d);
        }
    }
}

/// Loss and its gradient for `L = mean_batch ‖raw(x,t) − target‖²`, by
/// reverse accumulation through the layer stack.
pub fn gdn_gradient(params: &GdnParams, batch: &[TrainingPair]) -> Result<(f64, GdnGrad)> {
    if batch.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    let d = params.state_dim();
    let scale = 1.0 / batch.len() as f64;
    let mut grad = GdnGrad::zeros_like(params);
    let mut tape = Tape::new(params);
    let mut loss = 0.0;
    for pair in batch {
        check_dim(d, pair.x.len(), "training input")?;
        check_dim(d, pair.target.dim(), "training target")?;
        loss += params.backprop(&pair.input(), &pair.target.to_flat(), scale, &mut tape, &mut grad);
    }
    Ok((loss * scale, grad))
}

impl ConditionalLaw for GdnParams {
    fn dim(&self) -> usize {
        self.state_dim()
    }

    fn law(&self, x: &DVector<f64>, t: f64) -> Result<GaussianMeasure> {
        self.forward(x.as_slice(), t)
    }
}
