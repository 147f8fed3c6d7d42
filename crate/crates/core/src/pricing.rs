//! Monte Carlo prices of Lipschitz claims on `ℰ(U)` with a certified bias
//! bound in terms of the model's `W2` error.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::law::ConditionalLaw;
use crate::market::{affine_rows, clipped_exp_into, fill_normals, ClipConfig};
use crate::rng::CHUNK;
use crate::spd;

/// Smallest Monte Carlo sample accepted by [`price_claim`].
pub const MIN_SAMPLES: usize = 1000;

/// Piecewise-linear function of one price, flat outside the knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecewiseLinear {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
}

impl PiecewiseLinear {
    fn validate(&self, field: &str) -> Result<()> {
        if self.knots.is_empty() || self.knots.len() != self.values.len() {
            return Err(Error::config(
                field,
                "knots and values must be non-empty and of equal length",
            ));
        }
        if self.knots.iter().chain(&self.values).any(|v| !v.is_finite()) {
            return Err(Error::config(field, "entries must be finite"));
        }
        if self.knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::config(field, "knots must be strictly increasing"));
        }
        Ok(())
    }

    pub fn eval(&self, s: f64) -> f64 {
        let k = &self.knots;
        let v = &self.values;
        if s <= k[0] {
            return v[0];
        }
        if s >= k[k.len() - 1] {
            return v[v.len() - 1];
        }
        let i = k.partition_point(|&knot| knot <= s) - 1;
        let w = (s - k[i]) / (k[i + 1] - k[i]);
        v[i] + w * (v[i + 1] - v[i])
    }

    pub fn max_slope(&self) -> f64 {
        self.knots
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(k, v)| ((v[1] - v[0]) / (k[1] - k[0])).abs())
            .fold(0.0, f64::max)
    }

    /// Minimum and maximum on `[lo, hi]`.
    fn range_on(&self, lo: f64, hi: f64) -> (f64, f64) {
        let candidates = [lo, hi]
            .into_iter()
            .chain(self.knots.iter().copied().filter(|k| (lo..=hi).contains(k)));
        candidates
            .map(|s| self.eval(s))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PayoffKind {
    /// `max(mean(S) − strike, 0)`.
    CallOnAvg { strike: f64 },
    /// `max(strike − mean(S), 0)`.
    PutOnAvg { strike: f64 },
    /// `weights · S + intercept`.
    BasketLinear {
        weights: Vec<f64>,
        #[serde(default)]
        intercept: f64,
    },
    /// `Σ_i f_i(S_i)` with one piecewise-linear `f_i` per asset.
    CustomTable { tables: Vec<PiecewiseLinear> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffSpec {
    #[serde(flatten)]
    pub kind: PayoffKind,
    /// Declared Lipschitz constant (Euclidean norm on prices). Defaults to
    /// the intrinsic one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lip_const: Option<f64>,
}

/// A validated payoff together with its norm on the reachable price cube.
#[derive(Debug, Clone, PartialEq)]
pub struct Payoff {
    pub spec: PayoffSpec,
    dim: usize,
    lip: f64,
    sup_abs: f64,
    constant: Option<f64>,
}

impl Payoff {
    pub fn new(spec: PayoffSpec, clip: &ClipConfig) -> Result<Self> {
        let d = clip.dimension;
        let (lo, hi) = clip.price_bounds();
        let (intrinsic, min, max) = match &spec.kind {
            PayoffKind::CallOnAvg { strike } | PayoffKind::PutOnAvg { strike } => {
                if !strike.is_finite() {
                    return Err(Error::config("payoff.strike", "must be finite"));
                }
                let (a, b) = match spec.kind {
                    PayoffKind::CallOnAvg { .. } => ((lo - strike).max(0.0), (hi - strike).max(0.0)),
                    _ => ((strike - hi).max(0.0), (strike - lo).max(0.0)),
                };
                let lip = if b > a { 1.0 / (d as f64).sqrt() } else { 0.0 };
                (lip, a, b)
            }
            PayoffKind::BasketLinear { weights, intercept } => {
                if weights.len() != d {
                    return Err(Error::config(
                        "payoff.weights",
                        format!("expected {d} weights, got {}", weights.len()),
                    ));
                }
                if weights.iter().any(|w| !w.is_finite()) || !intercept.is_finite() {
                    return Err(Error::config("payoff.weights", "entries must be finite"));
                }
                let min = intercept + weights.iter().map(|w| (w * lo).min(w * hi)).sum::<f64>();
                let max = intercept + weights.iter().map(|w| (w * lo).max(w * hi)).sum::<f64>();
                (weights.iter().map(|w| w * w).sum::<f64>().sqrt(), min, max)
            }
            PayoffKind::CustomTable { tables } => {
                if tables.len() != d {
                    return Err(Error::config(
                        "payoff.tables",
                        format!("expected {d} tables, got {}", tables.len()),
                    ));
                }
                let (mut min, mut max, mut lip2) = (0.0, 0.0, 0.0);
                for (i, table) in tables.iter().enumerate() {
                    table.validate(&format!("payoff.tables[{i}]"))?;
                    let (a, b) = table.range_on(lo, hi);
                    min += a;
                    max += b;
                    lip2 += table.max_slope().powi(2);
                }
                (lip2.sqrt(), min, max)
            }
        };
        let constant = (max - min == 0.0).then_some(min);
        let lip = match spec.lip_const {
            None => intrinsic,
            Some(l) => {
                if !l.is_finite() || l < 0.0 || (l == 0.0 && constant.is_none()) {
                    return Err(Error::config("payoff.lip_const", format!("must be positive, got {l}")));
                }
                if l < intrinsic * (1.0 - 1e-12) {
                    return Err(Error::config(
                        "payoff.lip_const",
                        format!("declared {l} is below the payoff's own Lipschitz constant {intrinsic}"),
                    ));
                }
                l
            }
        };
        Ok(Self {
            spec,
            dim: d,
            lip,
            sup_abs: min.abs().max(max.abs()),
            constant,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lipschitz(&self) -> f64 {
        self.lip
    }

    /// `sup |V|` over `[e^{-M}, e^{M}]^D`.
    pub fn sup_abs(&self) -> f64 {
        self.sup_abs
    }

    /// `sup |V| + Lip(V)`.
    pub fn lipschitz_norm(&self) -> f64 {
        self.sup_abs + self.lip
    }

    /// The value of a payoff that is constant on the reachable cube.
    pub fn constant_value(&self) -> Option<f64> {
        self.constant
    }

    pub fn eval(&self, s: &[f64]) -> f64 {
        match &self.spec.kind {
            PayoffKind::CallOnAvg { strike } => (s.iter().sum::<f64>() / s.len() as f64 - strike).max(0.0),
            PayoffKind::PutOnAvg { strike } => (strike - s.iter().sum::<f64>() / s.len() as f64).max(0.0),
            PayoffKind::BasketLinear { weights, intercept } => {
                intercept + weights.iter().zip(s).map(|(w, v)| w * v).sum::<f64>()
            }
            PayoffKind::CustomTable { tables } => tables.iter().zip(s).map(|(f, v)| f.eval(*v)).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceEstimate {
    pub price: f64,
    #[serde(rename = "se")]
    pub standard_error: f64,
    #[serde(rename = "bias_bound")]
    pub certified_bias_bound: f64,
    pub n: usize,
    pub seed: u64,
}

#[derive(Clone, Copy)]
struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn merge(self, o: Moments) -> Moments {
        let count = self.count + o.count;
        let delta = o.mean - self.mean;
        Moments {
            count,
            mean: self.mean + delta * o.count / count,
            m2: self.m2 + o.m2 + delta * delta * self.count * o.count / count,
        }
    }
}

/// Mean of `V(ℰ(U))` over `n` draws `U ~ model(x, t)`, its standard error,
/// and the bias bound `(sup|V| + Lip V) · √D e^M · ε`.
///
/// `epsilon` is the model's maximum `W2` error; it may be omitted only for
/// constant payoffs. Normals are drawn exactly as in
/// [`crate::market::standard_normals`], so equal seeds give common random
/// numbers across models.
#[allow(clippy::too_many_arguments)]
pub fn price_claim<L: ConditionalLaw>(
    model: &L,
    x: &[f64],
    t: f64,
    payoff: &Payoff,
    n: usize,
    seed: u64,
    clip: &ClipConfig,
    epsilon: Option<f64>,
) -> Result<PriceEstimate> {
    let d = clip.dimension;
    check_dim(d, payoff.dim(), "payoff dimension")?;
    check_dim(d, model.dim(), "model dimension")?;
    check_dim(d, x.len(), "initial state")?;
    if n < MIN_SAMPLES {
        return Err(Error::Domain(format!("need at least {MIN_SAMPLES} samples, got {n}")));
    }
    if let Some(c) = payoff.constant_value() {
        return Ok(PriceEstimate {
            price: c,
            standard_error: 0.0,
            certified_bias_bound: 0.0,
            n,
            seed,
        });
    }
    let eps = epsilon.ok_or_else(|| {
        Error::Precondition("the bias bound needs the model's W2 error from an evaluation report".into())
    })?;
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::Domain(format!(
            "W2 error must be finite and non-negative, got {eps}"
        )));
    }

    let law = model.law(&DVector::from_column_slice(x), t)?;
    let root = spd::spd_sqrt(law.cov())?;
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let rows = CHUNK.min(n - c * CHUNK);
            let mut z = vec![0.0; rows * d];
            fill_normals(seed, c, &mut z);
            let logs = affine_rows(&law, &root, &z);
            let mut prices = vec![0.0; d];
            let mut m = Moments {
                count: 0.0,
                mean: 0.0,
                m2: 0.0,
            };
            for row in logs.chunks_exact(d) {
                clipped_exp_into(row, clip.threshold, &mut prices);
                let v = payoff.eval(&prices);
                m.count += 1.0;
                let delta = v - m.mean;
                m.mean += delta / m.count;
                m.m2 += delta * (v - m.mean);
            }
            m
        })
        .collect();
    let total = parts.into_iter().reduce(Moments::merge).expect("at least one chunk");
    let var = total.m2 / (total.count - 1.0);
    Ok(PriceEstimate {
        price: total.mean,
        standard_error: (var / total.count).sqrt(),
        certified_bias_bound: payoff.lipschitz_norm() * clip.lipschitz() * eps,
        n,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::GaussianMeasure;

    struct Fixed(GaussianMeasure);

    impl ConditionalLaw for Fixed {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn law(&self, _: &DVector<f64>, _: f64) -> Result<GaussianMeasure> {
            Ok(self.0.clone())
        }
    }

    fn spec(kind: PayoffKind) -> PayoffSpec {
        PayoffSpec { kind, lip_const: None }
    }

    #[test]
    fn constant_payoff_prices_exactly() {
        let clip = ClipConfig::new(2.0, 2).unwrap();
        let p = Payoff::new(
            spec(PayoffKind::BasketLinear {
                weights: vec![0.0, 0.0],
                intercept: 3.25,
            }),
            &clip,
        )
        .unwrap();
        let est = price_claim(
            &Fixed(GaussianMeasure::standard(2)),
            &[0.0, 0.0],
            1.0,
            &p,
            1000,
            1,
            &clip,
            None,
        )
        .unwrap();
        assert_eq!(est.price, 3.25);
        assert_eq!(est.standard_error, 0.0);
        assert_eq!(est.certified_bias_bound, 0.0);
    }

    #[test]
    fn missing_epsilon_is_a_precondition_error() {
        let clip = ClipConfig::new(2.0, 1).unwrap();
        let p = Payoff::new(spec(PayoffKind::CallOnAvg { strike: 1.0 }), &clip).unwrap();
        let err = price_claim(
            &Fixed(GaussianMeasure::standard(1)),
            &[0.0],
            1.0,
            &p,
            1000,
            1,
            &clip,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Precondition(_)));
    }

    #[test]
    fn call_norm_on_clipped_cube() {
        let clip = ClipConfig::new(2.0, 2).unwrap();
        let p = Payoff::new(spec(PayoffKind::CallOnAvg { strike: 1.0 }), &clip).unwrap();
        assert!((p.sup_abs() - (2f64.exp() - 1.0)).abs() < 1e-12);
        assert!((p.lipschitz() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn declared_lipschitz_below_intrinsic_is_rejected() {
        let clip = ClipConfig::new(1.0, 1).unwrap();
        let table = PiecewiseLinear {
            knots: vec![0.5, 1.0, 2.0],
            values: vec![0.0, 1.0, 1.5],
        };
        assert_eq!(table.max_slope(), 2.0);
        let mut s = spec(PayoffKind::CustomTable { tables: vec![table] });
        s.lip_const = Some(1.5);
        assert!(matches!(Payoff::new(s.clone(), &clip), Err(Error::Config { .. })));
        s.lip_const = Some(2.5);
        assert_eq!(Payoff::new(s, &clip).unwrap().lipschitz(), 2.5);
    }

    #[test]
    fn table_interpolates_and_extrapolates_flat() {
        let f = PiecewiseLinear {
            knots: vec![1.0, 2.0],
            values: vec![0.0, 4.0],
        };
        assert_eq!(f.eval(0.0), 0.0);
        assert_eq!(f.eval(1.5), 2.0);
        assert_eq!(f.eval(9.0), 4.0);
    }

    #[test]
    fn seeded_prices_repeat() {
        let clip = ClipConfig::new(2.0, 2).unwrap();
        let p = Payoff::new(spec(PayoffKind::PutOnAvg { strike: 1.1 }), &clip).unwrap();
        let m = Fixed(GaussianMeasure::from_slices(&[0.0, 0.1], &[0.04, 0.01, 0.01, 0.09]).unwrap());
        let a = price_claim(&m, &[0.0, 0.0], 1.0, &p, 5000, 9, &clip, Some(0.01)).unwrap();
        let b = price_claim(&m, &[0.0, 0.0], 1.0, &p, 5000, 9, &clip, Some(0.01)).unwrap();
        assert_eq!(a, b);
        assert!(a.standard_error > 0.0);
    }
}
