//! Grid evaluation of a conditional-law model against the exact marginal.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dataset::{exact_laws, GridSpec};
use crate::error::Result;
use crate::gaussian::w2_distance;
use crate::law::ConditionalLaw;
use crate::market::pushforward_sample;
use crate::scenario::Scenario;
use crate::transport::empirical_w2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub x: Vec<f64>,
    pub t: f64,
    /// `W2` between the model and the exact law of `X_t^x`.
    pub w2: f64,
    /// `√D e^M · w2`, the certified bound for the price law at this point.
    pub s_law_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotCheck {
    pub x: Vec<f64>,
    pub t: f64,
    /// Sample estimate of `W2` between the two price laws.
    pub empirical_w2: f64,
    pub regularization: Option<f64>,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpotCheckConfig {
    pub points: usize,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    /// `ε`, the maximum of `w2` over the grid.
    pub max_w2: f64,
    pub mean_w2: f64,
    /// `√D e^M`.
    pub lipschitz: f64,
    /// `√D e^M ε`.
    pub s_law_bound_max: f64,
    pub s_law_bound_mean: f64,
    pub spot_checks: Vec<SpotCheck>,
}

/// Spot-check indices: the worst grid point first, then evenly spaced ones.
fn spot_indices(rows: &[EvalRow], count: usize) -> Vec<usize> {
    let n = rows.len();
    let count = count.min(n);
    if count == 0 {
        return vec![];
    }
    let worst = (0..n)
        .max_by(|&a, &b| rows[a].w2.total_cmp(&rows[b].w2))
        .expect("non-empty");
    let mut picks = vec![worst];
    let mut k = 0;
    while picks.len() < count {
        let idx = (k * n) / count.max(1) + (n / (2 * count)).min(n - 1);
        let idx = idx.min(n - 1);
        if !picks.contains(&idx) {
            picks.push(idx);
        } else if let Some(free) = (0..n).find(|i| !picks.contains(i)) {
            if k >= count {
                picks.push(free);
            }
        }
        k += 1;
    }
    picks
}

pub fn evaluate_rcd<L: ConditionalLaw>(
    model: &L,
    scenario: &Scenario,
    grid: &GridSpec,
    spot: Option<SpotCheckConfig>,
) -> Result<EvalReport> {
    let coeffs = scenario.validate()?;
    let clip = scenario.clip()?;
    let lipschitz = clip.lipschitz();
    let points = grid.points(scenario);
    let exact = exact_laws(&coeffs, &points, scenario.quad_steps)?;
    let mut rows = Vec::with_capacity(points.len());
    for ((x, t), truth) in points.iter().zip(&exact) {
        let predicted = model.law(&DVector::from_column_slice(x), *t)?;
        let w2 = w2_distance(&predicted, truth)?;
        rows.push(EvalRow {
            x: x.clone(),
            t: *t,
            w2,
            s_law_bound: lipschitz * w2,
        });
    }
    let max_w2 = rows.iter().map(|r| r.w2).fold(0.0, f64::max);
    let mean_w2 = rows.iter().map(|r| r.w2).sum::<f64>() / rows.len().max(1) as f64;

    let mut spot_checks = Vec::new();
    if let Some(cfg) = spot {
        for idx in spot_indices(&rows, cfg.points) {
            let (x, t) = &points[idx];
            let predicted = model.law(&DVector::from_column_slice(x), *t)?;
            // Same seed on both sides: the two clouds share their normals.
            let a = pushforward_sample(&predicted, &clip, cfg.samples, cfg.seed)?;
            let b = pushforward_sample(&exact[idx], &clip, cfg.samples, cfg.seed)?;
            let est = empirical_w2(&a, &b)?;
            spot_checks.push(SpotCheck {
                x: x.clone(),
                t: *t,
                empirical_w2: est.value,
                regularization: est.regularization,
                samples: cfg.samples,
            });
        }
    }

    Ok(EvalReport {
        rows,
        max_w2,
        mean_w2,
        lipschitz,
        s_law_bound_max: lipschitz * max_w2,
        s_law_bound_mean: lipschitz * mean_w2,
        spot_checks,
    })
}
