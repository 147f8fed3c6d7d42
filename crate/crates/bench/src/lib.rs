//! Fixtures shared by the benchmarks.

use genmarket_core::{build_training_set, GaussianMeasure, Scenario, TrainingPair};

/// The constant-coefficient 2-D scenario from `scenarios/ou2d.json`.
pub fn ou2d() -> Scenario {
    Scenario::from_json(include_str!("../../../scenarios/ou2d.json")).expect("bundled scenario parses")
}

pub fn training_batch(scenario: &Scenario, n_x: usize, n_t: usize) -> Vec<TrainingPair> {
    build_training_set(scenario, n_x, n_t, scenario.seed).expect("training set builds")
}

/// Two well-separated Gaussians in dimension `d`.
pub fn gaussian_pair(d: usize) -> (GaussianMeasure, GaussianMeasure) {
    let mean: Vec<f64> = (0..d).map(|i| 0.1 * i as f64).collect();
    let mut cov_a = vec![0.0; d * d];
    let mut cov_b = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let decay = 0.5f64.powi((i as i32 - j as i32).abs());
            cov_a[i * d + j] = decay;
            cov_b[i * d + j] = if i == j { 1.5 } else { 0.3 * decay };
        }
    }
    let shifted: Vec<f64> = mean.iter().map(|m| m + 0.5).collect();
    (
        GaussianMeasure::from_slices(&mean, &cov_a).expect("SPD"),
        GaussianMeasure::from_slices(&shifted, &cov_b).expect("SPD"),
    )
}
