//! Shared fixtures for the estimator benchmarks.

use catsdr::{generate_simulation, LabeledDataset, SimConfig};

/// Training split of the five-cluster simulation with `n` observations.
pub fn simulated_train(seed: u64, n: usize) -> LabeledDataset {
    generate_simulation(&SimConfig::with_train_size(seed, n))
        .expect("simulation parameters are valid")
        .train
}

/// Standardized predictors of [`simulated_train`], for k-means timings.
pub fn simulated_points(seed: u64, n: usize) -> nalgebra::DMatrix<f64> {
    let data = simulated_train(seed, n);
    catsdr::opcg::standardize(&data)
        .expect("nonconstant predictors")
        .0
        .x()
        .clone()
}
