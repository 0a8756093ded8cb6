//! Shared fixtures for the benchmarks.

use explainkit::data::{simulate_signal, split};
use explainkit::{Dataset, GbmConfig, GbmModel, SimConfig};

/// Simulated train and validation sets of `rows` rows in total.
pub fn simulated(rows: usize) -> (Dataset, Dataset) {
    let data = simulate_signal(&SimConfig {
        n_rows: rows,
        ..SimConfig::default()
    })
    .expect("simulation");
    split(&data, 0.3, 1).expect("split")
}

pub fn small_config(rounds: usize) -> GbmConfig {
    GbmConfig {
        max_rounds: rounds,
        early_stopping_rounds: rounds,
        ..GbmConfig::default()
    }
}

pub fn trained(rows: usize, rounds: usize) -> (GbmModel, Dataset) {
    let (train, valid) = simulated(rows);
    let model = explainkit::fit_gbm(&train, &valid, &small_config(rounds), &[]).expect("fit");
    (model, valid)
}
