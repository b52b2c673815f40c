//! Seeded benchmark harness: repeated train/test splits, learned model
//! versus the identity-metric baseline.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifier;
use crate::dataio::{preprocess, split, RawDataset, SplitError, StatsMode};
use crate::distance::ModelParams;
use crate::trainer::{train, TrainConfig, TrainError};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Aggregated results of one benchmark run. Means and standard
/// deviations are recomputable from the per-seed lists; `emit` checks
/// that before handing the report out.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub format_version: u32,
    pub dataset: String,
    pub seeds: Vec<u64>,
    pub learned_accuracies: Vec<f64>,
    pub baseline_accuracies: Vec<f64>,
    pub learned_mean: f64,
    pub learned_std: f64,
    pub baseline_mean: f64,
    pub baseline_std: f64,
    pub train_fraction: f64,
    pub config: TrainConfig,
    pub wall_seconds: f64,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation; a single sample reports 0.
pub fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Runs `repeats` seeded repetitions (seeds 0..repeats): split, preprocess,
/// train, then evaluate both the learned model and the identity baseline
/// on the held-out side.
pub fn run_benchmark(
    raw: &RawDataset,
    dataset_name: &str,
    config: &TrainConfig,
    repeats: usize,
    train_fraction: f64,
    stats_mode: StatsMode,
) -> Result<BenchmarkReport, BenchError> {
    assert!(repeats >= 1, "need at least one repetition");
    let started = Instant::now();

    let mut seeds = Vec::with_capacity(repeats);
    let mut learned = Vec::with_capacity(repeats);
    let mut baseline = Vec::with_capacity(repeats);

    for seed in 0..repeats as u64 {
        let (train_raw, test_raw) = split(raw, train_fraction, seed)?;
        let (trainset, testset) = preprocess(&train_raw, &test_raw, stats_mode);

        let run_config = TrainConfig { seed, ..config.clone() };
        let report = train(&trainset, &run_config)?;
        learned.push(classifier::evaluate(
            &testset,
            &trainset,
            &report.final_model,
            run_config.k_neighbors,
        ));
        baseline.push(classifier::evaluate(
            &testset,
            &trainset,
            &ModelParams::identity(trainset.dim()),
            run_config.k_neighbors,
        ));
        seeds.push(seed);
    }

    let report = BenchmarkReport {
        format_version: 1,
        dataset: dataset_name.to_string(),
        learned_mean: mean(&learned),
        learned_std: std_dev(&learned),
        baseline_mean: mean(&baseline),
        baseline_std: std_dev(&baseline),
        seeds,
        learned_accuracies: learned,
        baseline_accuracies: baseline,
        train_fraction,
        config: config.clone(),
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    debug_assert!(
        (report.learned_mean - mean(&report.learned_accuracies)).abs() < 1e-12
            && (report.learned_std - std_dev(&report.learned_accuracies)).abs() < 1e-12,
        "aggregates drifted from per-seed values"
    );
    Ok(report)
}

impl BenchmarkReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serialization");
        text.push('\n');
        text
    }
}
