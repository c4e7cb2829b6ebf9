//! Shared fixtures for the benchmarks.

use drfs_core::dataset::{synth, SynthParams};
use drfs_core::grid::lambda_from_ratio;
use drfs_core::{fit_weighted_erm, lambda_max, Dataset, FitConfig, FittedModel, LossKind, Task};

pub fn dataset(loss: LossKind, n: usize, d: usize) -> Dataset {
    let task = match loss {
        LossKind::Squared => Task::Regression,
        LossKind::Logistic => Task::BinaryClassification,
    };
    synth(&SynthParams {
        task,
        n,
        d,
        sparsity: d / 10 + 1,
        noise: 0.5,
        seed: 42,
    })
    .expect("valid synth parameters")
    .dataset
}

/// Unit-weight fit at `ratio * lambda_max`.
pub fn reference_fit(ds: &Dataset, loss: LossKind, ratio: f64) -> FittedModel {
    let ones = vec![1.0; ds.n()];
    let lam = lambda_from_ratio(ratio, lambda_max(ds, &ones, loss).unwrap()).unwrap();
    fit_weighted_erm(ds, &ones, loss, lam, &FitConfig::default()).unwrap()
}
