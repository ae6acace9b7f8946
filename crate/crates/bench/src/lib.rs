//! Inputs shared by the kernel benchmarks.

use fgma_core::harness::Dataset;
use fgma_core::{ExperimentConfig, QuadraticWeightCriterion};

/// The AR(1) reference experiment at a single sample size.
pub fn reference_config(n: usize) -> ExperimentConfig {
    ExperimentConfig::ar1_reference(vec![n], 1, 7)
}

/// One draw from the reference design.
pub fn reference_sample(n: usize) -> Dataset {
    Dataset::simulate(&reference_config(n), n, 11).expect("reference design simulates")
}

/// A dense positive definite criterion on `m` weights with a mild linear term.
pub fn synthetic_criterion(m: usize) -> QuadraticWeightCriterion {
    let q = nalgebra::DMatrix::from_fn(m, m, |i, j| {
        let d = i.abs_diff(j) as f64;
        0.6f64.powf(d) + if i == j { 0.1 * (i + 1) as f64 } else { 0.0 }
    });
    let b = nalgebra::DVector::from_fn(m, |i, _| -((i % 5) as f64 + 1.0));
    QuadraticWeightCriterion::new(q, b, 0.0, fgma_core::CriterionKind::Risk).expect("valid criterion")
}
