//! Built-in invariant suite run by `fgma check`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::experiment::run_experiment;
use super::output::records_csv_string;
use super::record::Method;
use crate::averaging::{
    amma, build_candidates, criterion_decomposition_check, famma, grid_weights, minimize_over_hn, CriterionKind,
    OptimizerSettings, QuadraticWeightCriterion,
};
use crate::covest::{banded_population_inverse, estimate_inverse, modified_cholesky, spectral_distance};
use crate::linalg::{self, Precision};
use crate::timeseries::{autocovariances, best_linear_predictor, simulate_errors, ErrorProcessSpec};

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn() -> Result<String, String>;

fn randn(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(rand_distr::StandardNormal))
}

fn ensure(ok: bool, msg: String) -> Result<String, String> {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn levinson_matches_yule_walker() -> Result<String, String> {
    let spec = ErrorProcessSpec::ar(&[-0.6, 0.2], 100, 1.0).map_err(|e| e.to_string())?;
    let acf = autocovariances(&spec, 8);
    let pred = best_linear_predictor(&acf, 6).map_err(|e| e.to_string())?;
    let gamma = acf.toeplitz(6);
    let rhs = DVector::from_fn(6, |i, _| acf.gamma(i + 1));
    let phi = gamma.lu().solve(&rhs).ok_or("singular Toeplitz system")?;
    let err = (0..6).map(|j| (pred.coefficients[j] + phi[j]).abs()).fold(0.0, f64::max);
    ensure(err < 1e-10, format!("max coefficient difference {err:.2e}"))
}

fn cholesky_reconstructs_inverse() -> Result<String, String> {
    let spec = ErrorProcessSpec::arma(&[-0.5], &[0.3], 100, 1.0).map_err(|e| e.to_string())?;
    let acf = autocovariances(&spec, 80);
    let f = modified_cholesky(&acf, 80).map_err(|e| e.to_string())?;
    let dense = acf.toeplitz(80).try_inverse().ok_or("singular Σ")?;
    let d = spectral_distance(&f.inverse(), &dense).map_err(|e| e.to_string())?;
    ensure(d < 1e-8, format!("spectral distance {d:.2e}"))
}

fn banding_exact_for_ar() -> Result<String, String> {
    let spec = ErrorProcessSpec::ar(&[-0.6, 0.2], 100, 1.0).map_err(|e| e.to_string())?;
    let acf = autocovariances(&spec, 99);
    let dense = acf.toeplitz(100).try_inverse().ok_or("singular Σ")?;
    let banded = banded_population_inverse(&acf, 100, 3).map_err(|e| e.to_string())?;
    let d = spectral_distance(&banded, &dense).map_err(|e| e.to_string())?;
    ensure(d < 1e-8, format!("spectral distance {d:.2e}"))
}

fn estimate_is_positive_definite() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = randn(&mut rng, 150, 4);
    let spec = ErrorProcessSpec::ar(&[-0.5], 100, 1.0).map_err(|e| e.to_string())?;
    let y = &x * DVector::from_element(4, 1.0) + simulate_errors(&spec, 150, 100, 2).map_err(|e| e.to_string())?;
    let est = estimate_inverse(&y, &x, 3, 5).map_err(|e| e.to_string())?;
    let lmin = linalg::min_eigenvalue(est.matrix());
    ensure(lmin > 0.0 && linalg::bandwidth(est.matrix()) <= 5, format!("minimum eigenvalue {lmin:.3e}"))
}

fn optimizer_beats_grid() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = OptimizerSettings::default();
    let mut worst: f64 = f64::NEG_INFINITY;
    for _ in 0..10 {
        let a = randn(&mut rng, 6, 5);
        let b = randn(&mut rng, 5, 1).column(0).into_owned();
        let crit = QuadraticWeightCriterion::new(a.transpose() * a, b, 0.0, CriterionKind::Risk).map_err(|e| e.to_string())?;
        let r = minimize_over_hn(&crit, &s).map_err(|e| e.to_string())?;
        for g in grid_weights(5, 3, 10_000).map_err(|e| e.to_string())? {
            if g.iter().all(|&v| v == 0.0 || v >= s.delta) {
                worst = worst.max(r.value - crit.value(&g));
            }
        }
    }
    ensure(worst <= 1e-12, format!("largest excess over grid {worst:.2e}"))
}

fn mma_reduction() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = randn(&mut rng, 60, 5);
    let y = randn(&mut rng, 60, 1).column(0).into_owned();
    let id = Precision::identity(60);
    let fits = build_candidates(&x, &y, &[1, 2, 3, 5], &id).map_err(|e| e.to_string())?;
    let a = amma(&fits, &y, &id).map_err(|e| e.to_string())?;
    let f = famma(&fits, &y, &id).map_err(|e| e.to_string())?;
    let w = [0.1, 0.2, 0.3, 0.4];
    let direct = (&y - fits.averaged(&w)).norm_squared() + 2.0 * (0.1 + 0.4 + 0.9 + 2.0);
    let gap = (a.value(&w) - direct).abs();
    ensure(a.q == f.q && a.b == f.b && a.c == f.c && gap < 1e-10 * direct, format!("direct MMA gap {gap:.2e}"))
}

fn decomposition_identity() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 80;
    let x = randn(&mut rng, n, 5);
    let mu = &x * DVector::from_fn(5, |j, _| ((j + 1) as f64).powf(-1.5));
    let spec = ErrorProcessSpec::ar(&[-0.5], 100, 1.0).map_err(|e| e.to_string())?;
    let y = &mu + simulate_errors(&spec, n, 100, 6).map_err(|e| e.to_string())?;
    let w = crate::harness::experiment::exact_precision(&spec, n).map_err(|e| e.to_string())?;
    let r = criterion_decomposition_check(&x, &[1, 3, 5], &y, &mu, &w, &[0.25, 0.25, 0.5]).map_err(|e| e.to_string())?;
    ensure(r < 1e-8 * y.norm_squared().max(1.0), format!("residual {r:.2e}"))
}

fn tiny_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::ar1_reference(vec![60, 90], 3, 2024);
    cfg.design.j_max = 20;
    cfg
}

fn replication_invariants() -> Result<String, String> {
    let res = run_experiment(&tiny_config(), 1).map_err(|e| e.to_string())?;
    for r in &res.records {
        if let Some(f) = &r.failure {
            return Err(format!("n={} rep={} failed at {}: {}", r.n, r.rep, f.stage.name(), f.message));
        }
        let amma = r.method(Method::Amma).ok_or("missing AMMA outcome")?;
        if amma.ratio < 1.0 || r.inf_loss > r.min_single_loss {
            return Err(format!("n={} rep={}: AMMA ratio {} inf {} min single {}", r.n, r.rep, amma.ratio, r.inf_loss, r.min_single_loss));
        }
        for o in &r.methods {
            if (o.ratio - o.loss / r.inf_loss).abs() > 1e-12 * o.ratio {
                return Err(format!("ratio bookkeeping off for {}", o.method.name()));
            }
            o.weights.check(1e-12).map_err(|e| e.to_string())?;
        }
    }
    Ok(format!("{} replications", res.records.len()))
}

fn experiment_determinism() -> Result<String, String> {
    let a = run_experiment(&tiny_config(), 1).map_err(|e| e.to_string())?;
    let b = run_experiment(&tiny_config(), 2).map_err(|e| e.to_string())?;
    let (ca, cb) = (records_csv_string(&a.records), records_csv_string(&b.records));
    ensure(ca == cb, format!("{} bytes", ca.len()))
}

const CHECKS: [(&str, Check); 9] = [
    ("levinson_matches_yule_walker", levinson_matches_yule_walker),
    ("cholesky_reconstructs_inverse", cholesky_reconstructs_inverse),
    ("banding_exact_for_ar", banding_exact_for_ar),
    ("estimate_is_positive_definite", estimate_is_positive_definite),
    ("optimizer_beats_grid", optimizer_beats_grid),
    ("mma_reduction", mma_reduction),
    ("decomposition_identity", decomposition_identity),
    ("replication_invariants", replication_invariants),
    ("experiment_determinism", experiment_determinism),
];

pub fn run_checks() -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|(name, f)| match f() {
            Ok(detail) => CheckOutcome { name, passed: true, detail },
            Err(detail) => CheckOutcome { name, passed: false, detail },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    #[test]
    fn suite_passes() {
        for c in super::run_checks() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
