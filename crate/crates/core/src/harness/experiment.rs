use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{CovarianceMode, ExperimentConfig, Resolved};
use super::record::{Failure, Method, MethodOutcome, ReplicationRecord, Stage};
use super::seeding::{replication_seed, stream_seed, Stream};
use crate::averaging::{
    amma, build_candidates, efficiency_ratio, famma, gse_loss, minimize_over_hn, single_model_risks_with,
    OptimizationResult,
};
use crate::covest::{banded_population_factors, estimate_inverse, modified_cholesky, spectral_distance};
use crate::error::{Error, Result};
use crate::linalg::{Precision, PrecisionOrigin};
use crate::timeseries::{autocovariances, simulate_design, simulate_errors, ErrorProcessSpec};

/// Exact inverse covariance for an `n`-sample of the configured process.
/// Autoregressive specifications use the order-`p` banded factorisation,
/// which is exact and has zeros outside the band.
pub fn exact_precision(spec: &ErrorProcessSpec, n: usize) -> Result<Precision> {
    match spec.ar_form() {
        Some(ar) if !ar.is_empty() && ar.len() < n => {
            let acf = autocovariances(spec, ar.len());
            Ok(banded_population_factors(&acf, n, ar.len())?.precision(PrecisionOrigin::Exact))
        }
        _ => {
            let acf = autocovariances(spec, n.saturating_sub(1));
            Ok(modified_cholesky(&acf, n)?.precision(PrecisionOrigin::Exact))
        }
    }
}

/// State shared by all replications at one sample size.
#[derive(Debug, Clone)]
pub struct SampleContext {
    pub resolved: Resolved,
    pub sizes: Vec<usize>,
    pub exact: Arc<Precision>,
}

impl SampleContext {
    pub fn new(config: &ExperimentConfig, n: usize) -> Result<Self> {
        let resolved = config.resolve(n)?;
        let exact = exact_precision(&config.error_process, n)?;
        Ok(Self { resolved, sizes: (1..=resolved.candidates).collect(), exact: Arc::new(exact) })
    }
}

trait StageExt<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, Failure>;
}

impl<T> StageExt<T> for Result<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, Failure> {
        self.map_err(|e| Failure { stage, message: e.to_string() })
    }
}

fn outcome(
    method: Method,
    selected: &OptimizationResult,
    loss: &crate::averaging::QuadraticWeightCriterion,
    inf: f64,
) -> std::result::Result<MethodOutcome, Failure> {
    let l = loss.value_weights(&selected.weights);
    let ratio = efficiency_ratio(l, inf).at(Stage::Ratio)?;
    Ok(MethodOutcome { method, weights: selected.weights.clone(), criterion_value: selected.value, loss: l, ratio })
}

fn pipeline(config: &ExperimentConfig, ctx: &SampleContext, rec: &mut ReplicationRecord) -> std::result::Result<(), Failure> {
    let n = ctx.resolved.n;
    let exact = ctx.exact.as_ref();
    let sizes = &ctx.sizes;
    let opt = config.optimizer;

    let inst = simulate_design(&config.design, n, stream_seed(rec.seed, Stream::Design)).at(Stage::Design)?;
    let e = simulate_errors(&config.error_process, n, config.burn_in(), stream_seed(rec.seed, Stream::Errors))
        .at(Stage::Errors)?;
    let y: DVector<f64> = &inst.mu + e;
    let (x, mu) = (&inst.x, &inst.mu);

    let gls = build_candidates(x, &y, sizes, exact).at(Stage::GlsFits)?;
    let l_star = gse_loss(&gls, mu, exact).at(Stage::Loss)?;
    let inf = minimize_over_hn(&l_star, &opt).at(Stage::Loss)?;
    rec.inf_loss = inf.value;
    rec.inf_weights = Some(inf.weights.clone());
    rec.min_single_loss = (0..sizes.len()).map(|m| l_star.value_sparse(&[m], &[1.0])).fold(f64::INFINITY, f64::min);

    let c_star = amma(&gls, &y, exact).at(Stage::Amma)?;
    let w_tilde = minimize_over_hn(&c_star, &opt).at(Stage::Amma)?;
    let single = minimize_over_hn(&c_star, &opt.with_sparsity(1)).at(Stage::Amma)?;

    let feasible = match config.covariance {
        CovarianceMode::Estimated => {
            let est = estimate_inverse(&y, x, ctx.resolved.d, ctx.resolved.q).at(Stage::Estimate)?;
            rec.floor_count = est.floor_count();
            est.into_precision()
        }
        CovarianceMode::Identity => Precision::identity(n),
    };
    rec.spectral_distance = spectral_distance(feasible.matrix(), exact.matrix()).at(Stage::Spectral)?;
    let fgls = build_candidates(x, &y, sizes, &feasible).at(Stage::FglsFits)?;
    let c_hat = famma(&fgls, &y, &feasible).at(Stage::Famma)?;
    let w_hat = minimize_over_hn(&c_hat, &opt).at(Stage::Famma)?;
    let l_f = gse_loss(&fgls, mu, exact).at(Stage::Loss)?;

    let identity = Precision::identity(n);
    let ls = build_candidates(x, &y, sizes, &identity).at(Stage::LsFits)?;
    let mma = famma(&ls, &y, &identity).at(Stage::Mma)?;
    let w_mma = minimize_over_hn(&mma, &opt).at(Stage::Mma)?;
    let l_ls = gse_loss(&ls, mu, exact).at(Stage::Loss)?;

    rec.k_star = single_model_risks_with(mu, x, sizes, exact).at(Stage::Risk)?.1;
    rec.methods = vec![
        outcome(Method::Amma, &w_tilde, &l_star, inf.value)?,
        outcome(Method::Famma, &w_hat, &l_f, inf.value)?,
        outcome(Method::SingleCstar, &single, &l_star, inf.value)?,
        outcome(Method::MmaLs, &w_mma, &l_ls, inf.value)?,
    ];
    Ok(())
}

/// One replication using a prepared context. Failures are recorded with
/// their stage rather than returned.
pub fn run_replication_in(config: &ExperimentConfig, ctx: &SampleContext, rep: usize) -> ReplicationRecord {
    let r = ctx.resolved;
    let mut rec = ReplicationRecord {
        n: r.n,
        rep,
        seed: replication_seed(config.base_seed, r.n, rep),
        candidates: r.candidates,
        d: r.d,
        q: if config.covariance == CovarianceMode::Estimated { r.q } else { 0 },
        failure: None,
        methods: Vec::new(),
        inf_loss: f64::NAN,
        inf_weights: None,
        min_single_loss: f64::NAN,
        spectral_distance: f64::NAN,
        k_star: f64::NAN,
        floor_count: 0,
    };
    if let Err(f) = pipeline(config, ctx, &mut rec) {
        rec.methods.clear();
        rec.failure = Some(f);
    }
    rec
}

/// Simulates design and errors, fits every arm and scores the selected
/// weights. Fully determined by `(config.base_seed, n, rep)`.
pub fn run_replication(config: &ExperimentConfig, n: usize, rep: usize) -> Result<ReplicationRecord> {
    config.validate()?;
    let ctx = SampleContext::new(config, n)?;
    Ok(run_replication_in(config, &ctx, rep))
}

/// Lower, middle and upper quartiles (linear interpolation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl Quartiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() || values.iter().any(|v| v.is_nan()) {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            min: v[0],
            max: v[v.len() - 1],
            count: v.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub ratio: Option<Quartiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n: usize,
    pub candidates: usize,
    pub d: usize,
    pub q: usize,
    pub replications: usize,
    pub failures: usize,
    /// Null when failures occurred and `exclude_failed` is off.
    pub methods: Vec<MethodSummary>,
    pub spectral_distance: Option<Quartiles>,
    pub k_star: Option<Quartiles>,
    /// Replications where the AMMA ratio fell below one.
    pub amma_ratio_below_one: usize,
    /// Replications where `inf_{H_N} L*` exceeded the best unit-weight loss.
    pub inclusion_violations: usize,
    pub floor_activations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureNote {
    pub n: usize,
    pub rep: usize,
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub format_version: u32,
    pub config_hash: String,
    pub replications: usize,
    pub sample_sizes: Vec<SampleSummary>,
    pub failures: Vec<FailureNote>,
    pub failure_rate: f64,
    pub max_failure_rate: f64,
    pub failure_rate_exceeded: bool,
}

pub const SUMMARY_VERSION: u32 = 1;

pub fn summarize(config: &ExperimentConfig, records: &[ReplicationRecord]) -> ExperimentSummary {
    let mut per_n = Vec::new();
    let mut failures = Vec::new();
    for &n in &config.sample_sizes {
        let recs: Vec<&ReplicationRecord> = records.iter().filter(|r| r.n == n).collect();
        let ok: Vec<&&ReplicationRecord> = recs.iter().filter(|r| r.is_ok()).collect();
        let failed = recs.len() - ok.len();
        for r in recs.iter().filter(|r| !r.is_ok()) {
            let f = r.failure.as_ref().unwrap();
            failures.push(FailureNote { n, rep: r.rep, stage: f.stage, message: f.message.clone() });
        }
        let usable = failed == 0 || config.exclude_failed;
        let stat = |f: &dyn Fn(&ReplicationRecord) -> f64| -> Option<Quartiles> {
            if !usable {
                return None;
            }
            Quartiles::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>())
        };
        let methods = Method::ALL
            .iter()
            .map(|&m| MethodSummary { method: m, ratio: stat(&|r| r.method(m).map_or(f64::NAN, |o| o.ratio)) })
            .collect();
        let first = recs.first();
        per_n.push(SampleSummary {
            n,
            candidates: first.map_or(0, |r| r.candidates),
            d: first.map_or(0, |r| r.d),
            q: first.map_or(0, |r| r.q),
            replications: recs.len(),
            failures: failed,
            methods,
            spectral_distance: stat(&|r| r.spectral_distance),
            k_star: stat(&|r| r.k_star),
            amma_ratio_below_one: ok.iter().filter(|r| r.method(Method::Amma).is_some_and(|o| o.ratio < 1.0)).count(),
            inclusion_violations: ok.iter().filter(|r| !(r.inf_loss <= r.min_single_loss)).count(),
            floor_activations: ok.iter().map(|r| r.floor_count).sum(),
        });
    }
    let total = records.len();
    let failure_rate = if total == 0 { 0.0 } else { failures.len() as f64 / total as f64 };
    ExperimentSummary {
        format_version: SUMMARY_VERSION,
        config_hash: config.hash(),
        replications: config.replications,
        sample_sizes: per_n,
        failures,
        failure_rate,
        max_failure_rate: config.max_failure_rate,
        failure_rate_exceeded: failure_rate > config.max_failure_rate,
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub records: Vec<ReplicationRecord>,
    pub summary: ExperimentSummary,
}

/// Runs every `(n, rep)` pair on a pool of `threads` workers. Records come
/// back sorted by `(n, rep)` regardless of scheduling.
pub fn run_experiment(config: &ExperimentConfig, threads: usize) -> Result<ExperimentResult> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let mut records = Vec::with_capacity(config.sample_sizes.len() * config.replications);
    for &n in &config.sample_sizes {
        let ctx = SampleContext::new(config, n)?;
        let batch: Vec<ReplicationRecord> =
            pool.install(|| (0..config.replications).into_par_iter().map(|rep| run_replication_in(config, &ctx, rep)).collect());
        records.extend(batch);
    }
    records.sort_by_key(|r| (r.n, r.rep));
    let summary = summarize(config, &records);
    Ok(ExperimentResult { records, summary })
}
