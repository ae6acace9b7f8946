use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::averaging::OptimizerSettings;
use crate::covest::{select_banding, BandingRule, DimensionRule, Rounding, MIN_EXTRA_OBSERVATIONS};
use crate::error::{Error, Result};
use crate::timeseries::{DesignSpec, ErrorProcessSpec, ThetaLaw};

/// Candidate models `k_m = m` for `m = 1..M(n)` with
/// `M(n) = ⌈scale · n^{1/(1+decay)}⌉`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateRule {
    pub scale: f64,
    /// Lower bound `a` on the bias decay exponent.
    pub decay: f64,
}

impl Default for CandidateRule {
    fn default() -> Self {
        Self { scale: 1.0, decay: 1.5 }
    }
}

impl CandidateRule {
    pub fn count(&self, n: usize) -> usize {
        (self.scale * (n as f64).powf(1.0 / (1.0 + self.decay))).ceil() as usize
    }

    pub fn sizes(&self, n: usize) -> Vec<usize> {
        (1..=self.count(n)).collect()
    }
}

/// Which matrix weights the feasible arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMode {
    /// The banded plug-in estimate.
    #[default]
    Estimated,
    /// Force `Σ̂⁻¹ = I`.
    Identity,
}

/// Settings that turn a dataset into weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub candidates: CandidateRule,
    pub optimizer: OptimizerSettings,
    pub banding: BandingRule,
    pub dimension: DimensionRule,
    pub covariance: CovarianceMode,
}

/// Tuning values resolved for one sample size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolved {
    pub n: usize,
    pub candidates: usize,
    pub d: usize,
    pub q: usize,
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        let c = &self.candidates;
        if !(c.scale > 0.0 && c.scale.is_finite() && c.decay > 0.0 && c.decay.is_finite()) {
            return Err(Error::Config(format!("candidate rule needs positive finite scale and decay, got {c:?}")));
        }
        if !(self.dimension.scale > 0.0 && self.dimension.scale.is_finite()) {
            return Err(Error::Config(format!("dimension scale must be positive, got {}", self.dimension.scale)));
        }
        self.optimizer.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Resolves `M(n)`, `d_n` and `q_n`, checking each against `n` and the
    /// number of available regressors.
    pub fn resolve(&self, n: usize, regressors: usize) -> Result<Resolved> {
        let candidates = self.candidates.count(n);
        let d = self.dimension.apply(n);
        let q = select_banding(n, self.banding).map_err(|e| Error::Config(format!("n={n}: {e}")))?;
        if candidates == 0 || candidates >= n || candidates > regressors {
            return Err(Error::Config(format!(
                "n={n}: M(n)={candidates} must lie in 1..n and not exceed the {regressors} regressors"
            )));
        }
        if d > regressors || d >= n {
            return Err(Error::Config(format!("n={n}: working dimension {d} exceeds the {regressors} regressors or n")));
        }
        if self.covariance == CovarianceMode::Estimated && n < q + MIN_EXTRA_OBSERVATIONS {
            return Err(Error::Config(format!("n={n}: banding parameter q={q} leaves too few observations")));
        }
        Ok(Resolved { n, candidates, d, q })
    }
}

/// A full Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub design: DesignSpec,
    pub error_process: ErrorProcessSpec,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub candidates: CandidateRule,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    #[serde(default)]
    pub banding: BandingRule,
    #[serde(default)]
    pub dimension: DimensionRule,
    #[serde(default)]
    pub covariance: CovarianceMode,
    /// Pre-sample length discarded from error simulation; defaults to the MA
    /// truncation.
    #[serde(default)]
    pub burn_in: Option<usize>,
    /// Fraction of failed replications above which the run is an error.
    #[serde(default = "default_failure_rate")]
    pub max_failure_rate: f64,
    /// Compute medians over successful replications even when some failed.
    #[serde(default)]
    pub exclude_failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_failure_rate() -> f64 {
    0.05
}

impl ExperimentConfig {
    /// AR(1) errors with `ρ = 0.5`, `θ_j = j^{-1.5}`, `d_n = ⌈n^{1/4}⌉` and
    /// exponential banding with `c4 = 1.5`.
    pub fn ar1_reference(sample_sizes: Vec<usize>, replications: usize, base_seed: u64) -> Self {
        Self {
            design: DesignSpec { theta_law: ThetaLaw::PowerDecay { scale: 1.0, exponent: 1.5 }, j_max: 100, intercept: false },
            error_process: ErrorProcessSpec::ar(&[-0.5], crate::timeseries::DEFAULT_TRUNCATION, 1.0)
                .expect("AR(1) with ρ = 0.5 is stationary"),
            sample_sizes,
            replications,
            base_seed,
            candidates: CandidateRule::default(),
            optimizer: OptimizerSettings::default(),
            banding: BandingRule::Exponential { c4: 1.5 },
            dimension: DimensionRule { scale: 1.0, rounding: Rounding::Ceil },
            covariance: CovarianceMode::Estimated,
            burn_in: None,
            max_failure_rate: default_failure_rate(),
            exclude_failed: false,
            output: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn analysis(&self) -> AnalysisConfig {
        AnalysisConfig {
            candidates: self.candidates,
            optimizer: self.optimizer,
            banding: self.banding,
            dimension: self.dimension,
            covariance: self.covariance,
        }
    }

    pub fn burn_in(&self) -> usize {
        self.burn_in.unwrap_or_else(|| self.error_process.truncation().max(1))
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate().map_err(|e| Error::Config(format!("design: {e}")))?;
        if self.sample_sizes.is_empty() {
            return Err(Error::Config("sample_sizes is empty".into()));
        }
        if self.replications == 0 {
            return Err(Error::Config("replications must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.max_failure_rate) {
            return Err(Error::Config(format!("max_failure_rate must lie in [0, 1], got {}", self.max_failure_rate)));
        }
        if self.burn_in() < self.error_process.truncation() {
            return Err(Error::Config(format!(
                "burn_in {} is shorter than the MA truncation {}",
                self.burn_in(),
                self.error_process.truncation()
            )));
        }
        let analysis = self.analysis();
        analysis.validate()?;
        let mut seen = std::collections::BTreeSet::new();
        for &n in &self.sample_sizes {
            if !seen.insert(n) {
                return Err(Error::Config(format!("sample size {n} listed twice")));
            }
            analysis.resolve(n, self.design.j_max)?;
        }
        Ok(())
    }

    pub fn resolve(&self, n: usize) -> Result<Resolved> {
        self.analysis().resolve(n, self.design.j_max)
    }

    /// SHA-256 of the compact JSON form, ignoring the output path.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        let text = crate::io::to_json_string(&c).expect("config serialises");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
