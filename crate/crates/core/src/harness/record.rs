use serde::{Deserialize, Serialize};

use crate::averaging::WeightVector;

/// Weight-selection methods compared in every replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// `C*` over `H_N` on GLS fits with exact `Σ⁻¹`.
    Amma,
    /// `Ĉ*` over `H_N` on FGLS fits.
    Famma,
    /// The single model minimising `C*`.
    SingleCstar,
    /// Mallows averaging on least-squares fits.
    MmaLs,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Amma, Method::Famma, Method::SingleCstar, Method::MmaLs];

    pub fn name(self) -> &'static str {
        match self {
            Method::Amma => "amma",
            Method::Famma => "famma",
            Method::SingleCstar => "single_cstar",
            Method::MmaLs => "mma_ls",
        }
    }
}

/// Outcome of one method in one replication. `ratio` is `loss / inf_loss`
/// of the enclosing record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    pub weights: WeightVector,
    pub criterion_value: f64,
    pub loss: f64,
    pub ratio: f64,
}

/// Pipeline stage at which a replication failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Design,
    Errors,
    GlsFits,
    Amma,
    Loss,
    Estimate,
    Spectral,
    FglsFits,
    Famma,
    LsFits,
    Mma,
    Risk,
    Ratio,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Design => "design",
            Stage::Errors => "errors",
            Stage::GlsFits => "gls_fits",
            Stage::Amma => "amma",
            Stage::Loss => "loss",
            Stage::Estimate => "estimate",
            Stage::Spectral => "spectral",
            Stage::FglsFits => "fgls_fits",
            Stage::Famma => "famma",
            Stage::LsFits => "ls_fits",
            Stage::Mma => "mma",
            Stage::Risk => "risk",
            Stage::Ratio => "ratio",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: Stage,
    pub message: String,
}

/// Everything measured in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub n: usize,
    pub rep: usize,
    pub seed: u64,
    pub candidates: usize,
    pub d: usize,
    pub q: usize,
    pub failure: Option<Failure>,
    pub methods: Vec<MethodOutcome>,
    /// `inf_{H_N} L*`.
    pub inf_loss: f64,
    pub inf_weights: Option<WeightVector>,
    /// `min_m L*(e_m)`.
    pub min_single_loss: f64,
    /// `‖Σ̂⁻¹(q_n) − Σ⁻¹‖`.
    pub spectral_distance: f64,
    pub k_star: f64,
    pub floor_count: usize,
}

impl ReplicationRecord {
    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }

    pub fn method(&self, m: Method) -> Option<&MethodOutcome> {
        self.methods.iter().find(|o| o.method == m)
    }
}
