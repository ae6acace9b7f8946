//! Feasible generalized least squares model averaging for regressions whose
//! errors follow a stationary linear process.
//!
//! The crate is organised bottom-up:
//!
//! - [`timeseries`]: error-process specifications, exact autocovariances,
//!   AR/MA conversion, Levinson–Durbin predictors and simulation.
//! - [`covest`]: modified and banded Cholesky factorisations of the inverse
//!   covariance, the residual-based plug-in estimator and its tuning rules.
//! - [`averaging`]: GLS/FGLS candidate fits, the Mallows-type criteria and
//!   their loss/risk counterparts, and an exact optimiser over sparse weight
//!   sets.
//! - [`harness`]: seeded Monte Carlo experiments, persisted records and the
//!   built-in invariant suite.

// Negated float comparisons are used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaging;
pub mod covest;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod timeseries;

pub use averaging::{
    CandidateFits, CriterionKind, OptimizationResult, OptimizerSettings, QuadraticWeightCriterion,
    WeightVector,
};
pub use covest::{BandedInverseEstimate, BandingRule, CholeskyFactors, DimensionRule};
pub use error::{Error, Result};
pub use harness::{ExperimentConfig, ReplicationRecord};
pub use linalg::Precision;
pub use timeseries::{
    AutocovarianceTable, DesignSpec, ErrorProcessSpec, InnovationDistribution,
    PredictorCoefficients, RegressionInstance, ThetaLaw,
};
