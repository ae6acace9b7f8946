//! Single datasets: simulation, persistence, and the estimate/average
//! pipelines applied to one `(y, X)` pair.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::config::{AnalysisConfig, CovarianceMode, ExperimentConfig, Resolved};
use super::seeding::{stream_seed, Stream};
use crate::averaging::{build_candidates, famma, minimize_over_hn, OptimizationResult};
use crate::covest::{estimate_inverse, BandedInverseEstimate, EstimateSummary};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::linalg::Precision;
use crate::timeseries::{simulate_design, simulate_errors};

/// Observations `y` and regressors `X` (row-major), with the true mean when
/// simulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub y: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
}

impl Dataset {
    /// Draws one sample of size `n` from the configured design and process.
    pub fn simulate(config: &ExperimentConfig, n: usize, seed: u64) -> Result<Self> {
        let inst = simulate_design(&config.design, n, stream_seed(seed, Stream::Design))?;
        let e = simulate_errors(&config.error_process, n, config.burn_in(), stream_seed(seed, Stream::Errors))?;
        let y = &inst.mu + e;
        Ok(Self {
            seed: Some(seed),
            y: y.iter().copied().collect(),
            x: (0..n).map(|t| inst.x.row(t).iter().copied().collect()).collect(),
            mu: Some(inst.mu.iter().copied().collect()),
        })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.y.is_empty() {
            return Err(Error::InvalidArgument("dataset has no observations".into()));
        }
        if self.x.len() != self.n() || self.x.iter().any(|r| r.len() != self.p()) || self.p() == 0 {
            return Err(Error::DimensionMismatch("X must have one row of equal length per observation".into()));
        }
        if self.mu.as_ref().is_some_and(|m| m.len() != self.n()) {
            return Err(Error::DimensionMismatch("mu length differs from y".into()));
        }
        if self.y.iter().chain(self.x.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("dataset contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn y_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.y)
    }

    pub fn x_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n(), self.p(), |i, j| self.x[i][j])
    }

    /// `y,x1,…,xp` with a header line; the mean is not written.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> = std::iter::once("y".to_string()).chain((1..=self.p()).map(|j| format!("x{j}"))).collect();
        writeln!(w, "{}", header.join(","))?;
        for (y, row) in self.y.iter().zip(&self.x) {
            let fields: Vec<String> = std::iter::once(*y).chain(row.iter().copied()).map(fmt_f64).collect();
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::InvalidArgument("empty CSV".into()))?;
        let cols = header.split(',').count();
        if cols < 2 || header.split(',').next().map(str::trim) != Some("y") {
            return Err(Error::InvalidArgument("CSV header must be y,x1,...".into()));
        }
        let mut y = Vec::new();
        let mut x = Vec::new();
        for (i, line) in lines.enumerate() {
            let vals: std::result::Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
            let vals = vals.map_err(|e| Error::InvalidArgument(format!("row {}: {e}", i + 1)))?;
            if vals.len() != cols {
                return Err(Error::DimensionMismatch(format!("row {} has {} fields, header has {cols}", i + 1, vals.len())));
            }
            y.push(vals[0]);
            x.push(vals[1..].to_vec());
        }
        let ds = Self { seed: None, y, x, mu: None };
        ds.validate()?;
        Ok(ds)
    }

    /// Reads JSON, or CSV when the text does not start with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        let ds = if text.trim_start().starts_with('{') { serde_json::from_str(text)? } else { Self::from_csv(text)? };
        ds.validate()?;
        Ok(ds)
    }
}

/// Plug-in covariance estimate for a dataset.
pub fn estimate_dataset(ds: &Dataset, analysis: &AnalysisConfig) -> Result<(Resolved, BandedInverseEstimate)> {
    ds.validate()?;
    analysis.validate()?;
    let r = analysis.resolve(ds.n(), ds.p())?;
    let est = estimate_inverse(&ds.y_vector(), &ds.x_matrix(), r.d, r.q)?;
    Ok((r, est))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageReport {
    pub n: usize,
    pub candidates: usize,
    pub d: usize,
    pub q: usize,
    pub covariance: CovarianceMode,
    pub famma: OptimizationResult,
    pub weight_sum: f64,
    /// The same criterion on least-squares fits.
    pub mma: OptimizationResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateSummary>,
}

/// FGLS fits, the feasible criterion and its minimiser over `H_N`.
pub fn average_dataset(ds: &Dataset, analysis: &AnalysisConfig) -> Result<AverageReport> {
    ds.validate()?;
    analysis.validate()?;
    let r = analysis.resolve(ds.n(), ds.p())?;
    let (y, x) = (ds.y_vector(), ds.x_matrix());
    let sizes: Vec<usize> = (1..=r.candidates).collect();
    let (precision, estimate) = match analysis.covariance {
        CovarianceMode::Estimated => {
            let est = estimate_inverse(&y, &x, r.d, r.q)?;
            let summary = est.summary();
            (est.into_precision(), Some(summary))
        }
        CovarianceMode::Identity => (Precision::identity(ds.n()), None),
    };
    let fits = build_candidates(&x, &y, &sizes, &precision)?;
    let selected = minimize_over_hn(&famma(&fits, &y, &precision)?, &analysis.optimizer)?;
    let identity = Precision::identity(ds.n());
    let ls = build_candidates(&x, &y, &sizes, &identity)?;
    let mma = minimize_over_hn(&famma(&ls, &y, &identity)?, &analysis.optimizer)?;
    Ok(AverageReport {
        n: r.n,
        candidates: r.candidates,
        d: r.d,
        q: if analysis.covariance == CovarianceMode::Estimated { r.q } else { 0 },
        covariance: analysis.covariance,
        weight_sum: selected.weights.sum(),
        famma: selected,
        mma,
        estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ExperimentConfig {
        let mut c = ExperimentConfig::ar1_reference(vec![100], 1, 1);
        c.design.j_max = 12;
        c
    }

    #[test]
    fn csv_and_json_round_trip() {
        let ds = Dataset::simulate(&cfg(), 50, 4).unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = Dataset::parse(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back.y, ds.y);
        assert_eq!(back.x, ds.x);
        let json = crate::io::to_json_string(&ds).unwrap();
        assert_eq!(Dataset::parse(&json).unwrap(), ds);
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(Dataset::from_csv("y,x1\n1.0\n").is_err());
        assert!(Dataset::from_csv("a,b\n1,2\n").is_err());
        assert!(Dataset::from_csv("y,x1\n1,abc\n").is_err());
    }

    #[test]
    fn average_weights_sum_to_one() {
        let ds = Dataset::simulate(&cfg(), 100, 7).unwrap();
        let report = average_dataset(&ds, &cfg().analysis()).unwrap();
        assert!((report.weight_sum - 1.0).abs() < 1e-12);
        report.famma.weights.check(1e-12).unwrap();
        assert_eq!(report.candidates, 7);
    }

    #[test]
    fn estimate_reports_resolved_tuning() {
        let ds = Dataset::simulate(&cfg(), 100, 8).unwrap();
        let (r, est) = estimate_dataset(&ds, &cfg().analysis()).unwrap();
        assert_eq!((r.d, r.q), (4, 7));
        assert_eq!(est.q, 7);
    }
}
