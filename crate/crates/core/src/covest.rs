//! Inverse covariance matrices through the modified Cholesky decomposition
//! `Σ⁻¹ = Tᵀ D⁻¹ T`.
//!
//! Row `i` of `T` holds the order-`i` best linear predictor coefficients and
//! `D` the matching prediction-error variances. Banding keeps only `q`
//! subdiagonals: rows past `q` reuse the order-`q` predictor. The plug-in
//! estimator fills the same pattern with least-squares AR fits to the
//! residuals of a working regression.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, PivotedQr, Precision, PrecisionOrigin, RANK_TOLERANCE};
use crate::timeseries::{levinson_durbin, AutocovarianceTable, PredictorCoefficients};

/// Relative floor applied to the estimated prediction-error variances.
pub const D_FLOOR: f64 = 1e-8;

/// Smallest number of observations beyond `q` accepted by the AR fits.
pub const MIN_EXTRA_OBSERVATIONS: usize = 10;

/// `T` unit lower triangular with `bandwidth` subdiagonals, `D` positive.
#[derive(Debug, Clone)]
pub struct CholeskyFactors {
    pub t: DMatrix<f64>,
    pub d: DVector<f64>,
    pub bandwidth: usize,
}

impl CholeskyFactors {
    pub fn dim(&self) -> usize {
        self.d.len()
    }

    /// `Tᵀ D⁻¹ T`.
    pub fn inverse(&self) -> DMatrix<f64> {
        linalg::banded_congruence(&self.t, self.bandwidth, &self.d)
    }

    pub fn precision(&self, origin: PrecisionOrigin) -> Precision {
        Precision::from_factors(&self.t, self.bandwidth, &self.d, origin)
    }
}

fn population_factors(acf: &AutocovarianceTable, n: usize, q: usize) -> Result<CholeskyFactors> {
    if n == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    if acf.max_lag() < q {
        return Err(Error::InvalidArgument(format!("need autocovariances up to lag {q}, have {}", acf.max_lag())));
    }
    let mut t = DMatrix::identity(n, n);
    let mut d = DVector::zeros(n);
    let mut last: Vec<f64> = Vec::new();
    let mut last_s2 = 0.0;
    levinson_durbin(acf, q, |a, s2| {
        let i = a.len();
        if i < n {
            for (j, c) in a.iter().enumerate() {
                t[(i, i - j - 1)] = *c;
            }
            d[i] = s2;
        }
        if i == q {
            last = a.to_vec();
            last_s2 = s2;
        }
    })?;
    for i in (q + 1)..n {
        for (j, c) in last.iter().enumerate() {
            t[(i, i - j - 1)] = *c;
        }
        d[i] = last_s2;
    }
    Ok(CholeskyFactors { t, d, bandwidth: q })
}

/// Full modified Cholesky factors of `Σ_n⁻¹`.
pub fn modified_cholesky(acf: &AutocovarianceTable, n: usize) -> Result<CholeskyFactors> {
    if acf.max_lag() + 1 < n {
        return Err(Error::InvalidArgument(format!(
            "need autocovariances up to lag {}, have {}",
            n - 1,
            acf.max_lag()
        )));
    }
    population_factors(acf, n, n.saturating_sub(1))
}

/// Factors of the `q`-banded population inverse `Σ_n⁻¹(q)`.
pub fn banded_population_factors(acf: &AutocovarianceTable, n: usize, q: usize) -> Result<CholeskyFactors> {
    if q == 0 || q >= n {
        return Err(Error::InvalidArgument(format!("banding parameter must satisfy 1 ≤ q < n, got q={q}, n={n}")));
    }
    population_factors(acf, n, q)
}

pub fn banded_population_inverse(acf: &AutocovarianceTable, n: usize, q: usize) -> Result<DMatrix<f64>> {
    Ok(banded_population_factors(acf, n, q)?.inverse())
}

/// Residuals of the least-squares regression of `y` on the first `d`
/// columns of `x`.
pub fn ls_residuals(y: &DVector<f64>, x: &DMatrix<f64>, d: usize) -> Result<DVector<f64>> {
    let n = y.len();
    if x.nrows() != n {
        return Err(Error::DimensionMismatch(format!("X has {} rows, y has {n}", x.nrows())));
    }
    if d == 0 || d > n || d > x.ncols() {
        return Err(Error::InvalidArgument(format!(
            "working dimension must satisfy 1 ≤ d ≤ min(n, cols); got d={d}, n={n}, cols={}",
            x.ncols()
        )));
    }
    let qr = PivotedQr::new(x.columns(0, d).into_owned(), RANK_TOLERANCE);
    if !qr.is_full_rank() {
        return Err(Error::RankDeficient { columns: d, rank: qr.rank() });
    }
    Ok(qr.residual(y))
}

/// Order-`k` AR fit to residuals together with `γ̂_0`.
#[derive(Debug, Clone)]
pub struct ResidualArFit {
    pub predictor: PredictorCoefficients,
    pub gamma0: f64,
}

/// Least-squares AR(`k`) fit over the window `t = q+1..n` shared by all
/// orders `k ≤ q`.
pub fn fit_residual_ar(resid: &DVector<f64>, k: usize, q: usize) -> Result<ResidualArFit> {
    let n = resid.len();
    if k == 0 || k > q || q >= n {
        return Err(Error::InvalidArgument(format!("need 1 ≤ k ≤ q < n, got k={k}, q={q}, n={n}")));
    }
    if n < q + MIN_EXTRA_OBSERVATIONS {
        return Err(Error::InvalidArgument(format!(
            "{n} observations is too few for q={q} (need at least {})",
            q + MIN_EXTRA_OBSERVATIONS
        )));
    }
    fit_residual_ar_window(resid, k, q)
}

/// AR(`k`) fit using the observations with zero-based index `start..n` as
/// responses. Requires `start ≥ k`.
pub fn fit_residual_ar_window(resid: &DVector<f64>, k: usize, start: usize) -> Result<ResidualArFit> {
    let n = resid.len();
    if k == 0 || start < k || start >= n {
        return Err(Error::InvalidArgument(format!("need 1 ≤ k ≤ start < n, got k={k}, start={start}, n={n}")));
    }
    let rows = n - start;
    let lags = DMatrix::from_fn(rows, k, |r, j| resid[start + r - j - 1]);
    let target = DVector::from_fn(rows, |r, _| -resid[start + r]);
    let qr = PivotedQr::new(lags.clone(), RANK_TOLERANCE);
    if !qr.is_full_rank() {
        return Err(Error::RankDeficient { columns: k, rank: qr.rank() });
    }
    let coef = qr.solve(&target)?;
    let fitted = &lags * &coef;
    let sse: f64 = (0..rows).map(|r| (fitted[r] - target[r]).powi(2)).sum();
    let gamma0 = resid.iter().map(|e| e * e).sum::<f64>() / n as f64;
    Ok(ResidualArFit {
        predictor: PredictorCoefficients {
            order: k,
            coefficients: coef.iter().copied().collect(),
            innovation_variance: sse / rows as f64,
        },
        gamma0,
    })
}

/// The plug-in estimate `Σ̂⁻¹(q) = T̂ᵀ D̂⁻¹ T̂`.
#[derive(Debug, Clone)]
pub struct BandedInverseEstimate {
    pub n: usize,
    pub q: usize,
    pub d: usize,
    pub factors: CholeskyFactors,
    pub gamma0: f64,
    /// `σ̂²_1..σ̂²_q` before flooring.
    pub sigma2: Vec<f64>,
    /// `â(1)..â(q)`.
    pub ar_rows: Vec<Vec<f64>>,
    /// Floor activation for `γ̂_0` (index 0) and each `σ̂²_k`.
    pub floor_activated: Vec<bool>,
    precision: Precision,
}

impl BandedInverseEstimate {
    pub fn matrix(&self) -> &DMatrix<f64> {
        self.precision.matrix()
    }

    pub fn precision(&self) -> &Precision {
        &self.precision
    }

    pub fn into_precision(self) -> Precision {
        self.precision
    }

    pub fn floor_count(&self) -> usize {
        self.floor_activated.iter().filter(|&&f| f).count()
    }

    pub fn summary(&self) -> EstimateSummary {
        EstimateSummary {
            n: self.n,
            q: self.q,
            d: self.d,
            gamma0: self.gamma0,
            sigma2: self.sigma2.clone(),
            ar_rows: self.ar_rows.clone(),
            floor: D_FLOOR * self.gamma0,
            floor_activated: self.floor_activated.clone(),
        }
    }
}

/// JSON export of a [`BandedInverseEstimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub n: usize,
    pub q: usize,
    pub d: usize,
    pub gamma0: f64,
    pub sigma2: Vec<f64>,
    pub ar_rows: Vec<Vec<f64>>,
    pub floor: f64,
    pub floor_activated: Vec<bool>,
}

pub fn estimate_inverse(y: &DVector<f64>, x: &DMatrix<f64>, d: usize, q: usize) -> Result<BandedInverseEstimate> {
    let n = y.len();
    let resid = ls_residuals(y, x, d)?;
    if q == 0 || q >= n {
        return Err(Error::InvalidArgument(format!("banding parameter must satisfy 1 ≤ q < n, got q={q}, n={n}")));
    }
    let mut ar_rows = Vec::with_capacity(q);
    let mut sigma2 = Vec::with_capacity(q);
    let mut gamma0 = 0.0;
    for k in 1..=q {
        let fit = fit_residual_ar(&resid, k, q)?;
        gamma0 = fit.gamma0;
        sigma2.push(fit.predictor.innovation_variance);
        ar_rows.push(fit.predictor.coefficients);
    }
    if !(gamma0 > 0.0) {
        return Err(Error::InvalidArgument("working-model residuals are identically zero".into()));
    }
    let floor = D_FLOOR * gamma0;
    let mut floor_activated = Vec::with_capacity(q + 1);
    let mut diag = Vec::with_capacity(q + 1);
    for &v in std::iter::once(&gamma0).chain(&sigma2) {
        floor_activated.push(v < floor);
        diag.push(v.max(floor));
    }

    let mut t = DMatrix::identity(n, n);
    let mut dd = DVector::zeros(n);
    for i in 0..n {
        let order = i.min(q);
        dd[i] = diag[order];
        if order > 0 {
            for (j, c) in ar_rows[order - 1].iter().enumerate() {
                t[(i, i - j - 1)] = *c;
            }
        }
    }
    let factors = CholeskyFactors { t, d: dd, bandwidth: q };
    let precision = factors.precision(PrecisionOrigin::Estimated);
    Ok(BandedInverseEstimate { n, q, d, factors, gamma0, sigma2, ar_rows, floor_activated, precision })
}

/// How the banding parameter grows with `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BandingRule {
    /// `q_n = max(1, round(c4 ln n))`, for exponentially decaying AR
    /// coefficients.
    Exponential { c4: f64 },
    /// `q_n = ⌊n^{1/(2(1 + 2/S + ν₀))}⌋`, for algebraic decay with known
    /// lower limit `ν₀ ≥ 1/3`. `moment_index` is `S`; absent means infinite.
    Algebraic {
        nu0: f64,
        #[serde(default)]
        moment_index: Option<f64>,
    },
}

impl Default for BandingRule {
    fn default() -> Self {
        Self::Exponential { c4: 1.5 }
    }
}

pub fn select_banding(n: usize, rule: BandingRule) -> Result<usize> {
    if n < 20 {
        return Err(Error::InvalidArgument(format!("banding rules need n ≥ 20, got {n}")));
    }
    match rule {
        BandingRule::Exponential { c4 } => {
            if !(c4 > 0.0 && c4.is_finite()) {
                return Err(Error::InvalidArgument(format!("c4 must be positive, got {c4}")));
            }
            Ok(((c4 * (n as f64).ln()).round() as usize).max(1))
        }
        BandingRule::Algebraic { nu0, moment_index } => {
            if !(nu0 >= 1.0 / 3.0) || !nu0.is_finite() {
                return Err(Error::InvalidArgument(format!("nu0 must be at least 1/3, got {nu0}")));
            }
            let inv_s = match moment_index {
                None => 0.0,
                Some(s) if s > 0.0 => 2.0 / s,
                Some(s) => return Err(Error::InvalidArgument(format!("moment index must be positive, got {s}"))),
            };
            let power = 2.0 * (1.0 + inv_s + nu0);
            // largest q with q^power ≤ n, robust to rounding in the root
            let nf = n as f64;
            let mut q = nf.powf(1.0 / power).floor() as usize;
            while ((q + 1) as f64).powf(power) <= nf {
                q += 1;
            }
            while q > 1 && (q as f64).powf(power) > nf {
                q -= 1;
            }
            Ok(q.max(1))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    #[default]
    Round,
    Ceil,
}

/// Working dimension `d_n = max(1, c · n^{1/4})` rounded as configured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionRule {
    pub scale: f64,
    #[serde(default)]
    pub rounding: Rounding,
}

impl Default for DimensionRule {
    fn default() -> Self {
        Self { scale: 1.0, rounding: Rounding::Round }
    }
}

impl DimensionRule {
    pub fn apply(&self, n: usize) -> usize {
        let raw = self.scale * (n as f64).powf(0.25);
        let d = match self.rounding {
            Rounding::Round => raw.round(),
            Rounding::Ceil => raw.ceil(),
        };
        (d as usize).max(1)
    }
}

pub fn select_dimension(n: usize, c: f64) -> usize {
    DimensionRule { scale: c, rounding: Rounding::Round }.apply(n)
}

/// Stopping rule for [`spectral_distance`].
///
/// The top eigenvalue of `MᵀM` is found by Lanczos iteration with full
/// reorthogonalisation, restarted from the current Ritz vector every
/// `krylov_dim` steps. Iteration stops when the Ritz residual falls below
/// `rel_tol` times the Ritz value, or when the Ritz value has stopped moving.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerIteration {
    pub rel_tol: f64,
    /// Cap on products with `MᵀM`.
    pub max_iter: usize,
    pub krylov_dim: usize,
}

impl Default for PowerIteration {
    fn default() -> Self {
        Self { rel_tol: 1e-9, max_iter: 10_000, krylov_dim: 200 }
    }
}

/// Spectral norm `‖A − B‖`.
pub fn spectral_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<f64> {
    spectral_distance_with(a, b, PowerIteration::default())
}

pub fn spectral_distance_with(a: &DMatrix<f64>, b: &DMatrix<f64>, settings: PowerIteration) -> Result<f64> {
    if a.shape() != b.shape() || !a.is_square() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    spectral_norm_with(&(a - b), settings)
}

/// Number of eigenvalues of the symmetric tridiagonal `(alpha, beta)` below `x`.
fn sturm_count(alpha: &[f64], beta: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..alpha.len() {
        let off = if i == 0 { 0.0 } else { beta[i - 1] * beta[i - 1] / q };
        q = alpha[i] - x - off;
        if q == 0.0 {
            q = -f64::EPSILON * (alpha[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn top_eigenvalue(alpha: &[f64], beta: &[f64]) -> f64 {
    let k = alpha.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..k {
        let r = if i > 0 { beta[i - 1].abs() } else { 0.0 } + if i + 1 < k { beta[i].abs() } else { 0.0 };
        lo = lo.min(alpha[i] - r);
        hi = hi.max(alpha[i] + r);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(alpha, beta, mid) == k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Eigenvector of the tridiagonal for eigenvalue `theta` by two steps of
/// inverse iteration with partial pivoting.
fn tridiagonal_eigenvector(alpha: &[f64], beta: &[f64], theta: f64) -> Vec<f64> {
    let k = alpha.len();
    if k == 1 {
        return vec![1.0];
    }
    let scale = alpha.iter().chain(beta).fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let tiny = f64::EPSILON * scale;
    // rows of T − θI as (sub, diag, sup, sup2) after elimination
    let mut diag: Vec<f64> = alpha.iter().map(|a| a - theta).collect();
    let mut sup: Vec<f64> = (0..k).map(|i| if i + 1 < k { beta[i] } else { 0.0 }).collect();
    let mut sup2 = vec![0.0; k];
    let mut mult = vec![0.0; k];
    let mut swapped = vec![false; k];
    let mut sub: Vec<f64> = (0..k).map(|i| if i + 1 < k { beta[i] } else { 0.0 }).collect();
    for i in 0..k - 1 {
        // candidate pivot rows i (diag[i]) and i+1 (sub[i])
        if sub[i].abs() > diag[i].abs() {
            swapped[i] = true;
            let (d0, s0, t0) = (diag[i], sup[i], sup2[i]);
            diag[i] = sub[i];
            sup[i] = diag[i + 1];
            sup2[i] = if i + 1 < k - 1 { sup[i + 1] } else { 0.0 };
            // old row i becomes row i+1
            sub[i] = d0;
            diag[i + 1] = s0;
            if i + 1 < k - 1 {
                sup[i + 1] = t0;
            }
        }
        let p = if diag[i].abs() < tiny { tiny } else { diag[i] };
        diag[i] = p;
        let f = sub[i] / p;
        mult[i] = f;
        diag[i + 1] -= f * sup[i];
        if i + 1 < k - 1 {
            sup[i + 1] -= f * sup2[i];
        }
    }
    if diag[k - 1].abs() < tiny {
        diag[k - 1] = tiny;
    }
    let mut x = vec![1.0; k];
    for _ in 0..2 {
        let mut r = x.clone();
        for i in 0..k - 1 {
            if swapped[i] {
                r.swap(i, i + 1);
            }
            r[i + 1] -= mult[i] * r[i];
        }
        for i in (0..k).rev() {
            let mut v = r[i];
            if i + 1 < k {
                v -= sup[i] * r[i + 1];
            }
            if i + 2 < k {
                v -= sup2[i] * r[i + 2];
            }
            r[i] = v / diag[i];
        }
        let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
        x = r.into_iter().map(|v| v / norm).collect();
    }
    x
}

/// Largest singular value of `m`, touching only its band.
pub fn spectral_norm_with(m: &DMatrix<f64>, settings: PowerIteration) -> Result<f64> {
    let n = m.ncols();
    if n == 0 || m.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let (lower, upper) = linalg::band_limits(m);
    let op = |v: &DVector<f64>| linalg::band_tr_matvec(m, lower, upper, &linalg::band_matvec(m, lower, upper, v));
    let kmax = settings.krylov_dim.clamp(1, n);
    let mut start = DVector::from_fn(n, |i, _| 1.0 + 0.25 * (0.7 * i as f64 + 1.0).sin());
    start.normalize_mut();
    let mut products = 0usize;
    let mut theta: f64 = 0.0;
    loop {
        let mut basis: Vec<DVector<f64>> = vec![start.clone()];
        let mut alpha: Vec<f64> = Vec::with_capacity(kmax);
        let mut beta: Vec<f64> = Vec::with_capacity(kmax);
        let mut history: Vec<f64> = Vec::with_capacity(kmax);
        let mut ritz = vec![1.0];
        for j in 0..kmax {
            if products >= settings.max_iter {
                return Err(Error::NoConvergence { iterations: products, estimate: theta.sqrt() });
            }
            let mut w = op(&basis[j]);
            products += 1;
            let a = w.dot(&basis[j]);
            alpha.push(a);
            for _ in 0..2 {
                for v in &basis {
                    let c = w.dot(v);
                    w.axpy(-c, v, 1.0);
                }
            }
            let b = w.norm();
            theta = top_eigenvalue(&alpha, &beta);
            ritz = tridiagonal_eigenvector(&alpha, &beta, theta);
            if theta <= 0.0 {
                // start vector in the null space; retry on the heaviest column
                let heaviest = (0..n).max_by(|&x, &y| m.column(x).norm().total_cmp(&m.column(y).norm())).unwrap_or(0);
                basis = vec![DVector::from_fn(n, |i, _| if i == heaviest { 1.0 } else { 0.0 })];
                alpha.clear();
                beta.clear();
                history.clear();
                if j > 0 {
                    break;
                }
                continue;
            }
            let resid = b * ritz[ritz.len() - 1].abs();
            let stalled = history.len() >= 10 && theta - history[history.len() - 10] <= 1e-3 * settings.rel_tol * theta;
            if resid <= settings.rel_tol * theta || b <= 1e-14 * theta || stalled {
                return Ok(theta.sqrt());
            }
            history.push(theta);
            beta.push(b);
            basis.push(w / b);
        }
        // restart from the Ritz vector
        let mut y = DVector::zeros(n);
        for (c, v) in ritz.iter().zip(&basis) {
            y.axpy(*c, v, 1.0);
        }
        let norm = y.norm();
        if norm > 0.0 {
            start = y / norm;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::{autocovariances, ErrorProcessSpec, InnovationDistribution};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_inverse(acf: &AutocovarianceTable, n: usize) -> DMatrix<f64> {
        acf.toeplitz(n).try_inverse().unwrap()
    }

    /// Cyclic Jacobi eigenvalues of a symmetric matrix; test oracle only.
    fn jacobi_eigenvalues(mut a: DMatrix<f64>) -> Vec<f64> {
        let n = a.nrows();
        for _sweep in 0..100 {
            let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[(i, j)].powi(2)).sum();
            if off < 1e-26 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                }
            }
        }
        (0..n).map(|i| a[(i, i)]).collect()
    }

    fn ar1_acf(n: usize) -> AutocovarianceTable {
        autocovariances(&ErrorProcessSpec::ar(&[-0.5], 100, 1.0).unwrap(), n)
    }

    #[test]
    fn white_noise_factors_are_trivial() {
        let acf = autocovariances(&ErrorProcessSpec::white_noise(2.0).unwrap(), 4);
        let f = modified_cholesky(&acf, 4).unwrap();
        assert_eq!(f.t, DMatrix::identity(4, 4));
        assert_eq!(f.d.as_slice(), &[2.0; 4]);
    }

    #[test]
    fn cholesky_identity_ar1() {
        let acf = ar1_acf(5);
        let f = modified_cholesky(&acf, 5).unwrap();
        let dist = spectral_distance(&f.inverse(), &dense_inverse(&acf, 5)).unwrap();
        assert!(dist < 1e-10, "{dist}");
    }

    #[test]
    fn cholesky_identity_ma1() {
        let spec = ErrorProcessSpec::new(vec![0.5], 1.0, InnovationDistribution::Gaussian).unwrap();
        let acf = autocovariances(&spec, 50);
        let f = modified_cholesky(&acf, 50).unwrap();
        let dist = spectral_distance(&f.inverse(), &dense_inverse(&acf, 50)).unwrap();
        assert!(dist < 1e-8, "{dist}");
    }

    #[test]
    fn exact_banding_for_ar1() {
        let acf = ar1_acf(60);
        let banded = banded_population_inverse(&acf, 60, 2).unwrap();
        let dist = spectral_distance(&banded, &dense_inverse(&acf, 60)).unwrap();
        assert!(dist < 1e-10, "{dist}");
    }

    #[test]
    fn full_band_equals_modified_cholesky() {
        let acf = ar1_acf(12);
        let full = modified_cholesky(&acf, 12).unwrap().inverse();
        let banded = banded_population_inverse(&acf, 12, 11).unwrap();
        assert_eq!(full, banded);
    }

    #[test]
    fn ma1_banding_error_decreases_with_q() {
        let spec = ErrorProcessSpec::new(vec![0.5], 1.0, InnovationDistribution::Gaussian).unwrap();
        let acf = autocovariances(&spec, 100);
        let exact = dense_inverse(&acf, 100);
        let errs: Vec<f64> = [2, 4, 8, 16]
            .iter()
            .map(|&q| spectral_distance(&banded_population_inverse(&acf, 100, q).unwrap(), &exact).unwrap())
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }

    #[test]
    fn banding_parameter_bounds() {
        let acf = ar1_acf(10);
        assert!(banded_population_inverse(&acf, 10, 0).is_err());
        assert!(banded_population_inverse(&acf, 10, 10).is_err());
    }

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn residuals_vanish_in_span() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_matrix(&mut rng, 30, 4);
        let y = &x * DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let r = ls_residuals(&y, &x, 4).unwrap();
        assert!(r.amax() < 1e-12);
    }

    #[test]
    fn residuals_full_projection_and_zero_d() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_matrix(&mut rng, 6, 6);
        let y = random_matrix(&mut rng, 6, 1).column(0).into_owned();
        assert!(ls_residuals(&y, &x, 0).is_err());
        assert_eq!(ls_residuals(&y, &x, 6).unwrap(), DVector::zeros(6));
    }

    #[test]
    fn residuals_orthogonal_to_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_matrix(&mut rng, 50, 5);
        let y = random_matrix(&mut rng, 50, 1).column(0).into_owned();
        let r = ls_residuals(&y, &x, 5).unwrap();
        // normal equations oracle
        assert!((x.transpose() * r).amax() < 1e-8);
    }

    #[test]
    fn rank_deficient_working_design_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut x = random_matrix(&mut rng, 20, 3);
        let c = x.column(0).into_owned();
        x.set_column(1, &c);
        let y = DVector::from_element(20, 1.0);
        assert!(matches!(ls_residuals(&y, &x, 3), Err(Error::RankDeficient { columns: 3, rank: 2 })));
    }

    fn ar1_path(n: usize, seed: u64) -> DVector<f64> {
        let spec = ErrorProcessSpec::ar(&[-0.5], 100, 1.0).unwrap();
        crate::timeseries::simulate_errors(&spec, n, 1000, seed).unwrap()
    }

    #[test]
    fn residual_ar_recovers_ar1() {
        let e = ar1_path(100_000, 5);
        let fit = fit_residual_ar(&e, 1, 5).unwrap();
        let a1 = fit.predictor.coefficients[0];
        assert!(a1 > -0.51 && a1 < -0.49, "{a1}");
    }

    #[test]
    fn residual_ar_white_noise() {
        let spec = ErrorProcessSpec::white_noise(1.0).unwrap();
        let e = crate::timeseries::simulate_errors(&spec, 100_000, 0, 6).unwrap();
        let fit = fit_residual_ar(&e, 3, 3).unwrap();
        assert!(fit.gamma0 > 0.99 && fit.gamma0 < 1.01);
        let s3 = fit.predictor.innovation_variance;
        assert!(s3 > 0.99 && s3 < 1.01, "{s3}");
    }

    #[test]
    fn residual_ar_constant_input_fails() {
        let e = DVector::from_element(100, 2.5);
        assert!(matches!(fit_residual_ar(&e, 2, 3), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn residual_ar_window_is_shared_across_orders() {
        let e = ar1_path(400, 7);
        for k in 1..=4 {
            let a = fit_residual_ar(&e, k, 6).unwrap();
            let b = fit_residual_ar_window(&e, k, 6).unwrap();
            assert_eq!(a.predictor, b.predictor);
        }
        let shrunk = fit_residual_ar_window(&e, 2, 2).unwrap();
        assert_ne!(shrunk.predictor, fit_residual_ar(&e, 2, 6).unwrap().predictor);
    }

    #[test]
    fn residual_ar_needs_enough_observations() {
        let e = ar1_path(12, 8);
        assert!(fit_residual_ar(&e, 1, 5).is_err());
        assert!(fit_residual_ar(&e, 3, 2).is_err());
    }

    #[test]
    fn estimate_band_pattern_is_exact() {
        let n = 300;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = random_matrix(&mut rng, n, 3);
        let y = ar1_path(n, 10);
        let est = estimate_inverse(&y, &x, 3, 4).unwrap();
        for i in 0..n {
            for j in 0..n {
                if j > i || i - j > 4 {
                    assert_eq!(est.factors.t[(i, j)], 0.0);
                }
            }
            assert_eq!(est.factors.t[(i, i)], 1.0);
        }
        assert!(est.factors.d.iter().all(|&v| v > 0.0));
        assert!(linalg::min_eigenvalue(est.matrix()) > 0.0);
        assert_eq!(linalg::bandwidth(est.matrix()), 4);
    }

    #[test]
    fn estimate_white_noise_near_identity() {
        let n = 2000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_matrix(&mut rng, n, 6);
        let spec = ErrorProcessSpec::white_noise(1.0).unwrap();
        let y = crate::timeseries::simulate_errors(&spec, n, 0, 12).unwrap();
        let est = estimate_inverse(&y, &x, 6, 3).unwrap();
        let dist = spectral_distance(est.matrix(), &DMatrix::identity(n, n)).unwrap();
        assert!(dist < 0.25, "{dist}");
    }

    #[test]
    fn estimate_q1_off_diagonal_small() {
        let n = 4000;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x = random_matrix(&mut rng, n, 2);
        let spec = ErrorProcessSpec::white_noise(1.0).unwrap();
        let y = crate::timeseries::simulate_errors(&spec, n, 0, 14).unwrap();
        let est = estimate_inverse(&y, &x, 2, 1).unwrap();
        let a = est.ar_rows[0][0];
        assert!(a.abs() < 4.0 / (n as f64).sqrt(), "{a}");
    }

    #[test]
    fn estimate_converges_for_ar1_regression() {
        let mut dists = Vec::new();
        for (n, seed) in [(500usize, 15u64), (2000, 16)] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_matrix(&mut rng, n, 4);
            let mu = &x * DVector::from_vec(vec![1.0, -1.0, 0.5, 2.0]);
            let y = mu + ar1_path(n, seed + 100);
            let est = estimate_inverse(&y, &x, 4, 3).unwrap();
            let exact = banded_population_inverse(&ar1_acf(n), n, 1).unwrap();
            dists.push(spectral_distance(est.matrix(), &exact).unwrap());
        }
        assert!(dists[1] < 0.35, "{dists:?}");
        assert!(dists[1] < dists[0], "{dists:?}");
    }

    #[test]
    fn floor_activation_is_reported() {
        // a perfectly periodic residual sequence is predicted exactly at order 2
        let n = 60;
        let x = DMatrix::from_fn(n, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let y = DVector::from_fn(n, |i, _| (i as f64 * 2.0 * std::f64::consts::PI / 7.0).sin());
        let est = estimate_inverse(&y, &x, 1, 2).unwrap();
        assert!(est.floor_activated[2], "{:?}", est.sigma2);
        assert!(est.factors.d.iter().all(|&v| v >= D_FLOOR * est.gamma0));
    }

    #[test]
    fn banding_rules() {
        let n = (10f64).exp().round() as usize;
        assert_eq!(select_banding(n, BandingRule::Exponential { c4: 1.0 }).unwrap(), 10);
        assert_eq!(select_banding(4096, BandingRule::Algebraic { nu0: 1.0, moment_index: None }).unwrap(), 8);
        assert_eq!(select_banding(100, BandingRule::Exponential { c4: 2.0 }).unwrap(), 9);
        assert!(select_banding(100, BandingRule::Algebraic { nu0: 0.3, moment_index: None }).is_err());
        assert!(select_banding(19, BandingRule::Exponential { c4: 1.0 }).is_err());
        // finite S shrinks q
        let finite = select_banding(4096, BandingRule::Algebraic { nu0: 1.0, moment_index: Some(7.0) }).unwrap();
        assert!(finite <= 8);
    }

    #[test]
    fn dimension_rule() {
        assert_eq!(select_dimension(256, 1.0), 4);
        assert_eq!(select_dimension(10_000, 2.0), 20);
        assert_eq!(select_dimension(5, 1.0), 1);
        let ceil = DimensionRule { scale: 1.0, rounding: Rounding::Ceil };
        assert_eq!(ceil.apply(400), 5);
        assert_eq!(ceil.apply(1600), 7);
    }

    #[test]
    fn spectral_distance_trivial_cases() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]));
        assert_eq!(spectral_distance(&a, &a).unwrap(), 0.0);
        let d = spectral_distance(&a, &DMatrix::zeros(2, 2)).unwrap();
        assert!((d - 3.0).abs() < 1e-8, "{d}");
    }

    #[test]
    fn spectral_distance_matches_jacobi_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let a = random_matrix(&mut rng, 20, 20);
            let b = random_matrix(&mut rng, 20, 20);
            let diff = &a - &b;
            let oracle = jacobi_eigenvalues(diff.transpose() * &diff).into_iter().fold(0.0, f64::max).sqrt();
            let got = spectral_distance_with(&a, &b, PowerIteration { rel_tol: 1e-9, ..Default::default() }).unwrap();
            assert!((got - oracle).abs() < 1e-8, "{got} vs {oracle}");
        }
    }

    #[test]
    fn spectral_distance_reports_non_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let a = random_matrix(&mut rng, 20, 20);
        let err = spectral_distance_with(&a, &DMatrix::zeros(20, 20), PowerIteration { rel_tol: 0.0, max_iter: 3, krylov_dim: 200 });
        assert!(matches!(err, Err(Error::NoConvergence { iterations: 3, .. })));
    }

    #[test]
    fn summary_serializes() {
        let n = 80;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x = random_matrix(&mut rng, n, 2);
        let y = ar1_path(n, 24);
        let est = estimate_inverse(&y, &x, 2, 3).unwrap();
        let json = crate::io::to_json_string(&est.summary()).unwrap();
        let back: EstimateSummary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, est.summary());
    }
}
