//! Stationary linear error processes and the regression designs they feed.
//!
//! An [`ErrorProcessSpec`] describes `e_t = α_t + Σ_k β_k α_{t-k}` with the
//! MA expansion truncated at a finite length `K`. Everything here is a pure
//! function of its inputs and (where random) a 64-bit seed.

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// MA truncation length used when expanding an AR form.
pub const DEFAULT_TRUNCATION: usize = 100;

/// Largest tolerated `γ_0 / σ²_k` in the Levinson–Durbin recursion.
pub const MAX_CONDITION: f64 = 1e12;

const PD_CHECK_LAGS: usize = 20;
const PD_CHECK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InnovationDistribution {
    Gaussian,
    /// Student-t rescaled to the innovation variance. Requires `nu > 4`.
    StudentT { nu: f64 },
}

impl InnovationDistribution {
    /// The moment index `S` used by the algebraic banding rule: infinite for
    /// Gaussian innovations and `ν - 1` for Student-t.
    pub fn moment_index(&self) -> f64 {
        match *self {
            Self::Gaussian => f64::INFINITY,
            Self::StudentT { nu } => nu - 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
struct ErrorProcessDoc {
    #[serde(default)]
    ma_coefficients: Vec<f64>,
    #[serde(default)]
    ar_form: Option<Vec<f64>>,
    innovation_variance: f64,
    #[serde(default = "gaussian")]
    innovation_distribution: InnovationDistribution,
}

fn gaussian() -> InnovationDistribution {
    InnovationDistribution::Gaussian
}

impl TryFrom<ErrorProcessDoc> for ErrorProcessSpec {
    type Error = Error;

    fn try_from(doc: ErrorProcessDoc) -> Result<Self> {
        match doc.ar_form {
            Some(ar) => {
                let k = if doc.ma_coefficients.is_empty() { DEFAULT_TRUNCATION } else { doc.ma_coefficients.len() };
                let spec = Self::ar(&ar, k, doc.innovation_variance)?
                    .with_distribution(doc.innovation_distribution)?;
                if !doc.ma_coefficients.is_empty() {
                    let drift = spec
                        .ma_coefficients
                        .iter()
                        .zip(&doc.ma_coefficients)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    if drift > 1e-10 {
                        return Err(Error::InvalidArgument(format!(
                            "ma_coefficients disagree with the expansion of ar_form (max diff {drift:.3e})"
                        )));
                    }
                }
                Ok(spec)
            }
            None => Self::new(doc.ma_coefficients, doc.innovation_variance, doc.innovation_distribution),
        }
    }
}

/// A stationary, invertible linear process with finite MA truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ErrorProcessDoc")]
pub struct ErrorProcessSpec {
    ma_coefficients: Vec<f64>,
    ar_form: Option<Vec<f64>>,
    innovation_variance: f64,
    innovation_distribution: InnovationDistribution,
}

impl ErrorProcessSpec {
    /// A process given by its MA coefficients `β_1..β_K`.
    pub fn new(ma: Vec<f64>, innovation_variance: f64, distribution: InnovationDistribution) -> Result<Self> {
        let spec = Self {
            ma_coefficients: ma,
            ar_form: None,
            innovation_variance,
            innovation_distribution: distribution,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn white_noise(innovation_variance: f64) -> Result<Self> {
        Self::new(Vec::new(), innovation_variance, InnovationDistribution::Gaussian)
    }

    /// An exact AR(p) process `e_t + a_1 e_{t-1} + … + a_p e_{t-p} = α_t`,
    /// carried as its MA expansion truncated at `truncation` terms.
    pub fn ar(ar: &[f64], truncation: usize, innovation_variance: f64) -> Result<Self> {
        check_stationary(ar)?;
        let ma = invert_series(ar, truncation);
        let spec = Self {
            ma_coefficients: ma,
            ar_form: Some(ar.to_vec()),
            innovation_variance,
            innovation_distribution: InnovationDistribution::Gaussian,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// An ARMA process `(1 + Σ a_j z^j) e_t = (1 + Σ m_j z^j) α_t`, truncated.
    pub fn arma(ar: &[f64], ma: &[f64], truncation: usize, innovation_variance: f64) -> Result<Self> {
        check_stationary(ar)?;
        let inv = invert_series(ar, truncation);
        let mut coeffs = vec![0.0; truncation];
        for (j, c) in coeffs.iter_mut().enumerate() {
            // (1 + inv)(1 + ma) at power j + 1
            let p = j + 1;
            let mut s = inv[j];
            if p <= ma.len() {
                s += ma[p - 1];
            }
            for i in 1..p {
                if i <= ma.len() {
                    s += ma[i - 1] * inv[p - i - 1];
                }
            }
            *c = s;
        }
        Self::new(coeffs, innovation_variance, InnovationDistribution::Gaussian)
    }

    pub fn with_distribution(mut self, distribution: InnovationDistribution) -> Result<Self> {
        self.innovation_distribution = distribution;
        self.validate()?;
        Ok(self)
    }

    pub fn ma_coefficients(&self) -> &[f64] {
        &self.ma_coefficients
    }

    pub fn ar_form(&self) -> Option<&[f64]> {
        self.ar_form.as_deref()
    }

    pub fn innovation_variance(&self) -> f64 {
        self.innovation_variance
    }

    pub fn innovation_distribution(&self) -> InnovationDistribution {
        self.innovation_distribution
    }

    /// Truncation length `K`.
    pub fn truncation(&self) -> usize {
        self.ma_coefficients.len()
    }

    /// `Σ_{j>K} |β_j|`: zero for a finite MA, otherwise estimated by
    /// continuing the AR inversion to `4K` terms.
    pub fn truncation_tail(&self) -> f64 {
        match &self.ar_form {
            None => 0.0,
            Some(ar) => {
                let k = self.truncation();
                invert_series(ar, 4 * k.max(1))[k..].iter().map(|b| b.abs()).sum()
            }
        }
    }

    /// `f_e(λ) = σ²/(2π) |Σ β_j e^{-ijλ}|²`.
    pub fn spectral_density(&self, lambda: f64) -> f64 {
        let z = Complex::new(0.0, -lambda).exp();
        let v = eval_poly(&self.ma_coefficients, z);
        self.innovation_variance / (2.0 * std::f64::consts::PI) * v.norm_sqr()
    }

    fn validate(&self) -> Result<()> {
        if !(self.innovation_variance.is_finite() && self.innovation_variance > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "innovation variance must be positive, got {}",
                self.innovation_variance
            )));
        }
        if self.ma_coefficients.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidArgument("MA coefficients must be finite".into()));
        }
        if let InnovationDistribution::StudentT { nu } = self.innovation_distribution {
            if !(nu > 4.0) {
                return Err(Error::InvalidArgument(format!(
                    "Student-t innovations need nu > 4 for the moment condition, got {nu}"
                )));
            }
        }
        let zeros = zeros_in_unit_disk(&self.ma_coefficients)?;
        if zeros > 0 {
            return Err(Error::NotInvertible(format!(
                "MA polynomial has {zeros} root(s) inside the unit disk"
            )));
        }
        let acf = autocovariances(self, PD_CHECK_LAGS);
        let min_eig = linalg::min_eigenvalue(&acf.toeplitz(PD_CHECK_LAGS + 1));
        if min_eig <= PD_CHECK_TOL {
            return Err(Error::NotPositiveDefinite(min_eig));
        }
        Ok(())
    }
}

fn eval_poly(coeffs: &[f64], z: Complex<f64>) -> Complex<f64> {
    // 1 + c_1 z + … + c_K z^K by Horner
    let mut acc = Complex::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        acc = (acc + c) * z;
    }
    acc + 1.0
}

/// Number of zeros of `1 + Σ c_j z^j` inside the closed unit disk, by the
/// argument principle on the unit circle. A zero on the circle is an error.
fn zeros_in_unit_disk(coeffs: &[f64]) -> Result<usize> {
    if coeffs.iter().all(|&c| c == 0.0) {
        return Ok(0);
    }
    let deriv_bound: f64 = coeffs.iter().enumerate().map(|(j, c)| (j + 1) as f64 * c.abs()).sum();
    let probe = 1024;
    let mut min_mod = f64::INFINITY;
    for i in 0..probe {
        let th = 2.0 * std::f64::consts::PI * i as f64 / probe as f64;
        min_mod = min_mod.min(eval_poly(coeffs, Complex::new(0.0, th).exp()).norm());
    }
    let scale = 1.0 + coeffs.iter().map(|c| c.abs()).sum::<f64>();
    if min_mod <= 1e-10 * scale {
        return Err(Error::NotInvertible("polynomial vanishes on the unit circle".into()));
    }
    let points = ((8.0 * deriv_bound / min_mod).ceil() as usize).clamp(1024, 1 << 22);
    let mut prev = eval_poly(coeffs, Complex::new(1.0, 0.0));
    let mut total = 0.0;
    for i in 1..=points {
        let th = 2.0 * std::f64::consts::PI * i as f64 / points as f64;
        let cur = eval_poly(coeffs, Complex::new(0.0, th).exp());
        total += (cur / prev).arg();
        prev = cur;
    }
    let winding = (total / (2.0 * std::f64::consts::PI)).round();
    Ok(winding.max(0.0) as usize)
}

fn check_stationary(ar: &[f64]) -> Result<()> {
    if ar.iter().any(|a| !a.is_finite()) {
        return Err(Error::InvalidArgument("AR coefficients must be finite".into()));
    }
    let p = ar.len();
    if p == 0 {
        return Ok(());
    }
    // e_t = -a_1 e_{t-1} - … - a_p e_{t-p}
    let companion = DMatrix::from_fn(p, p, |i, j| {
        if i == 0 {
            -ar[j]
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let radius = companion
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    if radius >= 1.0 {
        return Err(Error::NotStationary(radius));
    }
    Ok(())
}

/// Coefficients `c_1..c_len` of `(1 + Σ_j p_j z^j)^{-1}`.
fn invert_series(p: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for j in 1..=len {
        let mut s = 0.0;
        for i in 1..=j.min(p.len()) {
            let prev = if i == j { 1.0 } else { out[j - i - 1] };
            s -= p[i - 1] * prev;
        }
        out[j - 1] = s;
    }
    out
}

/// Autocovariances `γ_0..γ_L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocovarianceTable {
    values: Vec<f64>,
}

impl AutocovarianceTable {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        match values.first() {
            Some(&g0) if g0 > 0.0 && g0.is_finite() => {}
            _ => return Err(Error::InvalidArgument("γ_0 must be positive".into())),
        }
        if values.iter().any(|g| !g.is_finite() || g.abs() > values[0] * (1.0 + 1e-12)) {
            return Err(Error::InvalidArgument("autocovariances must satisfy |γ_j| ≤ γ_0".into()));
        }
        Ok(Self { values })
    }

    pub fn max_lag(&self) -> usize {
        self.values.len() - 1
    }

    pub fn gamma(&self, lag: usize) -> f64 {
        self.values[lag]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// The `n × n` Toeplitz matrix; requires `n - 1 ≤ max_lag`.
    pub fn toeplitz(&self, n: usize) -> DMatrix<f64> {
        assert!(n <= self.values.len(), "toeplitz({n}) needs lags up to {}", n - 1);
        linalg::toeplitz(&self.values, n)
    }
}

/// `γ_j = σ² Σ_i β_i β_{i+j}` with `β_0 = 1`.
pub fn autocovariances(spec: &ErrorProcessSpec, max_lag: usize) -> AutocovarianceTable {
    let mut beta = Vec::with_capacity(spec.truncation() + 1);
    beta.push(1.0);
    beta.extend_from_slice(&spec.ma_coefficients);
    let values = (0..=max_lag)
        .map(|j| {
            if j >= beta.len() {
                return 0.0;
            }
            let s: f64 = beta[..beta.len() - j].iter().zip(&beta[j..]).map(|(a, b)| a * b).sum();
            spec.innovation_variance * s
        })
        .collect();
    AutocovarianceTable { values }
}

/// AR(∞) coefficients `a_1..a_J` with `Σ a_j z^j = (Σ β_j z^j)^{-1}`.
pub fn ar_from_ma(spec: &ErrorProcessSpec, order: usize) -> Result<Vec<f64>> {
    if zeros_in_unit_disk(&spec.ma_coefficients)? > 0 {
        return Err(Error::NotInvertible("MA polynomial has roots inside the unit disk".into()));
    }
    Ok(invert_series(&spec.ma_coefficients, order))
}

/// Best linear predictor of order `k`: `e_t + a_1(k) e_{t-1} + … + a_k(k) e_{t-k}`
/// has minimal variance `σ²_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorCoefficients {
    pub order: usize,
    pub coefficients: Vec<f64>,
    pub innovation_variance: f64,
}

/// Runs the Levinson–Durbin recursion for orders `0..=max_order`, calling
/// `visit(coefficients, σ²_k)` at every order (order 0 yields `γ_0`).
pub fn levinson_durbin<F>(acf: &AutocovarianceTable, max_order: usize, mut visit: F) -> Result<()>
where
    F: FnMut(&[f64], f64),
{
    if max_order > acf.max_lag() {
        return Err(Error::InvalidArgument(format!(
            "order {max_order} needs lags up to {max_order}, table stops at {}",
            acf.max_lag()
        )));
    }
    let g0 = acf.gamma(0);
    let mut a: Vec<f64> = Vec::with_capacity(max_order);
    let mut prev: Vec<f64> = Vec::with_capacity(max_order);
    let mut sigma2 = g0;
    visit(&a, sigma2);
    for k in 1..=max_order {
        let mut num = acf.gamma(k);
        for (j, aj) in a.iter().enumerate() {
            num += aj * acf.gamma(k - 1 - j);
        }
        let kappa = -num / sigma2;
        if !kappa.is_finite() || kappa.abs() >= 1.0 {
            return Err(Error::Recursion { order: k, reason: format!("reflection coefficient {kappa}") });
        }
        prev.clear();
        prev.extend_from_slice(&a);
        for j in 0..k - 1 {
            a[j] = prev[j] + kappa * prev[k - 2 - j];
        }
        a.push(kappa);
        sigma2 *= 1.0 - kappa * kappa;
        if !(sigma2 > 0.0) || g0 / sigma2 > MAX_CONDITION {
            return Err(Error::Recursion {
                order: k,
                reason: format!("Toeplitz segment ill-conditioned (γ_0/σ² = {:.3e})", g0 / sigma2),
            });
        }
        visit(&a, sigma2);
    }
    Ok(())
}

pub fn best_linear_predictor(acf: &AutocovarianceTable, k: usize) -> Result<PredictorCoefficients> {
    if k == 0 {
        return Err(Error::InvalidArgument("predictor order must be at least 1".into()));
    }
    let mut out = None;
    levinson_durbin(acf, k, |a, s2| {
        if a.len() == k {
            out = Some(PredictorCoefficients { order: k, coefficients: a.to_vec(), innovation_variance: s2 });
        }
    })?;
    Ok(out.expect("recursion visits the final order"))
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Raw innovations `α_1..α_count`, scaled to the spec's variance.
pub fn draw_innovations(spec: &ErrorProcessSpec, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_for(seed);
    let var = spec.innovation_variance;
    match spec.innovation_distribution {
        InnovationDistribution::Gaussian => {
            let s = var.sqrt();
            (0..count).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect()
        }
        InnovationDistribution::StudentT { nu } => {
            let t = StudentT::new(nu).expect("nu validated at construction");
            let s = (var * (nu - 2.0) / nu).sqrt();
            (0..count).map(|_| s * rng.sample(t)).collect()
        }
    }
}

/// Simulates `e_1..e_n` after discarding `burn_in` start-up values.
pub fn simulate_errors(spec: &ErrorProcessSpec, n: usize, burn_in: usize, seed: u64) -> Result<DVector<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let k = spec.truncation();
    if burn_in < k {
        return Err(Error::InvalidArgument(format!("burn-in {burn_in} is shorter than the MA truncation {k}")));
    }
    spec.validate()?;
    let alpha = draw_innovations(spec, n + burn_in, seed);
    let beta = &spec.ma_coefficients;
    let e = DVector::from_fn(n, |i, _| {
        let t = burn_in + i;
        let mut s = alpha[t];
        for (j, b) in beta.iter().enumerate() {
            s += b * alpha[t - j - 1];
        }
        s
    });
    Ok(e)
}

/// Regression coefficient law `θ_1, θ_2, …`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThetaLaw {
    /// `θ_j = scale · j^{-exponent}`; summable for `exponent > 1`.
    PowerDecay { scale: f64, exponent: f64 },
    /// Explicit leading coefficients, zero afterwards.
    Explicit { values: Vec<f64> },
}

impl ThetaLaw {
    fn validate(&self) -> Result<()> {
        match self {
            Self::PowerDecay { scale, exponent } => {
                if !scale.is_finite() || !exponent.is_finite() {
                    return Err(Error::InvalidArgument("theta law parameters must be finite".into()));
                }
                if *exponent <= 1.0 {
                    return Err(Error::InvalidArgument(format!(
                        "θ_j = c·j^-{exponent} is not absolutely summable"
                    )));
                }
            }
            Self::Explicit { values } => {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("theta values must be finite".into()));
                }
            }
        }
        Ok(())
    }

    /// `θ_j` for `j ≥ 1`.
    pub fn coefficient(&self, j: usize) -> f64 {
        match self {
            Self::PowerDecay { scale, exponent } => scale * (j as f64).powf(-exponent),
            Self::Explicit { values } => values.get(j - 1).copied().unwrap_or(0.0),
        }
    }

    /// `Σ_{j>j_max} |θ_j|`.
    pub fn tail(&self, j_max: usize) -> f64 {
        match self {
            Self::Explicit { values } => values.iter().skip(j_max).map(|v| v.abs()).sum(),
            Self::PowerDecay { scale, exponent } => {
                // explicit head, Euler–Maclaurin for the rest
                let head = 1000;
                let s = *exponent;
                let mut sum: f64 = (j_max + 1..=j_max + head).map(|j| (j as f64).powf(-s)).sum();
                let m = (j_max + head + 1) as f64;
                sum += m.powf(1.0 - s) / (s - 1.0) + 0.5 * m.powf(-s) + s * m.powf(-s - 1.0) / 12.0
                    - s * (s + 1.0) * (s + 2.0) * m.powf(-s - 3.0) / 720.0;
                scale.abs() * sum
            }
        }
    }
}

/// How regressors and coefficients are generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub theta_law: ThetaLaw,
    /// Truncation of the infinite regression sum.
    pub j_max: usize,
    /// Replace the first regressor by a constant column.
    #[serde(default)]
    pub intercept: bool,
}

impl DesignSpec {
    pub fn validate(&self) -> Result<()> {
        if self.j_max == 0 {
            return Err(Error::InvalidArgument("j_max must be at least 1".into()));
        }
        self.theta_law.validate()
    }
}

/// A simulated (or supplied) regression `y = X θ + e`.
#[derive(Debug, Clone)]
pub struct RegressionInstance {
    pub x: DMatrix<f64>,
    pub theta: DVector<f64>,
    pub mu: DVector<f64>,
    /// `Σ_{j>j_max} |θ_j|`, the part of the mean the truncation drops.
    pub theta_tail: f64,
    pub y: Option<DVector<f64>>,
}

impl RegressionInstance {
    /// Hook for deterministic designs.
    pub fn from_design(x: DMatrix<f64>, theta: DVector<f64>) -> Result<Self> {
        if x.ncols() != theta.len() {
            return Err(Error::DimensionMismatch(format!("X has {} columns, θ has {}", x.ncols(), theta.len())));
        }
        let mu = &x * &theta;
        Ok(Self { x, theta, mu, theta_tail: 0.0, y: None })
    }

    /// Attaches `y = μ + e`.
    pub fn with_errors(mut self, e: &DVector<f64>) -> Result<Self> {
        if e.len() != self.mu.len() {
            return Err(Error::DimensionMismatch(format!("{} errors for {} rows", e.len(), self.mu.len())));
        }
        self.y = Some(&self.mu + e);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }
}

/// Draws `X` with i.i.d. standard normal entries (optionally a constant
/// first column) and forms `μ = X θ`.
pub fn simulate_design(design: &DesignSpec, n: usize, seed: u64) -> Result<RegressionInstance> {
    design.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let mut rng = rng_for(seed);
    let mut x = DMatrix::zeros(n, design.j_max);
    for t in 0..n {
        for j in 0..design.j_max {
            x[(t, j)] = rng.sample(StandardNormal);
        }
    }
    if design.intercept {
        x.column_mut(0).fill(1.0);
    }
    let theta = DVector::from_fn(design.j_max, |j, _| design.theta_law.coefficient(j + 1));
    let mut inst = RegressionInstance::from_design(x, theta)?;
    inst.theta_tail = design.theta_law.tail(design.j_max);
    Ok(inst)
}
