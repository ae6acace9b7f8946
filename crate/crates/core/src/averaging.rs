//! GLS/FGLS candidate fits, Mallows-type averaging criteria and their
//! loss/risk counterparts, and exact minimisation over the sparse weight set
//! `H_N`.
//!
//! Every criterion is reduced to a quadratic `wᵀQw + bᵀw + c` in the weight
//! vector. The optimiser enumerates supports of size `1..=N`, solves the
//! equality-constrained KKT system for each subset of weights pinned at the
//! lower bound `δ`, and keeps the best feasible point.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, PivotedQr, Precision, PrecisionOrigin, RANK_TOLERANCE};

/// Result of one GLS regression.
#[derive(Debug, Clone, PartialEq)]
pub struct GlsFit {
    pub fitted: DVector<f64>,
    pub coefficients: DVector<f64>,
}

fn fit_whitened(x: &DMatrix<f64>, xs: DMatrix<f64>, ys: &DVector<f64>) -> Result<(GlsFit, DVector<f64>)> {
    let qr = PivotedQr::new(xs.clone(), RANK_TOLERANCE);
    if !qr.is_full_rank() {
        return Err(Error::RankDeficient { columns: xs.ncols(), rank: qr.rank() });
    }
    let coefficients = qr.solve(ys)?;
    let fitted = x * &coefficients;
    let whitened = xs * &coefficients;
    Ok((GlsFit { fitted, coefficients }, whitened))
}

/// `θ̂ = (XᵀWX)⁻¹XᵀWy` and the fitted vector `Xθ̂`.
pub fn gls_fit(x: &DMatrix<f64>, y: &DVector<f64>, w: &Precision) -> Result<GlsFit> {
    if x.nrows() != y.len() || w.dim() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "X is {}×{}, y has {}, W is {}",
            x.nrows(),
            x.ncols(),
            y.len(),
            w.dim()
        )));
    }
    Ok(fit_whitened(x, w.whiten_columns(x), &w.whiten(y))?.0)
}

/// Nested candidate fits sharing one weighting matrix. Model `m` uses the
/// first `sizes[m]` columns of `X`.
#[derive(Debug, Clone)]
pub struct CandidateFits {
    pub sizes: Vec<usize>,
    /// `n × M`, column `m` is `μ̂(m)`.
    pub fitted: DMatrix<f64>,
    pub coefficients: Vec<DVector<f64>>,
    pub origin: PrecisionOrigin,
    /// `S μ̂(m)` for the root `S` of the weighting matrix.
    whitened: DMatrix<f64>,
}

impl CandidateFits {
    pub fn len(&self) -> usize {
        self.sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sizes.is_empty()
    }

    pub fn n(&self) -> usize {
        self.fitted.nrows()
    }

    /// `μ̂(w) = Σ w_m μ̂(m)`.
    pub fn averaged(&self, weights: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.n());
        for (m, &wm) in weights.iter().enumerate() {
            if wm != 0.0 {
                out.axpy(wm, &self.fitted.column(m), 1.0);
            }
        }
        out
    }
}

fn check_sizes(sizes: &[usize], n: usize, cols: usize) -> Result<()> {
    if sizes.is_empty() {
        return Err(Error::InvalidArgument("need at least one candidate model".into()));
    }
    if sizes[0] == 0 || sizes.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::InvalidArgument(format!("model sizes must be strictly increasing and positive: {sizes:?}")));
    }
    let last = *sizes.last().unwrap();
    if last >= n || last > cols {
        return Err(Error::InvalidArgument(format!("largest model size {last} must be below n={n} and at most {cols}")));
    }
    Ok(())
}

pub fn build_candidates(x: &DMatrix<f64>, y: &DVector<f64>, sizes: &[usize], w: &Precision) -> Result<CandidateFits> {
    let n = y.len();
    if x.nrows() != n || w.dim() != n {
        return Err(Error::DimensionMismatch(format!("X has {} rows, y has {n}, W is {}", x.nrows(), w.dim())));
    }
    check_sizes(sizes, n, x.ncols())?;
    let kmax = *sizes.last().unwrap();
    let xm = x.columns(0, kmax).into_owned();
    let xs = w.whiten_columns(&xm);
    let ys = w.whiten(y);
    let m = sizes.len();
    let mut fitted = DMatrix::zeros(n, m);
    let mut whitened = DMatrix::zeros(n, m);
    let mut coefficients = Vec::with_capacity(m);
    for (idx, &k) in sizes.iter().enumerate() {
        let (fit, wf) = fit_whitened(&xm.columns(0, k).into_owned(), xs.columns(0, k).into_owned(), &ys)
            .map_err(|e| Error::Candidate { index: idx, source: Box::new(e) })?;
        fitted.set_column(idx, &fit.fitted);
        whitened.set_column(idx, &wf);
        coefficients.push(fit.coefficients);
    }
    Ok(CandidateFits { sizes: sizes.to_vec(), fitted, coefficients, origin: w.origin(), whitened })
}

/// Which formula a quadratic criterion encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    /// `C*` with exact `Σ⁻¹`.
    Amma,
    /// `Ĉ*` with an estimate `Σ̂⁻¹` (or the identity, giving MMA).
    Famma,
    /// `L*`, GLS fits measured in `Σ⁻¹`.
    GseLoss,
    /// `L^F`, FGLS fits measured in exact `Σ⁻¹`.
    FglsLoss,
    /// `R*`.
    Risk,
}

/// `value(w) = wᵀQw + bᵀw + c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticWeightCriterion {
    pub q: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
    pub kind: CriterionKind,
}

impl QuadraticWeightCriterion {
    pub fn new(q: DMatrix<f64>, b: DVector<f64>, c: f64, kind: CriterionKind) -> Result<Self> {
        if !q.is_square() || q.nrows() != b.len() || b.is_empty() {
            return Err(Error::DimensionMismatch(format!("Q is {:?}, b has {}", q.shape(), b.len())));
        }
        if q.iter().chain(b.iter()).any(|v| !v.is_finite()) || !c.is_finite() {
            return Err(Error::InvalidArgument("criterion has non-finite entries".into()));
        }
        if !linalg::is_symmetric(&q, 1e-10) {
            return Err(Error::InvalidArgument("Q must be symmetric".into()));
        }
        Ok(Self { q, b, c, kind })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        let support: Vec<usize> = (0..w.len()).filter(|&i| w[i] != 0.0).collect();
        let vals: Vec<f64> = support.iter().map(|&i| w[i]).collect();
        self.value_sparse(&support, &vals)
    }

    /// Value at the weight vector with `weights[i]` on `support[i]` and zero
    /// elsewhere. Every evaluation in the crate goes through here.
    pub fn value_sparse(&self, support: &[usize], weights: &[f64]) -> f64 {
        let mut quad = 0.0;
        for (i, &si) in support.iter().enumerate() {
            let mut row = 0.0;
            for (j, &sj) in support.iter().enumerate() {
                row += self.q[(si, sj)] * weights[j];
            }
            quad += weights[i] * row;
        }
        let lin: f64 = support.iter().zip(weights).map(|(&s, &w)| self.b[s] * w).sum();
        quad + lin + self.c
    }

    pub fn value_weights(&self, w: &WeightVector) -> f64 {
        let (s, v) = w.sparse();
        self.value_sparse(&s, &v)
    }
}

fn gram(v: &DMatrix<f64>) -> DMatrix<f64> {
    let m = v.ncols();
    let mut q = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            let d = v.column(i).dot(&v.column(j));
            q[(i, j)] = d;
            q[(j, i)] = d;
        }
    }
    q
}

fn mallows(fits: &CandidateFits, y: &DVector<f64>, w: &Precision, kind: CriterionKind) -> Result<QuadraticWeightCriterion> {
    if y.len() != fits.n() || w.dim() != fits.n() {
        return Err(Error::DimensionMismatch(format!("fits have n={}, y has {}, W is {}", fits.n(), y.len(), w.dim())));
    }
    if w.origin() != fits.origin {
        return Err(Error::InvalidArgument(format!(
            "fits were built with a {:?} weighting matrix, criterion uses {:?}",
            fits.origin,
            w.origin()
        )));
    }
    let ys = w.whiten(y);
    let q = gram(&fits.whitened);
    let b = DVector::from_fn(fits.len(), |m, _| -2.0 * ys.dot(&fits.whitened.column(m)) + 2.0 * fits.sizes[m] as f64);
    QuadraticWeightCriterion::new(q, b, ys.dot(&ys), kind)
}

/// `C*(w) = ‖y − μ̂(w)‖²_{Σ⁻¹} + 2 Σ w_m k_m` on GLS fits.
pub fn amma(fits: &CandidateFits, y: &DVector<f64>, w: &Precision) -> Result<QuadraticWeightCriterion> {
    mallows(fits, y, w, CriterionKind::Amma)
}

/// `Ĉ*(w)`: the same formula with `Σ̂⁻¹` in both the fits and the norm.
pub fn famma(fits: &CandidateFits, y: &DVector<f64>, w: &Precision) -> Result<QuadraticWeightCriterion> {
    mallows(fits, y, w, CriterionKind::Famma)
}

/// `L(w) = (μ̂(w) − μ)ᵀ Σ⁻¹ (μ̂(w) − μ)`. The weighting must be the exact
/// inverse covariance; FGLS fits give `L^F`.
pub fn gse_loss(fits: &CandidateFits, mu: &DVector<f64>, exact: &Precision) -> Result<QuadraticWeightCriterion> {
    if mu.len() != fits.n() || exact.dim() != fits.n() {
        return Err(Error::DimensionMismatch(format!("fits have n={}, μ has {}, W is {}", fits.n(), mu.len(), exact.dim())));
    }
    if exact.origin() == PrecisionOrigin::Estimated {
        return Err(Error::InvalidArgument("losses are measured in the exact inverse covariance".into()));
    }
    let m = fits.len();
    let mut errs = DMatrix::zeros(fits.n(), m);
    for j in 0..m {
        let diff = fits.fitted.column(j) - mu;
        errs.set_column(j, &exact.whiten(&diff));
    }
    let kind = if fits.origin == PrecisionOrigin::Estimated { CriterionKind::FglsLoss } else { CriterionKind::GseLoss };
    QuadraticWeightCriterion::new(gram(&errs), DVector::zeros(m), 0.0, kind)
}

/// One nonzero weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub index: usize,
    pub value: f64,
}

/// A point of `H_N`, stored sparsely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub len: usize,
    pub entries: Vec<WeightEntry>,
    pub sparsity: usize,
    pub delta: f64,
}

impl WeightVector {
    pub fn unit(len: usize, index: usize) -> Self {
        Self { len, entries: vec![WeightEntry { index, value: 1.0 }], sparsity: 1, delta: 0.0 }
    }

    pub fn dense(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.len];
        for e in &self.entries {
            w[e.index] = e.value;
        }
        w
    }

    pub fn support(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.index).collect()
    }

    pub fn sparse(&self) -> (Vec<usize>, Vec<f64>) {
        (self.support(), self.entries.iter().map(|e| e.value).collect())
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|e| e.value).sum()
    }

    /// Checks membership in `H_N` up to `tol` on the sum.
    pub fn check(&self, tol: f64) -> Result<()> {
        if self.entries.is_empty() || self.entries.len() > self.sparsity {
            return Err(Error::InvalidArgument(format!("support size {} outside 1..={}", self.entries.len(), self.sparsity)));
        }
        if self.entries.windows(2).any(|p| p[0].index >= p[1].index) || self.entries.iter().any(|e| e.index >= self.len) {
            return Err(Error::InvalidArgument("support indices must be sorted and in range".into()));
        }
        if let Some(e) = self.entries.iter().find(|e| !(e.value >= self.delta)) {
            return Err(Error::InvalidArgument(format!("weight {} on model {} is below δ={}", e.value, e.index, self.delta)));
        }
        if (self.sum() - 1.0).abs() > tol {
            return Err(Error::InvalidArgument(format!("weights sum to {}", self.sum())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    /// `N`, the largest support size.
    pub sparsity: usize,
    /// `δ`, the smallest nonzero weight.
    pub delta: f64,
    /// Largest number of supports enumerated exactly.
    pub support_cap: u64,
    /// Switch to greedy forward selection instead of failing at the cap.
    pub greedy_fallback: bool,
    /// Slack allowed on `w_i ≥ δ` for KKT solutions before clamping.
    pub feasibility_tolerance: f64,
    /// Supports within this relative gap of the minimum raise the ties flag.
    pub tie_tolerance: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            sparsity: 3,
            delta: 0.05,
            support_cap: 1_000_000,
            greedy_fallback: false,
            feasibility_tolerance: 1e-12,
            tie_tolerance: 1e-12,
        }
    }
}

impl OptimizerSettings {
    pub fn with_sparsity(self, sparsity: usize) -> Self {
        Self { sparsity, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sparsity == 0 {
            return Err(Error::InvalidArgument("N must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta * (self.sparsity as f64) < 1.0) {
            return Err(Error::InvalidArgument(format!("δ must satisfy 0 < δ < 1/N, got δ={} with N={}", self.delta, self.sparsity)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub weights: WeightVector,
    pub value: f64,
    pub supports_examined: u64,
    pub kkt_solves: u64,
    pub singular_solves: u64,
    pub skipped_supports: u64,
    pub ties: bool,
    /// False when the greedy fallback produced the result.
    pub exact: bool,
}

pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

/// Solves `A x = r` by Gaussian elimination with partial pivoting; `None`
/// when a pivot is negligible.
fn solve_small(mut a: Vec<f64>, mut r: Vec<f64>, k: usize) -> Option<Vec<f64>> {
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&i, &j| a[i * k + col].abs().total_cmp(&a[j * k + col].abs()))?;
        if a[piv * k + col].abs() <= 1e-13 * scale {
            return None;
        }
        if piv != col {
            for j in 0..k {
                a.swap(piv * k + j, col * k + j);
            }
            r.swap(piv, col);
        }
        let p = a[col * k + col];
        for i in (col + 1)..k {
            let f = a[i * k + col] / p;
            if f != 0.0 {
                for j in col..k {
                    a[i * k + j] -= f * a[col * k + j];
                }
                r[i] -= f * r[col];
            }
        }
    }
    let mut x = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = r[i];
        for j in (i + 1)..k {
            s -= a[i * k + j] * x[j];
        }
        x[i] = s / a[i * k + i];
    }
    Some(x)
}

/// Minimum-norm least-squares solve; `None` if the system is inconsistent.
fn solve_min_norm(a: &[f64], r: &[f64], k: usize) -> Option<Vec<f64>> {
    let m = DMatrix::from_row_slice(k, k, a);
    let rhs = DVector::from_column_slice(r);
    let scale = m.amax().max(1.0);
    let svd = m.clone().svd(true, true);
    let x = svd.solve(&rhs, 1e-12 * scale).ok()?;
    let resid = (&m * &x - &rhs).amax();
    if resid > 1e-9 * (scale + rhs.amax()) {
        return None;
    }
    Some(x.iter().copied().collect())
}

#[derive(Default)]
struct Counters {
    kkt_solves: u64,
    singular: u64,
}

/// Best point of `{w ≥ δ, Σw = 1}` restricted to `support`.
fn optimize_support(crit: &QuadraticWeightCriterion, support: &[usize], s: &OptimizerSettings, ctr: &mut Counters) -> Option<(Vec<f64>, f64)> {
    let l = support.len();
    if l == 1 {
        let w = vec![1.0];
        let v = crit.value_sparse(support, &w);
        return Some((w, v));
    }
    let delta = s.delta;
    let mut best: Option<(Vec<f64>, f64)> = None;
    // mask bit i set: weight i pinned at δ; the all-pinned mask is infeasible
    for mask in 0u32..((1u32 << l) - 1) {
        let free: Vec<usize> = (0..l).filter(|i| mask & (1 << i) == 0).collect();
        let pinned: Vec<usize> = (0..l).filter(|i| mask & (1 << i) != 0).collect();
        let budget = 1.0 - pinned.len() as f64 * delta;
        if budget < delta * free.len() as f64 - s.feasibility_tolerance {
            continue;
        }
        let f = free.len();
        let k = f + 1;
        let mut a = vec![0.0; k * k];
        let mut r = vec![0.0; k];
        for (i, &fi) in free.iter().enumerate() {
            let si = support[fi];
            for (j, &fj) in free.iter().enumerate() {
                a[i * k + j] = 2.0 * crit.q[(si, support[fj])];
            }
            a[i * k + f] = 1.0;
            a[f * k + i] = 1.0;
            let pin: f64 = pinned.iter().map(|&p| crit.q[(si, support[p])]).sum();
            r[i] = -(crit.b[si] + 2.0 * delta * pin);
        }
        r[f] = budget;
        ctr.kkt_solves += 1;
        let x = match solve_small(a.clone(), r.clone(), k) {
            Some(x) => x,
            None => {
                ctr.singular += 1;
                match solve_min_norm(&a, &r, k) {
                    Some(x) => x,
                    None => continue,
                }
            }
        };
        if x[..f].iter().any(|&v| !(v >= delta - s.feasibility_tolerance)) {
            continue;
        }
        let mut w = vec![delta; l];
        let mut free_sum = 0.0;
        for (i, &fi) in free.iter().enumerate() {
            w[fi] = x[i].max(delta);
            free_sum += w[fi];
        }
        let scale = budget / free_sum;
        for &fi in &free {
            w[fi] = (w[fi] * scale).max(delta);
        }
        let v = crit.value_sparse(support, &w);
        if best.as_ref().map_or(true, |(_, bv)| v < *bv) {
            best = Some((w, v));
        }
    }
    best
}

/// Calls `visit` on every sorted subset of `0..m` with size `1..=n`, in
/// order of size and then lexicographically.
fn for_each_support(m: usize, n: usize, mut visit: impl FnMut(&[usize])) {
    for l in 1..=n.min(m) {
        let mut idx: Vec<usize> = (0..l).collect();
        'next: loop {
            visit(&idx);
            let mut i = l;
            while i > 0 {
                i -= 1;
                if idx[i] < m - l + i {
                    idx[i] += 1;
                    for j in (i + 1)..l {
                        idx[j] = idx[j - 1] + 1;
                    }
                    continue 'next;
                }
            }
            break;
        }
    }
}

fn make_result(m: usize, s: &OptimizerSettings, support: Vec<usize>, w: Vec<f64>, value: f64) -> WeightVector {
    WeightVector {
        len: m,
        entries: support.into_iter().zip(w).map(|(index, value)| WeightEntry { index, value }).collect(),
        sparsity: s.sparsity,
        delta: if value.is_nan() { 0.0 } else { s.delta },
    }
}

/// Exact minimiser of a quadratic criterion over `H_N`.
///
/// Ties in value are broken towards the lexicographically smallest support,
/// which also prefers smaller supports.
pub fn minimize_over_hn(crit: &QuadraticWeightCriterion, settings: &OptimizerSettings) -> Result<OptimizationResult> {
    settings.validate()?;
    let m = crit.dim();
    let count: u128 = (1..=settings.sparsity.min(m) as u64).map(|l| binomial(m as u64, l)).sum();
    if count > settings.support_cap as u128 {
        if settings.greedy_fallback {
            return greedy_over_hn(crit, settings);
        }
        return Err(Error::EnumerationCap { count, cap: settings.support_cap as u128 });
    }
    let mut ctr = Counters::default();
    let mut examined = 0u64;
    let mut skipped = 0u64;
    let mut best: Option<(Vec<usize>, Vec<f64>, f64)> = None;
    let mut values: Vec<f64> = Vec::with_capacity(count as usize);
    for_each_support(m, settings.sparsity, |support| {
        examined += 1;
        match optimize_support(crit, support, settings, &mut ctr) {
            None => skipped += 1,
            Some((w, v)) => {
                values.push(v);
                let better = match &best {
                    None => true,
                    Some((bs, _, bv)) => v < *bv || (v == *bv && support < bs.as_slice()),
                };
                if better {
                    best = Some((support.to_vec(), w, v));
                }
            }
        }
    });
    let (support, w, value) = best.ok_or(Error::AllSupportsSingular(examined as usize))?;
    let tol = settings.tie_tolerance * value.abs().max(1.0);
    let near = values.iter().filter(|&&v| v - value <= tol).count();
    Ok(OptimizationResult {
        weights: make_result(m, settings, support, w, value),
        value,
        supports_examined: examined,
        kkt_solves: ctr.kkt_solves,
        singular_solves: ctr.singular,
        skipped_supports: skipped,
        ties: near > 1,
        exact: true,
    })
}

/// Forward selection of supports. Approximate: it need not find the minimum
/// over `H_N`.
pub fn greedy_over_hn(crit: &QuadraticWeightCriterion, settings: &OptimizerSettings) -> Result<OptimizationResult> {
    settings.validate()?;
    let m = crit.dim();
    let mut ctr = Counters::default();
    let mut examined = 0u64;
    let mut current: Option<(Vec<usize>, Vec<f64>, f64)> = None;
    for _ in 0..settings.sparsity.min(m) {
        let base: Vec<usize> = current.as_ref().map(|c| c.0.clone()).unwrap_or_default();
        let mut step: Option<(Vec<usize>, Vec<f64>, f64)> = None;
        for j in (0..m).filter(|j| !base.contains(j)) {
            let mut s = base.clone();
            s.push(j);
            s.sort_unstable();
            examined += 1;
            if let Some((w, v)) = optimize_support(crit, &s, settings, &mut ctr) {
                if step.as_ref().map_or(true, |(_, _, bv)| v < *bv) {
                    step = Some((s, w, v));
                }
            }
        }
        match (step, &current) {
            (Some(st), Some(cur)) if st.2 < cur.2 => current = Some(st),
            (Some(st), None) => current = Some(st),
            _ => break,
        }
    }
    let (support, w, value) = current.ok_or(Error::AllSupportsSingular(examined as usize))?;
    Ok(OptimizationResult {
        weights: make_result(m, settings, support, w, value),
        value,
        supports_examined: examined,
        kkt_solves: ctr.kkt_solves,
        singular_solves: ctr.singular,
        skipped_supports: 0,
        ties: false,
        exact: false,
    })
}

/// All points of the grid `H_n(N)`: weights in `{0, 1/N, …, 1}` summing to
/// one, in lexicographically decreasing order of the first weight.
pub fn grid_weights(m: usize, n: usize, cap: u64) -> Result<Vec<Vec<f64>>> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument("grid needs M ≥ 1 and N ≥ 1".into()));
    }
    let count = binomial((n + m - 1) as u64, (m - 1) as u64);
    if count > cap as u128 {
        return Err(Error::EnumerationCap { count, cap: cap as u128 });
    }
    let mut out = Vec::with_capacity(count as usize);
    let mut parts = vec![0usize; m];
    fn rec(pos: usize, left: usize, parts: &mut Vec<usize>, n: usize, out: &mut Vec<Vec<f64>>) {
        let m = parts.len();
        if pos == m - 1 {
            parts[pos] = left;
            out.push(parts.iter().map(|&p| p as f64 / n as f64).collect());
            return;
        }
        for v in (0..=left).rev() {
            parts[pos] = v;
            rec(pos + 1, left - v, parts, n, out);
        }
    }
    rec(0, n, &mut parts, n, &mut out);
    Ok(out)
}

/// Quotient of a selected loss and the infimum loss.
pub fn efficiency_ratio(numerator: f64, denominator: f64) -> Result<f64> {
    if !(denominator > 0.0) {
        return Err(Error::ZeroDenominator);
    }
    Ok(numerator / denominator)
}

/// `‖(I − P_m) z‖²` for each nested model, where `P_m` projects onto the
/// first `sizes[m]` columns of `xs`.
fn whitened_bias(z: &DVector<f64>, xs: &DMatrix<f64>, sizes: &[usize]) -> Result<Vec<f64>> {
    sizes
        .iter()
        .enumerate()
        .map(|(idx, &k)| {
            let qr = PivotedQr::new(xs.columns(0, k).into_owned(), RANK_TOLERANCE);
            if !qr.is_full_rank() {
                return Err(Error::Candidate { index: idx, source: Box::new(Error::RankDeficient { columns: k, rank: qr.rank() }) });
            }
            Ok(qr.residual(z).norm_squared())
        })
        .collect()
}

fn literal_bias(mu: &DVector<f64>, x: &DMatrix<f64>, sizes: &[usize], sigma: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = mu.len();
    if x.nrows() != n || sigma.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!("μ has {n}, X is {:?}, Σ is {:?}", x.shape(), sigma.shape())));
    }
    check_sizes(sizes, n, x.ncols())?;
    let root = linalg::inverse_sqrt(sigma)?;
    let kmax = *sizes.last().unwrap();
    let xs = &root * x.columns(0, kmax);
    whitened_bias(&(&root * mu), &xs, sizes)
}

fn risk_from_bias(w: &[f64], bias: &[f64], sizes: &[usize]) -> f64 {
    let mut r = 0.0;
    for m in 0..w.len() {
        for l in 0..w.len() {
            let hi = m.max(l);
            let lo = m.min(l);
            r += w[m] * w[l] * (bias[hi] + sizes[lo] as f64);
        }
    }
    r
}

/// `R*(w) = Σ_m Σ_l w_m w_l [μᵀΣ^{-1/2}(I − P_{max(m,l)})Σ^{-1/2}μ + min(k_m, k_l)]`
/// with `Σ^{-1/2}` from a symmetric eigendecomposition.
pub fn conditional_risk(w: &[f64], mu: &DVector<f64>, x: &DMatrix<f64>, sizes: &[usize], sigma: &DMatrix<f64>) -> Result<f64> {
    if w.len() != sizes.len() {
        return Err(Error::DimensionMismatch(format!("{} weights for {} models", w.len(), sizes.len())));
    }
    let bias = literal_bias(mu, x, sizes, sigma)?;
    Ok(risk_from_bias(w, &bias, sizes))
}

/// `D(m) = μᵀΣ^{-1/2}(I − P_m)Σ^{-1/2}μ + k_m` for every model and
/// `k* = min_m D(m)`.
pub fn single_model_risks(mu: &DVector<f64>, x: &DMatrix<f64>, sizes: &[usize], sigma: &DMatrix<f64>) -> Result<(Vec<f64>, f64)> {
    let bias = literal_bias(mu, x, sizes, sigma)?;
    Ok(collect_risks(&bias, sizes))
}

fn collect_risks(bias: &[f64], sizes: &[usize]) -> (Vec<f64>, f64) {
    let d: Vec<f64> = (0..sizes.len())
        .map(|m| {
            let mut w = vec![0.0; sizes.len()];
            w[m] = 1.0;
            risk_from_bias(&w, bias, sizes)
        })
        .collect();
    let kstar = d.iter().copied().fold(f64::INFINITY, f64::min);
    (d, kstar)
}

/// [`single_model_risks`] through any root `S` of `Σ⁻¹`; the bias term
/// `min_θ ‖S(μ − X_mθ)‖²` does not depend on which root is used.
pub fn single_model_risks_with(mu: &DVector<f64>, x: &DMatrix<f64>, sizes: &[usize], exact: &Precision) -> Result<(Vec<f64>, f64)> {
    let n = mu.len();
    if x.nrows() != n || exact.dim() != n {
        return Err(Error::DimensionMismatch(format!("μ has {n}, X has {} rows, W is {}", x.nrows(), exact.dim())));
    }
    check_sizes(sizes, n, x.ncols())?;
    let kmax = *sizes.last().unwrap();
    let xs = exact.whiten_columns(&x.columns(0, kmax).into_owned());
    let bias = whitened_bias(&exact.whiten(mu), &xs, sizes)?;
    Ok(collect_risks(&bias, sizes))
}

/// `R*` as a quadratic criterion.
pub fn risk_criterion(mu: &DVector<f64>, x: &DMatrix<f64>, sizes: &[usize], exact: &Precision) -> Result<QuadraticWeightCriterion> {
    let (d, _) = single_model_risks_with(mu, x, sizes, exact)?;
    let bias: Vec<f64> = d.iter().zip(sizes).map(|(dm, &k)| dm - k as f64).collect();
    let m = sizes.len();
    let q = DMatrix::from_fn(m, m, |i, j| bias[i.max(j)] + sizes[i.min(j)] as f64);
    QuadraticWeightCriterion::new(q, DVector::zeros(m), 0.0, CriterionKind::Risk)
}

/// `P_m = AᵀA`-projection onto the columns of `A = Σ^{-1/2} X_m`, as a dense
/// matrix. Meant for small `n`.
pub fn whitened_projection(x_m: &DMatrix<f64>, inv_sqrt: &DMatrix<f64>) -> DMatrix<f64> {
    let a = inv_sqrt * x_m;
    let q = a.qr().q();
    &q * q.transpose()
}

/// `|(C*(w) − L*(w)) − (eᵀWe + 2eᵀW(I − P*(w))μ − 2{eᵀWP*(w)e − Σ w_m k_m})|`
/// where `P*(w) = Σ w_m P*_m` and `e = y − μ`. Both sides are evaluated
/// directly from GLS projections with weighting `w`.
pub fn criterion_decomposition_check(
    x: &DMatrix<f64>,
    sizes: &[usize],
    y: &DVector<f64>,
    mu: &DVector<f64>,
    w: &Precision,
    weights: &[f64],
) -> Result<f64> {
    let fits = build_candidates(x, y, sizes, w)?;
    if weights.len() != fits.len() {
        return Err(Error::DimensionMismatch(format!("{} weights for {} models", weights.len(), fits.len())));
    }
    let e = y - mu;
    let mu_fits = build_candidates(x, mu, sizes, w)?;
    let e_fits = build_candidates(x, &e, sizes, w)?;
    let penalty: f64 = weights.iter().zip(sizes).map(|(wm, &k)| wm * k as f64).sum();

    let avg = fits.averaged(weights);
    let c_star = w.inner(&(y - &avg), &(y - &avg)) + 2.0 * penalty;
    let l_star = w.inner(&(&avg - mu), &(&avg - mu));

    let p_mu = mu_fits.averaged(weights);
    let p_e = e_fits.averaged(weights);
    let rhs = w.inner(&e, &e) + 2.0 * w.inner(&e, &(mu - p_mu)) - 2.0 * (w.inner(&e, &p_e) - penalty);
    Ok(((c_star - l_star) - rhs).abs())
}
