//! Dense linear-algebra helpers shared by the estimation modules.
//!
//! Matrices are stored densely; where a matrix is known to be banded the
//! bandwidth is carried alongside it so products can skip the zero region.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative tolerance used for numerical rank decisions.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Householder QR with column-norm pivoting.
///
/// The factorization is `A P = Q R`. Column norms are recomputed at every
/// step; the matrices handled here are tall and thin, so the extra cost does
/// not matter.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    qr: DMatrix<f64>,
    tau: Vec<f64>,
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    pub fn new(mut a: DMatrix<f64>, rel_tol: f64) -> Self {
        let (rows, cols) = a.shape();
        let steps = rows.min(cols);
        let mut perm: Vec<usize> = (0..cols).collect();
        let mut tau = vec![0.0; steps];
        let mut first_norm = 0.0;
        let mut rank = 0;

        for k in 0..steps {
            // pivot: largest remaining column norm
            let mut best = k;
            let mut best_norm = -1.0;
            for j in k..cols {
                let norm = a.view((k, j), (rows - k, 1)).norm();
                if norm > best_norm {
                    best_norm = norm;
                    best = j;
                }
            }
            if best != k {
                a.swap_columns(k, best);
                perm.swap(k, best);
            }
            if k == 0 {
                first_norm = best_norm;
            }
            if best_norm <= rel_tol * first_norm || best_norm == 0.0 {
                break;
            }
            rank += 1;

            let alpha = a[(k, k)];
            let beta = if alpha >= 0.0 { -best_norm } else { best_norm };
            let v0 = alpha - beta;
            for i in (k + 1)..rows {
                a[(i, k)] /= v0;
            }
            tau[k] = (beta - alpha) / beta;
            a[(k, k)] = beta;

            for j in (k + 1)..cols {
                let mut s = a[(k, j)];
                for i in (k + 1)..rows {
                    s += a[(i, k)] * a[(i, j)];
                }
                s *= tau[k];
                a[(k, j)] -= s;
                for i in (k + 1)..rows {
                    let vik = a[(i, k)];
                    a[(i, j)] -= s * vik;
                }
            }
        }

        Self { qr: a, tau, perm, rank }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn ncols(&self) -> usize {
        self.qr.ncols()
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.qr.ncols()
    }

    /// Overwrites `y` with `Qᵀ y`.
    pub fn q_tr_mul(&self, y: &mut DVector<f64>) {
        let rows = self.qr.nrows();
        for k in 0..self.rank {
            let mut s = y[k];
            for i in (k + 1)..rows {
                s += self.qr[(i, k)] * y[i];
            }
            s *= self.tau[k];
            y[k] -= s;
            for i in (k + 1)..rows {
                y[i] -= s * self.qr[(i, k)];
            }
        }
    }

    /// Overwrites `y` with `Q y`.
    pub fn q_mul(&self, y: &mut DVector<f64>) {
        let rows = self.qr.nrows();
        for k in (0..self.rank).rev() {
            let mut s = y[k];
            for i in (k + 1)..rows {
                s += self.qr[(i, k)] * y[i];
            }
            s *= self.tau[k];
            y[k] -= s;
            for i in (k + 1)..rows {
                y[i] -= s * self.qr[(i, k)];
            }
        }
    }

    /// Least-squares coefficients, in the original column order.
    pub fn solve(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let cols = self.qr.ncols();
        if !self.is_full_rank() {
            return Err(Error::RankDeficient { columns: cols, rank: self.rank });
        }
        let mut z = y.clone();
        self.q_tr_mul(&mut z);
        let mut coef = vec![0.0; cols];
        for k in (0..cols).rev() {
            let mut s = z[k];
            for j in (k + 1)..cols {
                s -= self.qr[(k, j)] * coef[j];
            }
            coef[k] = s / self.qr[(k, k)];
        }
        let mut out = DVector::zeros(cols);
        for (k, &p) in self.perm.iter().enumerate() {
            out[p] = coef[k];
        }
        Ok(out)
    }

    /// `y` minus its projection on the column space (restricted to the
    /// numerical rank).
    pub fn residual(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut z = y.clone();
        self.q_tr_mul(&mut z);
        for k in 0..self.rank {
            z[k] = 0.0;
        }
        self.q_mul(&mut z);
        z
    }
}

/// Half-bandwidth of a matrix: the largest `|i - j|` with a nonzero entry.
pub fn bandwidth(a: &DMatrix<f64>) -> usize {
    let (lower, upper) = band_limits(a);
    lower.max(upper)
}

/// Lower and upper bandwidths of a matrix.
pub fn band_limits(a: &DMatrix<f64>) -> (usize, usize) {
    let mut lower = 0;
    let mut upper = 0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            if a[(i, j)] != 0.0 {
                if i > j {
                    lower = lower.max(i - j);
                } else {
                    upper = upper.max(j - i);
                }
            }
        }
    }
    (lower, upper)
}

/// `A x` touching only the entries inside the given band.
pub fn band_matvec(a: &DMatrix<f64>, lower: usize, upper: usize, x: &DVector<f64>) -> DVector<f64> {
    let n = a.nrows();
    let m = a.ncols();
    let mut out = DVector::zeros(n);
    for i in 0..n {
        let lo = i.saturating_sub(lower);
        let hi = (i + upper).min(m.saturating_sub(1));
        let mut s = 0.0;
        for j in lo..=hi {
            s += a[(i, j)] * x[j];
        }
        out[i] = s;
    }
    out
}

/// `Aᵀ x` touching only the entries inside the band of `A`.
pub fn band_tr_matvec(a: &DMatrix<f64>, lower: usize, upper: usize, x: &DVector<f64>) -> DVector<f64> {
    let n = a.nrows();
    let m = a.ncols();
    let mut out = DVector::zeros(m);
    for j in 0..m {
        let lo = j.saturating_sub(upper);
        let hi = (j + lower).min(n.saturating_sub(1));
        let mut s = 0.0;
        for i in lo..=hi {
            s += a[(i, j)] * x[i];
        }
        out[j] = s;
    }
    out
}

/// Assembles `Tᵀ diag(1/d) T` for a lower-triangular `T` whose nonzeros lie
/// within `bw` subdiagonals. Entries outside the band are exact zeros.
pub fn banded_congruence(t: &DMatrix<f64>, bw: usize, d: &DVector<f64>) -> DMatrix<f64> {
    let n = t.nrows();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        let lo = i.saturating_sub(bw);
        let inv = 1.0 / d[i];
        for j in lo..=i {
            let tij = t[(i, j)] * inv;
            if tij == 0.0 {
                continue;
            }
            for k in lo..=i {
                out[(j, k)] += tij * t[(i, k)];
            }
        }
    }
    out
}

/// Symmetric Toeplitz matrix built from `γ_0..γ_{n-1}`.
pub fn toeplitz(gammas: &[f64], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| gammas[i.abs_diff(j)])
}

pub fn is_symmetric(a: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let n = a.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone()).eigenvalues.min()
}

/// `Σ^{-1/2}` by symmetric eigendecomposition, flooring eigenvalues at
/// `1e-12 · λ_max`.
pub fn inverse_sqrt(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !is_symmetric(sigma, 1e-10) {
        return Err(Error::NotSpd);
    }
    let eig = SymmetricEigen::new(sigma.clone());
    let lmax = eig.eigenvalues.max();
    if lmax <= 0.0 || eig.eigenvalues.min() <= 0.0 {
        return Err(Error::NotSpd);
    }
    let floor = 1e-12 * lmax;
    let scale = eig.eigenvalues.map(|l| 1.0 / l.max(floor).sqrt());
    let v = &eig.eigenvectors;
    let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| v[(i, j)] * scale[j]);
    Ok(&scaled * v.transpose())
}

/// Where a weighting matrix came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecisionOrigin {
    Identity,
    Exact,
    Estimated,
    Supplied,
}

/// A symmetric positive definite weighting matrix `W` together with a root
/// `S` satisfying `W = Sᵀ S`.
///
/// GLS computations whiten with `S`, so a banded root keeps fits linear in
/// `n`. When `W` is the identity, whitening is an exact copy.
#[derive(Debug, Clone)]
pub struct Precision {
    matrix: DMatrix<f64>,
    bandwidth: usize,
    root: DMatrix<f64>,
    root_lower: usize,
    root_upper: usize,
    origin: PrecisionOrigin,
}

impl Precision {
    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DMatrix::identity(n, n),
            bandwidth: 0,
            root: DMatrix::identity(n, n),
            root_lower: 0,
            root_upper: 0,
            origin: PrecisionOrigin::Identity,
        }
    }

    /// Wraps an arbitrary SPD matrix; the root is the transposed Cholesky
    /// factor.
    pub fn from_matrix(w: DMatrix<f64>) -> Result<Self> {
        if !is_symmetric(&w, 1e-10) {
            return Err(Error::NotSpd);
        }
        let n = w.nrows();
        if w == DMatrix::identity(n, n) {
            return Ok(Self::identity(n));
        }
        let chol = nalgebra::Cholesky::new(w.clone()).ok_or(Error::NotSpd)?;
        let root = chol.l().transpose();
        let (root_lower, root_upper) = band_limits(&root);
        let bandwidth = bandwidth(&w);
        Ok(Self { matrix: w, bandwidth, root, root_lower, root_upper, origin: PrecisionOrigin::Supplied })
    }

    /// Builds `Tᵀ D⁻¹ T` from a unit lower-triangular `T` with `bw`
    /// subdiagonals and a positive diagonal `D`.
    pub fn from_factors(t: &DMatrix<f64>, bw: usize, d: &DVector<f64>, origin: PrecisionOrigin) -> Self {
        let n = t.nrows();
        let matrix = banded_congruence(t, bw, d);
        let mut root = DMatrix::zeros(n, n);
        for i in 0..n {
            let s = d[i].sqrt();
            for j in i.saturating_sub(bw)..=i {
                root[(i, j)] = t[(i, j)] / s;
            }
        }
        Self { matrix, bandwidth: bw, root, root_lower: bw, root_upper: 0, origin }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn origin(&self) -> PrecisionOrigin {
        self.origin
    }

    pub fn is_identity(&self) -> bool {
        self.origin == PrecisionOrigin::Identity
    }

    /// `S v`.
    pub fn whiten(&self, v: &DVector<f64>) -> DVector<f64> {
        band_matvec(&self.root, self.root_lower, self.root_upper, v)
    }

    /// `S X`, column by column.
    pub fn whiten_columns(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        for j in 0..x.ncols() {
            let col = self.whiten(&x.column(j).into_owned());
            out.set_column(j, &col);
        }
        out
    }

    /// `W v` using the recorded bandwidth.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        band_matvec(&self.matrix, self.bandwidth, self.bandwidth, v)
    }

    /// `uᵀ W v`.
    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.whiten(u).dot(&self.whiten(v))
    }
}
