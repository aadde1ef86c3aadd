//! Dense complex Hermitian linear algebra.
//!
//! Everything the field-level modules evaluate pointwise lives here: a small
//! row-major complex matrix, the validated [`HermitianMatrix`] newtype, a
//! cyclic Jacobi eigensolver, functional calculus and the spectral
//! projections built on it, and the factorization `(a - eps)_+ = c* b c`.
//!
//! Matrices are expected to be small (n <= 16); nothing here is blocked or
//! vectorized.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix is not self-adjoint: max |a - a*| = {deviation:e} exceeds {allowed:e}")]
    NotHermitian { deviation: f64, allowed: f64 },
    #[error("matrix is not positive semidefinite: eigenvalue {min_eigenvalue:e} below -{threshold:e}")]
    NotPsd { min_eigenvalue: f64, threshold: f64 },
    #[error("Jacobi iteration did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("function is undefined at spectral value {value}")]
    Domain { value: f64 },
    #[error("eigenvalue {eigenvalue} lies within {threshold:e} of the cut point {eta}")]
    GapViolation {
        eta: f64,
        eigenvalue: f64,
        threshold: f64,
    },
    #[error("factorization residual {residual:e} exceeds {allowed:e}; is ||a - b|| < eps?")]
    FactorResidual { residual: f64, allowed: f64 },
    #[error("invalid tolerance: {0}")]
    InvalidTolerance(&'static str),
    #[error("environment variable {key} has unparseable value {value:?}")]
    InvalidEnv { key: &'static str, value: String },
}

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.4}{:+.4}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::ShapeMismatch {
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_complex(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// `self * alpha + other * beta`, entrywise.
    pub fn lincomb(&self, alpha: f64, other: &Self, beta: f64) -> Self {
        assert_eq!(self.shape(), other.shape(), "lincomb shape mismatch");
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a * alpha + b * beta)
                .collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a == ZERO {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Operator (spectral) norm, computed from the eigenvalues of `A* A`.
    pub fn op_norm(&self) -> f64 {
        if self.rows == 0 || self.cols == 0 {
            return 0.0;
        }
        let gram = HermitianMatrix::from_symmetrized(&self.adjoint().matmul(self));
        match hermitian_eig_with(&gram, DEFAULT_MAX_SWEEPS) {
            Ok(es) => es.eigenvalues.last().copied().unwrap_or(0.0).max(0.0).sqrt(),
            Err(_) => self.frobenius(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn column(&self, c: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    /// Keeps the first `k` columns.
    pub fn leading_columns(&self, k: usize) -> Self {
        Self::from_fn(self.rows, k, |r, c| self[(r, c)])
    }

    /// Columns `cols` in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        Self::from_fn(self.rows, cols.len(), |r, c| self[(r, cols[c])])
    }

    /// Horizontal concatenation.
    pub fn hstack(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "hstack row mismatch");
        Self::from_fn(self.rows, self.cols + other.cols, |r, c| {
            if c < self.cols {
                self[(r, c)]
            } else {
                other[(r, c - self.cols)]
            }
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Determinant by partial-pivot LU; only used on small square blocks.
    pub fn determinant(&self) -> C64 {
        assert_eq!(self.rows, self.cols, "determinant of non-square matrix");
        let n = self.rows;
        let mut a = self.clone();
        let mut det = ONE;
        for k in 0..n {
            let (piv, best) = (k..n)
                .map(|r| (r, a[(r, k)].norm()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best == 0.0 {
                return ZERO;
            }
            if piv != k {
                for c in 0..n {
                    let tmp = a[(k, c)];
                    a[(k, c)] = a[(piv, c)];
                    a[(piv, c)] = tmp;
                }
                det = -det;
            }
            let p = a[(k, k)];
            det *= p;
            for r in k + 1..n {
                let f = a[(r, k)] / p;
                for c in k..n {
                    let v = a[(k, c)];
                    a[(r, c)] -= f * v;
                }
            }
        }
        det
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        self.lincomb(1.0, rhs, 1.0)
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        self.lincomb(1.0, rhs, -1.0)
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs)
    }
}

/// Numeric cutoffs shared by every rank and residual decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative eigenvalue cutoff: eigenvalues at or below
    /// `rank_threshold * scale` count as zero.
    pub rank_threshold: f64,
    pub residual_tol: f64,
    pub max_jacobi_sweeps: usize,
}

pub const DEFAULT_MAX_SWEEPS: usize = 100;

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank_threshold: 1e-8,
            residual_tol: 1e-8,
            max_jacobi_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }
}

impl Tolerances {
    pub fn new(
        rank_threshold: f64,
        residual_tol: f64,
        max_jacobi_sweeps: usize,
    ) -> Result<Self, LinalgError> {
        let t = Self {
            rank_threshold,
            residual_tol,
            max_jacobi_sweeps,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), LinalgError> {
        if !(self.rank_threshold > 0.0) {
            return Err(LinalgError::InvalidTolerance("rank_threshold must be > 0"));
        }
        if !(self.residual_tol > 0.0) {
            return Err(LinalgError::InvalidTolerance("residual_tol must be > 0"));
        }
        if self.max_jacobi_sweeps == 0 {
            return Err(LinalgError::InvalidTolerance("max_jacobi_sweeps must be >= 1"));
        }
        Ok(())
    }

    /// Defaults overridden by `RANKHOM_RANK_THRESHOLD`, `RANKHOM_RESIDUAL_TOL`
    /// and `RANKHOM_MAX_SWEEPS` when set.
    pub fn from_env() -> Result<Self, LinalgError> {
        let mut t = Self::default();
        if let Some(v) = env_parse("RANKHOM_RANK_THRESHOLD")? {
            t.rank_threshold = v;
        }
        if let Some(v) = env_parse("RANKHOM_RESIDUAL_TOL")? {
            t.residual_tol = v;
        }
        if let Some(v) = env_parse("RANKHOM_MAX_SWEEPS")? {
            t.max_jacobi_sweeps = v;
        }
        t.validate()?;
        Ok(t)
    }

    /// Absolute eigenvalue cutoff for a matrix (or field) of the given norm.
    pub fn cutoff(&self, scale: f64) -> f64 {
        if scale > 0.0 {
            self.rank_threshold * scale
        } else {
            self.rank_threshold
        }
    }
}

/// Unset or empty variables give `None`; unparseable ones are an error.
fn env_parse<T: std::str::FromStr>(key: &'static str) -> Result<Option<T>, LinalgError> {
    match std::env::var(key) {
        Ok(s) if !s.trim().is_empty() => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| LinalgError::InvalidEnv { key, value: s }),
        _ => Ok(None),
    }
}

/// A validated self-adjoint square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    /// Validates self-adjointness: `max|a - a*| <= 1e-12 (1 + ||a||)`.
    /// The stored value is the symmetrized `(a + a*) / 2`.
    pub fn new(m: CMatrix) -> Result<Self, LinalgError> {
        if m.rows != m.cols {
            return Err(LinalgError::NotSquare {
                rows: m.rows,
                cols: m.cols,
            });
        }
        let deviation = (&m - &m.adjoint()).max_abs();
        let sym = Self::from_symmetrized(&m);
        let allowed = 1e-12 * (1.0 + sym.norm());
        if deviation > allowed {
            return Err(LinalgError::NotHermitian { deviation, allowed });
        }
        Ok(sym)
    }

    /// `(m + m*) / 2`, for matrices that are Hermitian by construction.
    pub fn from_symmetrized(m: &CMatrix) -> Self {
        assert_eq!(m.rows, m.cols, "symmetrize non-square matrix");
        let n = m.rows;
        let mut out = CMatrix::zeros(n, n);
        for r in 0..n {
            out[(r, r)] = C64::new(m[(r, r)].re, 0.0);
            for c in r + 1..n {
                let z = (m[(r, c)] + m[(c, r)].conj()) * 0.5;
                out[(r, c)] = z;
                out[(c, r)] = z.conj();
            }
        }
        Self(out)
    }

    pub fn zeros(n: usize) -> Self {
        Self(CMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(CMatrix::identity(n))
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        Self(CMatrix::from_real_diagonal(diag))
    }

    /// Projection onto the first `k` standard basis vectors of `C^n`.
    pub fn coordinate_projection(n: usize, k: usize) -> Self {
        let d: Vec<f64> = (0..n).map(|i| if i < k { 1.0 } else { 0.0 }).collect();
        Self::diagonal(&d)
    }

    /// `v v*` for a column vector / `V V*` for a frame.
    pub fn outer(frame: &CMatrix) -> Self {
        Self::from_symmetrized(&frame.matmul(&frame.adjoint()))
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    /// Operator norm, the largest absolute eigenvalue.
    pub fn norm(&self) -> f64 {
        match hermitian_eig_with(self, DEFAULT_MAX_SWEEPS) {
            Ok(es) => es
                .eigenvalues
                .iter()
                .fold(0.0_f64, |acc, l| acc.max(l.abs())),
            Err(_) => self.0.frobenius(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.scale(s))
    }

    /// `alpha * self + beta * other`.
    pub fn lincomb(&self, alpha: f64, other: &Self, beta: f64) -> Self {
        Self(self.0.lincomb(alpha, &other.0, beta))
    }

    /// `u a u*`.
    pub fn conjugate_by(&self, u: &CMatrix) -> Self {
        Self::from_symmetrized(&u.matmul(&self.0).matmul(&u.adjoint()))
    }

    /// Weighted sum `sum_i w_i m_i`; panics on an empty input.
    pub fn weighted_sum<'a>(terms: impl IntoIterator<Item = (f64, &'a HermitianMatrix)>) -> Self {
        let mut it = terms.into_iter();
        let (w0, m0) = it.next().expect("weighted_sum of no terms");
        let mut acc = m0.0.scale(w0);
        for (w, m) in it {
            for (a, b) in acc.data.iter_mut().zip(&m.0.data) {
                *a += b * w;
            }
        }
        Self(acc)
    }

    /// Distance in operator norm.
    pub fn dist(&self, other: &Self) -> f64 {
        self.sub(other).norm()
    }
}

/// Eigen-decomposition `a = V diag(lambda) V*` with ascending eigenvalues.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    pub basis: CMatrix,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `V diag(f(lambda)) V*`.
    pub fn reassemble(&self, mut f: impl FnMut(f64) -> f64) -> HermitianMatrix {
        let n = self.dim();
        let mut out = CMatrix::zeros(n, n);
        for (k, &lam) in self.eigenvalues.iter().enumerate() {
            let w = f(lam);
            if w == 0.0 {
                continue;
            }
            for r in 0..n {
                let vr = self.basis[(r, k)] * w;
                for c in 0..n {
                    out[(r, c)] += vr * self.basis[(c, k)].conj();
                }
            }
        }
        HermitianMatrix::from_symmetrized(&out)
    }

    /// Eigenvectors (as columns) whose eigenvalue satisfies `keep`,
    /// in ascending eigenvalue order.
    pub fn vectors_where(&self, keep: impl Fn(f64) -> bool) -> CMatrix {
        let idx: Vec<usize> = (0..self.dim())
            .filter(|&k| keep(self.eigenvalues[k]))
            .collect();
        self.basis.select_columns(&idx)
    }

    /// The `k` eigenvectors of largest eigenvalue, largest first.
    pub fn top_vectors(&self, k: usize) -> CMatrix {
        let n = self.dim();
        let idx: Vec<usize> = (0..k.min(n)).map(|i| n - 1 - i).collect();
        self.basis.select_columns(&idx)
    }

    pub fn count_above(&self, threshold: f64) -> usize {
        self.eigenvalues.iter().filter(|&&l| l > threshold).count()
    }
}

pub fn hermitian_eig(a: &HermitianMatrix, tol: &Tolerances) -> Result<EigenSystem, LinalgError> {
    hermitian_eig_with(a, tol.max_jacobi_sweeps)
}

/// Cyclic Jacobi for complex Hermitian matrices.
///
/// Each rotation first removes the phase of the pivot `a_pq` with a diagonal
/// unitary, then applies the real symmetric Jacobi rotation, so the combined
/// 2x2 unitary is `[[c, s], [-s e^{-i phi}, c e^{-i phi}]]`.
pub fn hermitian_eig_with(a: &HermitianMatrix, max_sweeps: usize) -> Result<EigenSystem, LinalgError> {
    let n = a.dim();
    let mut m = a.0.clone();
    let mut v = CMatrix::identity(n);
    if n == 0 {
        return Ok(EigenSystem {
            eigenvalues: vec![],
            basis: v,
        });
    }
    let scale = m.frobenius();
    let target = f64::EPSILON * scale.max(f64::MIN_POSITIVE);

    let off = |m: &CMatrix| -> f64 {
        let mut s = 0.0;
        for r in 0..n {
            for c in 0..n {
                if r != c {
                    s += m[(r, c)].norm_sqr();
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    loop {
        let residual = off(&m);
        if residual <= target || scale == 0.0 {
            break;
        }
        if sweeps >= max_sweeps {
            return Err(LinalgError::NoConvergence { sweeps, residual });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let b = m[(p, q)];
                let bn = b.norm();
                if bn == 0.0 {
                    continue;
                }
                let app = m[(p, p)].re;
                let aqq = m[(q, q)].re;
                // Skip entries that are negligible relative to both diagonals.
                if sweeps > 4 && app.abs() + 100.0 * bn == app.abs() && aqq.abs() + 100.0 * bn == aqq.abs() {
                    m[(p, q)] = ZERO;
                    m[(q, p)] = ZERO;
                    continue;
                }
                let phase = b / bn;
                let theta = (aqq - app) / (2.0 * bn);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let e = phase.conj();
                // U restricted to (p, q).
                let u_pp = C64::new(c, 0.0);
                let u_pq = C64::new(s, 0.0);
                let u_qp = e * (-s);
                let u_qq = e * c;
                // Columns: M <- M U
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = mkp * u_pp + mkq * u_qp;
                    m[(k, q)] = mkp * u_pq + mkq * u_qq;
                }
                // Rows: M <- U* M
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = u_pp.conj() * mpk + u_qp.conj() * mqk;
                    m[(q, k)] = u_pq.conj() * mpk + u_qq.conj() * mqk;
                }
                m[(p, q)] = ZERO;
                m[(q, p)] = ZERO;
                m[(p, p)] = C64::new(m[(p, p)].re, 0.0);
                m[(q, q)] = C64::new(m[(q, q)].re, 0.0);
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * u_pp + vkq * u_qp;
                    v[(k, q)] = vkp * u_pq + vkq * u_qq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    order.sort_by(|&i, &j| diag[i].total_cmp(&diag[j]).then(i.cmp(&j)));
    Ok(EigenSystem {
        eigenvalues: order.iter().map(|&i| diag[i]).collect(),
        basis: v.select_columns(&order),
    })
}

/// Eigensystem of a PSD matrix; eigenvalues in `[-cutoff, 0)` are clamped to 0.
fn psd_eig(a: &HermitianMatrix, tol: &Tolerances) -> Result<(EigenSystem, f64), LinalgError> {
    let mut es = hermitian_eig(a, tol)?;
    let scale = es
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, l| acc.max(l.abs()));
    let cutoff = tol.cutoff(scale);
    let min = es.eigenvalues.first().copied().unwrap_or(0.0);
    if min < -cutoff {
        return Err(LinalgError::NotPsd {
            min_eigenvalue: min,
            threshold: cutoff,
        });
    }
    for l in es.eigenvalues.iter_mut() {
        if *l < 0.0 {
            *l = 0.0;
        }
    }
    Ok((es, cutoff))
}

/// Numerical rank: eigenvalues above `rank_threshold * scale`.
pub fn rank_with_scale(a: &HermitianMatrix, scale: f64, tol: &Tolerances) -> Result<usize, LinalgError> {
    let es = hermitian_eig(a, tol)?;
    Ok(es.count_above(tol.cutoff(scale)))
}

/// Numerical rank relative to the matrix's own norm.
pub fn rank(a: &HermitianMatrix, tol: &Tolerances) -> Result<usize, LinalgError> {
    let es = hermitian_eig(a, tol)?;
    let scale = es
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, l| acc.max(l.abs()));
    Ok(es.count_above(tol.cutoff(scale)))
}

/// `f(a) = V diag(f(lambda)) V*` for PSD `a`.
pub fn functional_calculus(
    a: &HermitianMatrix,
    f: impl Fn(f64) -> f64,
    tol: &Tolerances,
) -> Result<HermitianMatrix, LinalgError> {
    let (es, _) = psd_eig(a, tol)?;
    let mut values = Vec::with_capacity(es.dim());
    for &lam in &es.eigenvalues {
        let y = f(lam);
        if !y.is_finite() {
            return Err(LinalgError::Domain { value: lam });
        }
        values.push(y);
    }
    let mut it = values.into_iter();
    Ok(es.reassemble(|_| it.next().unwrap_or(0.0)))
}

/// `(a - eps)_+`, functional calculus with `t -> max(t - eps, 0)`.
pub fn cut_epsilon(a: &HermitianMatrix, eps: f64, tol: &Tolerances) -> Result<HermitianMatrix, LinalgError> {
    if eps == 0.0 {
        let _ = psd_eig(a, tol)?;
        return Ok(a.clone());
    }
    functional_calculus(a, |t| (t - eps).max(0.0), tol)
}

/// The spectral projection onto eigenvalues strictly above `eta`.
pub fn spectral_projection(a: &HermitianMatrix, eta: f64, tol: &Tolerances) -> Result<HermitianMatrix, LinalgError> {
    let (es, cutoff) = psd_eig(a, tol)?;
    spectral_projection_from(&es, eta, cutoff)
}

pub(crate) fn spectral_projection_from(
    es: &EigenSystem,
    eta: f64,
    cutoff: f64,
) -> Result<HermitianMatrix, LinalgError> {
    if let Some(&lam) = es.eigenvalues.iter().find(|&&l| (l - eta).abs() <= cutoff) {
        return Err(LinalgError::GapViolation {
            eta,
            eigenvalue: lam,
            threshold: cutoff,
        });
    }
    Ok(es.reassemble(|l| if l > eta { 1.0 } else { 0.0 }))
}

/// Orthogonal projection onto the range of a PSD matrix.
pub fn support_projection(a: &HermitianMatrix, tol: &Tolerances) -> Result<HermitianMatrix, LinalgError> {
    let (es, cutoff) = psd_eig(a, tol)?;
    Ok(es.reassemble(|l| if l > cutoff { 1.0 } else { 0.0 }))
}

/// Nearest projection: eigenvalues above 1/2 go to 1, the rest to 0.
/// Also returns the smallest distance of any eigenvalue from 1/2.
pub fn spectral_retraction(a: &HermitianMatrix, tol: &Tolerances) -> Result<(HermitianMatrix, f64), LinalgError> {
    let es = hermitian_eig(a, tol)?;
    let gap = es
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |acc, l| acc.min((l - 0.5).abs()));
    Ok((es.reassemble(|l| if l > 0.5 { 1.0 } else { 0.0 }), gap))
}

/// `||p^2 - p||` together with the self-adjointness deviation of a projection candidate.
pub fn idempotency_residual(p: &HermitianMatrix) -> f64 {
    let sq = HermitianMatrix::from_symmetrized(&p.matrix().matmul(p.matrix()));
    sq.sub(p).norm()
}

/// `||q p - q||` and `||p q - q||`: how far `q <= p` is from holding.
pub fn domination_residual(q: &HermitianMatrix, p: &HermitianMatrix) -> f64 {
    let pq = p.matrix().matmul(q.matrix());
    (&pq - q.matrix()).op_norm()
}

/// Polar factor `X (X* X)^{-1/2}` restricted to the `keep` largest
/// singular directions of `X`. Returns the isometric part and the smallest
/// retained singular value.
pub fn polar_isometry(x: &CMatrix, keep: usize, tol: &Tolerances) -> Result<(CMatrix, f64), LinalgError> {
    let gram = HermitianMatrix::from_symmetrized(&x.adjoint().matmul(x));
    let es = hermitian_eig(&gram, tol)?;
    let m = es.dim();
    let keep = keep.min(m);
    let mut inv_sqrt = CMatrix::zeros(m, m);
    let mut sigma_min = f64::INFINITY;
    for i in 0..keep {
        let k = m - 1 - i;
        let lam = es.eigenvalues[k].max(0.0);
        let sigma = lam.sqrt();
        sigma_min = sigma_min.min(sigma);
        if sigma == 0.0 {
            continue;
        }
        let w = 1.0 / sigma;
        for r in 0..m {
            let vr = es.basis[(r, k)] * w;
            for c in 0..m {
                inv_sqrt[(r, c)] += vr * es.basis[(c, k)].conj();
            }
        }
    }
    if keep == 0 {
        sigma_min = f64::INFINITY;
    }
    Ok((x.matmul(&inv_sqrt), sigma_min))
}

/// Output of [`roerdam_factor`].
#[derive(Debug, Clone)]
pub struct RoerdamFactor {
    pub c: CMatrix,
    /// `||(a - eps)_+ - c* b c||`.
    pub residual: f64,
    /// `||c||`; at most 1 whenever `||a - b|| < eps`.
    pub norm: f64,
}

/// Finds `c` with `(a - eps)_+ = c* b c`, given `||a - b|| < eps`.
///
/// Let `W` span the eigenvectors of `a` with eigenvalue above `eps` and
/// `E = diag(lambda - eps)` on them. Since `a - eps <= b`, the compression
/// `B = W* b W` dominates `E > 0`, so `c = W B^{-1/2} E^{1/2} W*` satisfies
/// `c* b c = W E W* = (a - eps)_+` and `||c|| <= 1`. For `b = a` this is the
/// functional calculus of `a` with `t -> sqrt(max(t - eps, 0) / t)`.
pub fn roerdam_factor(
    a: &HermitianMatrix,
    b: &HermitianMatrix,
    eps: f64,
    tol: &Tolerances,
) -> Result<RoerdamFactor, LinalgError> {
    if a.dim() != b.dim() {
        return Err(LinalgError::ShapeMismatch {
            left: (a.dim(), a.dim()),
            right: (b.dim(), b.dim()),
        });
    }
    let n = a.dim();
    let (es_a, _) = psd_eig(a, tol)?;
    let _ = psd_eig(b, tol)?;
    let target = es_a.reassemble(|t| (t - eps).max(0.0));
    let a_norm = es_a.eigenvalues.last().copied().unwrap_or(0.0);
    let allowed = tol.residual_tol * (1.0 + a_norm);

    let idx: Vec<usize> = (0..n).filter(|&k| es_a.eigenvalues[k] > eps).collect();
    if idx.is_empty() {
        return Ok(RoerdamFactor {
            c: CMatrix::zeros(n, n),
            residual: target.matrix().max_abs(),
            norm: 0.0,
        });
    }
    let w = es_a.basis.select_columns(&idx);
    let compressed = HermitianMatrix::from_symmetrized(&w.adjoint().matmul(b.matrix()).matmul(&w));
    let es_b = hermitian_eig(&compressed, tol)?;
    let floor = tol.cutoff(a_norm.max(1.0));
    if es_b.eigenvalues[0] <= floor {
        return Err(LinalgError::FactorResidual {
            residual: f64::INFINITY,
            allowed,
        });
    }
    let b_inv_sqrt = es_b.reassemble(|t| 1.0 / t.sqrt());
    let m = idx.len();
    let mut e_sqrt = CMatrix::zeros(m, m);
    for (i, &k) in idx.iter().enumerate() {
        e_sqrt[(i, i)] = C64::new((es_a.eigenvalues[k] - eps).sqrt(), 0.0);
    }
    let c = w
        .matmul(b_inv_sqrt.matrix())
        .matmul(&e_sqrt)
        .matmul(&w.adjoint());
    let recon = HermitianMatrix::from_symmetrized(&c.adjoint().matmul(b.matrix()).matmul(&c));
    let residual = recon.dist(&target);
    if residual > allowed || !residual.is_finite() {
        return Err(LinalgError::FactorResidual { residual, allowed });
    }
    let norm = c.op_norm();
    Ok(RoerdamFactor { c, residual, norm })
}

/// Max |lambda_i(a) - lambda_i(b)| over sorted spectra.
pub fn spectral_distance(a: &HermitianMatrix, b: &HermitianMatrix, tol: &Tolerances) -> Result<f64, LinalgError> {
    let ea = hermitian_eig(a, tol)?;
    let eb = hermitian_eig(b, tol)?;
    Ok(ea
        .eigenvalues
        .iter()
        .zip(&eb.eigenvalues)
        .fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs())))
}
