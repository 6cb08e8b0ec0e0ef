//! Small dense complex matrices.
//!
//! Everything downstream works with matrices of size at most a few dozen
//! (band counts and occupied-space ranks), so the routines here favour
//! robustness over asymptotic speed: cyclic Jacobi for Hermitian spectra,
//! Parlett-Reid elimination for Pfaffians, and spectral formulas for the
//! unitary logarithm and exponential.

use std::f64::consts::PI;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (residual {residual:e})")]
    NonHermitian { residual: f64 },
    #[error("matrix is not skew-symmetric (residual {residual:e})")]
    NotSkew { residual: f64 },
    #[error("Pfaffian of odd dimension {0}")]
    OddDimension(usize),
    #[error("matrix is numerically singular (singular value ratio {ratio:e})")]
    NearSingular { ratio: f64 },
    #[error("matrix is not unitary (residual {residual:e})")]
    NotUnitary { residual: f64 },
    #[error("zero entry at position {0} of a phase path")]
    ZeroEntry(usize),
    #[error("phase jump {jump:.3} at step {index} is not below pi/2")]
    UndersampledPath { index: usize, jump: f64 },
    #[error("iteration did not converge")]
    NoConvergence,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

/// Row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix { rows, cols, data: vec![ZERO; rows * cols] }
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
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        CMatrix { rows, cols, data }
    }

    /// Builds a matrix from row-major entries; panics on a length mismatch.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols, "entry count does not match shape");
        CMatrix { rows, cols, data }
    }

    pub fn from_real(rows: usize, cols: usize, re: &[f64]) -> Self {
        Self::from_vec(rows, cols, re.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn diag_real(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = C64::new(x, 0.0);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn require_square(&self) -> Result<usize> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            Err(LinalgError::NonSquare { rows: self.rows, cols: self.cols })
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    pub fn scale(&self, s: C64) -> Self {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    /// `self^† · other` without forming the adjoint.
    pub fn adjoint_mul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.rows, other.rows, "adjoint_mul shape mismatch");
        let mut out = CMatrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            for i in 0..self.cols {
                let a = self[(k, i)].conj();
                if a == ZERO {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest singular value.
    pub fn norm2(&self) -> f64 {
        let g = self.adjoint_mul(self);
        match hermitian_eig(&g) {
            Ok(e) => e.values.last().copied().unwrap_or(0.0).max(0.0).sqrt(),
            Err(_) => self.frobenius(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, v: &[C64]) {
        for (i, &x) in v.iter().enumerate() {
            self[(i, j)] = x;
        }
    }

    /// Columns `start..start+count`.
    pub fn columns(&self, start: usize, count: usize) -> CMatrix {
        Self::from_fn(self.rows, count, |i, j| self[(i, start + j)])
    }

    pub fn submatrix(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> CMatrix {
        Self::from_fn(rows, cols, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn block_diag(a: &CMatrix, b: &CMatrix) -> CMatrix {
        let mut m = CMatrix::zeros(a.rows + b.rows, a.cols + b.cols);
        for i in 0..a.rows {
            for j in 0..a.cols {
                m[(i, j)] = a[(i, j)];
            }
        }
        for i in 0..b.rows {
            for j in 0..b.cols {
                m[(a.rows + i, a.cols + j)] = b[(i, j)];
            }
        }
        m
    }

    pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
        Self::from_fn(a.rows * b.rows, a.cols * b.cols, |i, j| {
            a[(i / b.rows, j / b.cols)] * b[(i % b.rows, j % b.cols)]
        })
    }

    pub fn hermitian_part(&self) -> CMatrix {
        Self::from_fn(self.rows, self.cols, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5)
    }

    pub fn anti_hermitian_part(&self) -> CMatrix {
        Self::from_fn(self.rows, self.cols, |i, j| (self[(i, j)] - self[(j, i)].conj()) * 0.5)
    }

    pub fn hermiticity_residual(&self) -> f64 {
        let mut r: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                r = r.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        r
    }

    pub fn skew_residual(&self) -> f64 {
        let mut r: f64 = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                r = r.max((self[(i, j)] + self[(j, i)]).norm());
            }
        }
        r
    }

    /// `max |(M^† M − 1)_{ij}|`.
    pub fn unitarity_residual(&self) -> f64 {
        let g = self.adjoint_mul(self);
        (&g - &CMatrix::identity(self.cols)).max_abs()
    }

    /// Determinant by LU with partial pivoting.
    pub fn det(&self) -> Result<C64> {
        let n = self.require_square()?;
        let mut a = self.clone();
        let mut det = ONE;
        for k in 0..n {
            let p = (k..n).max_by(|&x, &y| a[(x, k)].norm().total_cmp(&a[(y, k)].norm())).unwrap();
            if a[(p, k)] == ZERO {
                return Ok(ZERO);
            }
            if p != k {
                a.swap_rows(p, k);
                det = -det;
            }
            let piv = a[(k, k)];
            det *= piv;
            for i in k + 1..n {
                let f = a[(i, k)] / piv;
                if f == ZERO {
                    continue;
                }
                for j in k..n {
                    let t = a[(k, j)];
                    a[(i, j)] -= f * t;
                }
            }
        }
        Ok(det)
    }

    /// Inverse by Gauss-Jordan elimination with partial pivoting.
    pub fn inverse(&self) -> Result<CMatrix> {
        let n = self.require_square()?;
        let mut a = self.clone();
        let mut inv = CMatrix::identity(n);
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let p = (k..n).max_by(|&x, &y| a[(x, k)].norm().total_cmp(&a[(y, k)].norm())).unwrap();
            if a[(p, k)].norm() <= 1e-14 * scale {
                return Err(LinalgError::NearSingular { ratio: a[(p, k)].norm() / scale });
            }
            a.swap_rows(p, k);
            inv.swap_rows(p, k);
            let piv = a[(k, k)].inv();
            for j in 0..n {
                a[(k, j)] *= piv;
                inv[(k, j)] *= piv;
            }
            for i in 0..n {
                if i == k {
                    continue;
                }
                let f = a[(i, k)];
                if f == ZERO {
                    continue;
                }
                for j in 0..n {
                    let (x, y) = (a[(k, j)], inv[(k, j)]);
                    a[(i, j)] -= f * x;
                    inv[(i, j)] -= f * y;
                }
            }
        }
        Ok(inv)
    }

    fn swap_rows(&mut self, p: usize, q: usize) {
        if p == q {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(p * self.cols + j, q * self.cols + j);
        }
    }

    fn swap_cols(&mut self, p: usize, q: usize) {
        if p == q {
            return;
        }
        for i in 0..self.rows {
            self.data.swap(i * self.cols + p, i * self.cols + q);
        }
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, rhs.rows, "matrix product shape mismatch");
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let o = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (x, &b) in o.iter_mut().zip(row) {
                    *x += a * b;
                }
            }
        }
        out
    }
}

impl Mul for CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: CMatrix) -> CMatrix {
        &self * &rhs
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.scale_real(-1.0)
    }
}

/// Hermitian inner product `⟨a, b⟩ = Σ conj(a_i) b_i`.
pub fn vdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn vnorm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigen-decomposition of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct Eigh {
    /// Ascending.
    pub values: Vec<f64>,
    /// Unitary; column `i` belongs to `values[i]`.
    pub vectors: CMatrix,
}

/// Cyclic complex Jacobi diagonalization.
pub fn hermitian_eig(h: &CMatrix) -> Result<Eigh> {
    let n = h.require_square()?;
    let scale = h.max_abs();
    let res = h.hermiticity_residual();
    if res > 1e-10 * (1.0 + scale) {
        return Err(LinalgError::NonHermitian { residual: res });
    }
    let mut a = h.hermitian_part();
    let mut v = CMatrix::identity(n);
    let total = a.frobenius();
    let mut converged = n < 2;
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= 1e-15 * total || off == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r <= 1e-300 {
                    continue;
                }
                let ph = apq / r;
                let zeta = (a[(q, q)].re - a[(p, p)].re) / (2.0 * r);
                let t = if zeta == 0.0 {
                    1.0
                } else {
                    zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // columns: p' = c p − s e^{−iφ} q,  q' = s e^{iφ} p + c q
                let sp = ph * s;
                let spc = ph.conj() * s;
                for i in 0..n {
                    let (x, y) = (a[(i, p)], a[(i, q)]);
                    a[(i, p)] = x * c - spc * y;
                    a[(i, q)] = sp * x + y * c;
                    let (x, y) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = x * c - spc * y;
                    v[(i, q)] = sp * x + y * c;
                }
                for j in 0..n {
                    let (x, y) = (a[(p, j)], a[(q, j)]);
                    a[(p, j)] = x * c - sp * y;
                    a[(q, j)] = spc * x + y * c;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
            }
        }
    }
    if !converged {
        return Err(LinalgError::NoConvergence);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(x, x)].re.total_cmp(&a[(y, y)].re));
    let values = order.iter().map(|&i| a[(i, i)].re).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(Eigh { values, vectors })
}

fn check_skew(a: &CMatrix) -> Result<usize> {
    let n = a.require_square()?;
    let res = a.skew_residual();
    if res > 1e-9 * (1.0 + a.max_abs()) {
        return Err(LinalgError::NotSkew { residual: res });
    }
    if n % 2 == 1 {
        return Err(LinalgError::OddDimension(n));
    }
    Ok(n)
}

/// Pfaffian by Parlett-Reid elimination with partial pivoting.
pub fn pfaffian(a: &CMatrix) -> Result<C64> {
    let n = check_skew(a)?;
    let mut a = a.clone();
    let mut pf = ONE;
    let mut k = 0;
    while k + 1 < n {
        let kp = (k + 1..n).max_by(|&x, &y| a[(x, k)].norm().total_cmp(&a[(y, k)].norm())).unwrap();
        if kp != k + 1 {
            a.swap_rows(k + 1, kp);
            a.swap_cols(k + 1, kp);
            pf = -pf;
        }
        let piv = a[(k, k + 1)];
        if a[(k + 1, k)] == ZERO {
            return Ok(ZERO);
        }
        pf *= piv;
        if k + 2 < n {
            let tau: Vec<C64> = (k + 2..n).map(|j| a[(k, j)] / piv).collect();
            let col: Vec<C64> = (k + 2..n).map(|i| a[(i, k + 1)]).collect();
            for (ii, i) in (k + 2..n).enumerate() {
                for (jj, j) in (k + 2..n).enumerate() {
                    let upd = tau[ii] * col[jj] - col[ii] * tau[jj];
                    a[(i, j)] += upd;
                }
            }
        }
        k += 2;
    }
    Ok(pf)
}

/// Pfaffian by expansion along the first row. Exponential cost; a reference
/// for small matrices.
pub fn pfaffian_cofactor(a: &CMatrix) -> Result<C64> {
    check_skew(a)?;
    fn rec(a: &CMatrix, idx: &[usize]) -> C64 {
        if idx.is_empty() {
            return ONE;
        }
        let first = idx[0];
        let mut total = ZERO;
        for (pos, &j) in idx.iter().enumerate().skip(1) {
            let rest: Vec<usize> = idx.iter().copied().filter(|&x| x != first && x != j).collect();
            let sign = if pos % 2 == 1 { 1.0 } else { -1.0 };
            total += a[(first, j)] * rec(a, &rest) * sign;
        }
        total
    }
    let idx: Vec<usize> = (0..a.rows()).collect();
    Ok(rec(a, &idx))
}

/// Unitary factor of the polar decomposition, the nearest unitary in
/// Frobenius norm.
pub fn polar_unitary(m: &CMatrix) -> Result<CMatrix> {
    m.require_square()?;
    let g = m.adjoint_mul(m);
    let e = hermitian_eig(&g)?;
    let smax = e.values.last().copied().unwrap_or(0.0).max(0.0).sqrt();
    let smin = e.values.first().copied().unwrap_or(0.0).max(0.0).sqrt();
    if smax == 0.0 || smin <= 1e-10 * smax {
        return Err(LinalgError::NearSingular { ratio: if smax == 0.0 { 0.0 } else { smin / smax } });
    }
    let v = &e.vectors;
    let inv_sqrt = CMatrix::diag_real(&e.values.iter().map(|&x| 1.0 / x.sqrt()).collect::<Vec<_>>());
    let mut u = &(&(m * v) * &inv_sqrt) * &v.adjoint();
    // Newton-Schulz polishing
    let n = u.rows();
    for _ in 0..2 {
        let g = u.adjoint_mul(&u);
        let corr = &CMatrix::identity(n).scale_real(1.5) - &g.scale_real(0.5);
        u = &u * &corr;
    }
    Ok(u)
}

/// Eigenpairs of a unitary matrix; columns of the returned matrix are
/// orthonormal eigenvectors.
pub fn unitary_eig(w: &CMatrix) -> Result<(Vec<C64>, CMatrix)> {
    let n = w.require_square()?;
    let res = w.unitarity_residual();
    if res > 1e-8 {
        return Err(LinalgError::NotUnitary { residual: res });
    }
    let wd = w.adjoint();
    let h1 = (w + &wd).scale_real(0.5);
    let h2 = (w - &wd).scale(C64::new(0.0, -0.5));
    for &c in &[0.618_033_988_749_894_9, -1.324_717_957_244_746, 2.718_281_828_459_045, 0.123_456_789] {
        let f = &h1 + &h2.scale_real(c);
        let e = hermitian_eig(&f.hermitian_part())?;
        let v = e.vectors;
        let d = &v.adjoint_mul(w) * &v;
        let mut off: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off = off.max(d[(i, j)].norm());
                }
            }
        }
        if off <= 1e-9 {
            let lam = (0..n).map(|i| d[(i, i)]).collect();
            return Ok((lam, v));
        }
    }
    Err(LinalgError::NoConvergence)
}

fn principal_arg(z: C64) -> f64 {
    let t = z.arg();
    if t <= -PI + 1e-15 {
        PI
    } else {
        t
    }
}

/// Anti-Hermitian logarithm of a unitary matrix with eigenphases in (−π, π].
pub fn unitary_log(w: &CMatrix) -> Result<CMatrix> {
    let (lam, v) = unitary_eig(w)?;
    let d: Vec<C64> = lam.iter().map(|&z| C64::new(0.0, principal_arg(z))).collect();
    Ok(spectral(&v, &d))
}

/// Eigenphases of a unitary matrix, each in (−π, π].
pub fn unitary_phases(w: &CMatrix) -> Result<Vec<f64>> {
    Ok(unitary_eig(w)?.0.into_iter().map(principal_arg).collect())
}

fn spectral(v: &CMatrix, d: &[C64]) -> CMatrix {
    let n = v.rows();
    let mut vd = v.clone();
    for i in 0..n {
        for j in 0..n {
            vd[(i, j)] *= d[j];
        }
    }
    &vd * &v.adjoint()
}

/// `exp(L)` for anti-Hermitian `L`.
pub fn expm_anti_hermitian(l: &CMatrix) -> Result<CMatrix> {
    let h = l.scale(I);
    let e = hermitian_eig(&h.hermitian_part())?;
    let d: Vec<C64> = e.values.iter().map(|&x| C64::from_polar(1.0, -x)).collect();
    Ok(spectral(&e.vectors, &d))
}

/// A continuous branch of `arg z` along a sampled path.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePath {
    pub phases: Vec<f64>,
    pub winding: i64,
}

/// Tracks the phase of `z` along the path. For a closed path (last sample
/// equal to the first) the winding is exact.
pub fn phase_continue(z: &[C64]) -> Result<PhasePath> {
    let mut phases = Vec::with_capacity(z.len());
    for (i, &x) in z.iter().enumerate() {
        if x.norm() <= 1e-12 {
            return Err(LinalgError::ZeroEntry(i));
        }
        if i == 0 {
            phases.push(x.arg());
            continue;
        }
        let d = (x / z[i - 1]).arg();
        if d.abs() >= PI / 2.0 {
            return Err(LinalgError::UndersampledPath { index: i, jump: d });
        }
        phases.push(phases[i - 1] + d);
    }
    let winding = match (phases.first(), phases.last()) {
        (Some(a), Some(b)) => ((b - a) / (2.0 * PI)).round() as i64,
        _ => 0,
    };
    Ok(PhasePath { phases, winding })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        CMatrix::from_fn(n, n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn diagonal_spectrum() {
        let e = hermitian_eig(&CMatrix::diag_real(&[3.0, -1.0, 2.0])).unwrap();
        assert_eq!(e.values, vec![-1.0, 2.0, 3.0]);
        for j in 0..3 {
            let nonzero: Vec<usize> = (0..3).filter(|&i| e.vectors[(i, j)].norm() > 0.5).collect();
            assert_eq!(nonzero.len(), 1);
        }
        assert!(e.vectors[(1, 0)].norm() > 0.99);
    }

    #[test]
    fn pauli_x() {
        let sx = CMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let e = hermitian_eig(&sx).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14 && (e.values[1] - 1.0).abs() < 1e-14);
        let v0 = e.vectors.column(0);
        assert!((v0[0] + v0[1]).norm() < 1e-14);
    }

    #[test]
    fn random_hermitian_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&mut rng, 8);
        let h = (&a + &a.adjoint()).scale_real(0.5);
        let e = hermitian_eig(&h).unwrap();
        let recon = &(&e.vectors * &CMatrix::diag_real(&e.values)) * &e.vectors.adjoint();
        assert!((&recon - &h).max_abs() <= 1e-10);
        assert!(e.vectors.unitarity_residual() <= 1e-12);
        for i in 0..8 {
            let v = e.vectors.columns(i, 1);
            let r = (&(&h * &v) - &v.scale_real(e.values[i])).frobenius();
            assert!(r <= 1e-11 * (1.0 + h.norm2()));
        }
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = CMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(hermitian_eig(&m), Err(LinalgError::NonHermitian { .. })));
        assert!(matches!(hermitian_eig(&CMatrix::zeros(2, 3)), Err(LinalgError::NonSquare { .. })));
    }

    #[test]
    fn pfaffian_small_cases() {
        let a = C64::new(0.3, -1.2);
        let m = CMatrix::from_vec(2, 2, vec![ZERO, a, -a, ZERO]);
        assert_eq!(pfaffian(&m).unwrap(), a);
        let j = CMatrix::from_real(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let jj = CMatrix::block_diag(&j, &j);
        assert!((pfaffian(&jj).unwrap() - ONE).norm() < 1e-15);
        assert!(matches!(pfaffian(&CMatrix::zeros(3, 3)), Err(LinalgError::OddDimension(3))));
        assert!(matches!(pfaffian(&CMatrix::identity(2)), Err(LinalgError::NotSkew { .. })));
    }

    #[test]
    fn pfaffian_squares_to_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let b = random(&mut rng, 6);
            let a = (&b - &b.transpose()).scale_real(0.5);
            let pf = pfaffian(&a).unwrap();
            let det = a.det().unwrap();
            assert!((pf * pf - det).norm() <= 1e-11 * det.norm().max(1.0));
            assert!((pfaffian_cofactor(&a).unwrap() - pf).norm() <= 1e-12 * pf.norm().max(1.0));
        }
    }

    #[test]
    fn polar_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = polar_unitary(&random(&mut rng, 4)).unwrap();
        assert!(q.unitarity_residual() <= 1e-12);
        assert!((&polar_unitary(&q).unwrap() - &q).max_abs() <= 1e-13);
        let two = CMatrix::identity(3).scale_real(2.0);
        assert!((&polar_unitary(&two).unwrap() - &CMatrix::identity(3)).max_abs() <= 1e-14);
        let b = random(&mut rng, 4);
        let p = &b.adjoint_mul(&b) + &CMatrix::identity(4).scale_real(0.1);
        let m = &q * &p;
        assert!((&polar_unitary(&m).unwrap() - &q).max_abs() <= 1e-10);
        assert!(matches!(polar_unitary(&CMatrix::zeros(2, 2)), Err(LinalgError::NearSingular { .. })));
    }

    #[test]
    fn log_exp_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let q = polar_unitary(&random(&mut rng, 5)).unwrap();
            let l = unitary_log(&q).unwrap();
            assert!((&l + &l.adjoint()).max_abs() < 1e-12);
            let back = expm_anti_hermitian(&l).unwrap();
            assert!((&back - &q).max_abs() < 1e-11);
        }
        let minus = CMatrix::identity(2).scale_real(-1.0);
        let l = unitary_log(&minus).unwrap();
        assert!((l[(0, 0)] - C64::new(0.0, PI)).norm() < 1e-12);
    }

    #[test]
    fn phase_paths() {
        let c = vec![I; 10];
        assert_eq!(phase_continue(&c).unwrap().winding, 0);
        let n = 16;
        let one: Vec<C64> = (0..=n).map(|k| C64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64)).collect();
        assert_eq!(phase_continue(&one).unwrap().winding, 1);
        let n = 32;
        let three: Vec<C64> =
            (0..=n).map(|k| C64::from_polar(1.0, 2.0 * PI * 3.0 * k as f64 / n as f64)).collect();
        let p = phase_continue(&three).unwrap();
        assert_eq!(p.winding, 3);
        assert!(p.phases.windows(2).all(|w| (w[1] - w[0]).abs() < PI));
        assert!(matches!(phase_continue(&[ONE, ZERO]), Err(LinalgError::ZeroEntry(1))));
        assert!(matches!(phase_continue(&[ONE, -ONE]), Err(LinalgError::UndersampledPath { .. })));
    }
}
