//! Dense complex linear algebra used throughout the crate.
//!
//! Matrices are stored row-major as [`Complex64`]. Only the kernels the
//! solvers and samplers need are provided: Hermitian eigenvalues (and
//! eigenvectors), LU inversion, Kronecker products, norms and a pivoted
//! Cholesky factorization for drawing correlated Gaussians.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::serde_complex::ComplexValue;

pub type C64 = Complex64;

/// Relative tolerance used to accept a matrix as Hermitian.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Relative pivot threshold below which a matrix is treated as singular.
pub const SINGULAR_TOL: f64 = 1e-14;

const MAX_QL_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is {rows}x{cols}, expected a square matrix")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian: defect {defect:e} exceeds tolerance {tolerance:e}")]
    NotHermitian { defect: f64, tolerance: f64 },
    #[error("matrix is numerically singular: pivot {pivot:e} below threshold {threshold:e}")]
    Singular { pivot: f64, threshold: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("entries length {len} does not match shape {rows}x{cols}")]
    BadShape { rows: usize, cols: usize, len: usize },
    #[error("matrix is not positive semidefinite: eigenvalue {min_eigenvalue:e}")]
    NotPsd { min_eigenvalue: f64 },
    #[error("tridiagonal QL iteration failed to converge")]
    NoConvergence,
}

/// Dense row-major complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let v = self[(r, c)];
                write!(f, "{:+.6e}{:+.6e}i ", v.re, v.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(LinalgError::BadShape { rows, cols, len: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn scalar(n: usize, value: C64) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = value;
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

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(v, 0.0);
        }
        m
    }

    /// Real matrix from nested rows. Panics on ragged input.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let cols = rows[0].len();
        Self::from_fn(rows.len(), cols, |r, c| {
            assert_eq!(rows[r].len(), cols, "ragged rows");
            C64::new(rows[r][c], 0.0)
        })
    }

    /// Matrix unit `E_{ij}` of size `n`.
    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(n, n);
        m[(i, j)] = C64::new(1.0, 0.0);
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

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[C64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(|v| v * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Trace divided by the dimension.
    pub fn normalized_trace(&self) -> C64 {
        self.trace() / self.rows as f64
    }

    /// `M + M*`, exactly Hermitian by construction.
    pub fn plus_adjoint(&self) -> Self {
        assert!(self.is_square(), "plus_adjoint needs a square matrix");
        Self::from_fn(self.rows, self.cols, |r, c| self[(r, c)] + self[(c, r)].conj())
    }

    /// Imaginary part `(M - M*) / 2i`, a Hermitian matrix.
    pub fn imaginary_part(&self) -> Self {
        assert!(self.is_square());
        let minus_half_i = C64::new(0.0, -0.5);
        Self::from_fn(self.rows, self.cols, |r, c| (self[(r, c)] - self[(c, r)].conj()) * minus_half_i)
    }

    pub fn real_part(&self) -> Self {
        assert!(self.is_square());
        Self::from_fn(self.rows, self.cols, |r, c| (self[(r, c)] + self[(c, r)].conj()) * 0.5)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// `max |M_ij - conj(M_ji)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut worst = 0.0f64;
        for r in 0..n {
            for c in r..n {
                worst = worst.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        worst
    }

    pub fn hermitian_tolerance(&self) -> f64 {
        HERMITIAN_TOL * (1.0 + self.frobenius_norm())
    }

    pub fn is_hermitian(&self) -> bool {
        self.is_square() && self.hermiticity_defect() <= self.hermitian_tolerance()
    }

    pub fn check_hermitian(&self) -> Result<(), LinalgError> {
        if !self.is_square() {
            return Err(LinalgError::NotSquare { rows: self.rows, cols: self.cols });
        }
        let defect = self.hermiticity_defect();
        let tolerance = self.hermitian_tolerance();
        if defect > tolerance {
            return Err(LinalgError::NotHermitian { defect, tolerance });
        }
        Ok(())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest singular value.
    pub fn operator_norm(&self) -> f64 {
        if self.is_hermitian() {
            return hermitian_eigenvalues(self)
                .map(|ev| ev.iter().fold(0.0f64, |m, v| m.max(v.abs())))
                .unwrap_or(f64::NAN);
        }
        let gram = &self.adjoint() * self;
        let ev = hermitian_eigenvalues(&gram.real_part()).unwrap_or_default();
        ev.last().copied().unwrap_or(0.0).max(0.0).sqrt()
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self, LinalgError> {
        if self.cols != rhs.rows {
            return Err(LinalgError::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * rhs.cols..(r + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let rhs_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self * self^*` with the lower triangle mirrored, so the result is
    /// exactly Hermitian.
    pub fn gram(&self) -> Self {
        let n = self.rows;
        let mut out = Self::zeros(n, n);
        for r in 0..n {
            let a = self.row(r);
            for c in 0..=r {
                let b = self.row(c);
                let v: C64 = a.iter().zip(b).map(|(x, y)| x * y.conj()).sum();
                out[(r, c)] = v;
                out[(c, r)] = v.conj();
            }
        }
        for i in 0..n {
            out[(i, i)].im = 0.0;
        }
        out
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in add");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl AddAssign<&ComplexMatrix> for ComplexMatrix {
    fn add_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in add");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in sub");
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl SubAssign<&ComplexMatrix> for ComplexMatrix {
    fn sub_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "shape mismatch in sub");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.map(|v| -v)
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("shape mismatch in mul")
    }
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<ComplexValue>> = (0..self.rows)
            .map(|r| self.row(r).iter().map(|&v| ComplexValue(v)).collect())
            .collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows: Vec<Vec<ComplexValue>> = Vec::deserialize(deserializer)?;
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(serde::de::Error::custom("matrix rows have unequal lengths"));
        }
        let data = rows.into_iter().flatten().map(|v| v.0).collect();
        ComplexMatrix::new(n_rows, n_cols, data).map_err(serde::de::Error::custom)
    }
}

/// Kronecker product: entry `(i*p + k, j*q + l)` equals `A[i][j] * B[k][l]`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (p, q) = (b.rows, b.cols);
    ComplexMatrix::from_fn(a.rows * p, a.cols * q, |r, c| a[(r / p, c / q)] * b[(r % p, c % q)])
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Result<Vec<f64>, LinalgError> {
    m.check_hermitian()?;
    let n = m.rows;
    let mut work = m.as_slice().to_vec();
    let tri = tridiagonalize(&mut work, n, false);
    let mut diag = tri.diag;
    let mut off = tri.off.iter().map(|e| e.norm()).collect::<Vec<_>>();
    off.push(0.0);
    tridiagonal_ql(&mut diag, &mut off, None)?;
    diag.sort_by(f64::total_cmp);
    Ok(diag)
}

/// Eigen-decomposition of a Hermitian matrix: ascending eigenvalues and the
/// matrix whose columns are the corresponding orthonormal eigenvectors.
pub fn hermitian_eigen(m: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix), LinalgError> {
    m.check_hermitian()?;
    let n = m.rows;
    let mut work = m.as_slice().to_vec();
    let tri = tridiagonalize(&mut work, n, true);
    let q = tri.q.expect("requested reflectors");

    // Diagonal unitary making the subdiagonal real and nonnegative.
    let mut phase = vec![C64::new(1.0, 0.0); n];
    for k in 0..tri.off.len() {
        let e = tri.off[k];
        let mag = e.norm();
        phase[k + 1] = if mag > 0.0 { phase[k] * e / mag } else { phase[k] };
    }
    let mut diag = tri.diag;
    let mut off = tri.off.iter().map(|e| e.norm()).collect::<Vec<_>>();
    off.push(0.0);
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    tridiagonal_ql(&mut diag, &mut off, Some(&mut z))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| diag[a].total_cmp(&diag[b]));
    let values = order.iter().map(|&i| diag[i]).collect();
    // V = Q * D * Z, columns reordered.
    let mut vectors = ComplexMatrix::zeros(n, n);
    for r in 0..n {
        for (new_c, &old_c) in order.iter().enumerate() {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..n {
                acc += q[(r, k)] * phase[k] * z[k * n + old_c];
            }
            vectors[(r, new_c)] = acc;
        }
    }
    Ok((values, vectors))
}

struct Tridiagonal {
    diag: Vec<f64>,
    /// `off[k]` is the (k+1, k) entry.
    off: Vec<C64>,
    q: Option<ComplexMatrix>,
}

/// Householder reduction of a Hermitian matrix (row-major, lower triangle
/// referenced through the full storage) to tridiagonal form.
fn tridiagonalize(a: &mut [C64], n: usize, want_q: bool) -> Tridiagonal {
    let zero = C64::new(0.0, 0.0);
    let mut q = want_q.then(|| ComplexMatrix::identity(n));
    let mut off = Vec::with_capacity(n.saturating_sub(1));
    let mut v = vec![zero; n];
    let mut p = vec![zero; n];

    for k in 0..n.saturating_sub(2) {
        let m = n - k - 1;
        let v = &mut v[..m];
        let p = &mut p[..m];
        for (i, vi) in v.iter_mut().enumerate() {
            *vi = a[(k + 1 + i) * n + k];
        }
        let tail_norm2: f64 = v[1..].iter().map(|x| x.norm_sqr()).sum();
        if tail_norm2 == 0.0 {
            off.push(v[0]);
            continue;
        }
        let x0 = v[0];
        let xnorm = (x0.norm_sqr() + tail_norm2).sqrt();
        let unit = if x0.norm() > 0.0 { x0 / x0.norm() } else { C64::new(1.0, 0.0) };
        let alpha = -unit * xnorm;
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x.norm_sqr()).sum();
        let tau = 2.0 / vnorm2;

        let base = k + 1;
        for i in 0..m {
            let row = &a[(base + i) * n + base..(base + i) * n + n];
            let s: C64 = row.iter().zip(v.iter()).map(|(aij, vj)| aij * vj).sum();
            p[i] = s * tau;
        }
        let vp: C64 = v.iter().zip(p.iter()).map(|(vi, pi)| vi.conj() * pi).sum();
        let kk = 0.5 * tau * vp.re;
        for i in 0..m {
            p[i] -= v[i] * kk;
        }
        // A22 -= v w* + w v*, with w stored in p.
        for i in 0..m {
            let vi = v[i];
            let wi = p[i];
            let row = &mut a[(base + i) * n + base..(base + i) * n + n];
            for (j, aij) in row.iter_mut().enumerate() {
                *aij -= vi * p[j].conj() + wi * v[j].conj();
            }
        }
        off.push(alpha);

        if let Some(q) = q.as_mut() {
            // Q <- Q (I - tau v v*)
            for r in 0..n {
                let row = &mut q.as_mut_slice()[r * n + base..r * n + n];
                let s: C64 = row.iter().zip(v.iter()).map(|(qr, vj)| qr * vj).sum();
                let s = s * tau;
                for (qr, vj) in row.iter_mut().zip(v.iter()) {
                    *qr -= s * vj.conj();
                }
            }
        }
    }
    if n >= 2 {
        off.push(a[(n - 1) * n + (n - 2)]);
    }
    let diag = (0..n).map(|i| a[i * n + i].re).collect();
    Tridiagonal { diag, off, q }
}

/// Implicit QL with Wilkinson-style shifts on a real symmetric tridiagonal
/// matrix. `off[i]` couples `i` and `i+1`; `off[n-1]` must be zero. When `z`
/// is given (row-major, initially identity), rotations are accumulated into
/// its columns.
fn tridiagonal_ql(d: &mut [f64], e: &mut [f64], mut z: Option<&mut [f64]>) -> Result<(), LinalgError> {
    let n = d.len();
    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > MAX_QL_SWEEPS {
                return Err(LinalgError::NoConvergence);
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(z) = z.as_deref_mut() {
                    for k in 0..n {
                        let f = z[k * n + i + 1];
                        z[k * n + i + 1] = s * z[k * n + i] + c * f;
                        z[k * n + i] = c * z[k * n + i] - s * f;
                    }
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Inverse by LU with partial pivoting.
pub fn invert(m: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    if !m.is_square() {
        return Err(LinalgError::NotSquare { rows: m.rows, cols: m.cols });
    }
    let n = m.rows;
    let threshold = SINGULAR_TOL * m.frobenius_norm();
    let mut lu = m.data.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (piv_row, piv_mag) = (k..n)
            .map(|r| (r, lu[r * n + k].norm()))
            .fold((k, -1.0), |best, cand| if cand.1 > best.1 { cand } else { best });
        if piv_mag <= threshold || piv_mag == 0.0 {
            return Err(LinalgError::Singular { pivot: piv_mag, threshold });
        }
        if piv_row != k {
            for c in 0..n {
                lu.swap(k * n + c, piv_row * n + c);
            }
            perm.swap(k, piv_row);
        }
        let pivot = lu[k * n + k];
        for r in k + 1..n {
            let factor = lu[r * n + k] / pivot;
            lu[r * n + k] = factor;
            if factor == C64::new(0.0, 0.0) {
                continue;
            }
            for c in k + 1..n {
                let u = lu[k * n + c];
                lu[r * n + c] -= factor * u;
            }
        }
    }
    // Solve LU X = P I column by column.
    let mut inv = ComplexMatrix::zeros(n, n);
    let mut col = vec![C64::new(0.0, 0.0); n];
    for j in 0..n {
        for (i, ci) in col.iter_mut().enumerate() {
            *ci = if perm[i] == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
        }
        for i in 0..n {
            let mut s = col[i];
            for k in 0..i {
                s -= lu[i * n + k] * col[k];
            }
            col[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in i + 1..n {
                s -= lu[i * n + k] * col[k];
            }
            col[i] = s / lu[i * n + i];
        }
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    Ok(inv)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &ComplexMatrix) -> Result<f64, LinalgError> {
    Ok(hermitian_eigenvalues(m)?[0])
}

/// Pivoted Cholesky factor `L` (n x n, lower triangular up to the pivot
/// permutation) with `L L* = M` for a Hermitian PSD matrix. Columns whose
/// remaining pivot falls below `rel_tol * max_diag` are left at zero, which
/// handles rank-deficient covariances.
pub fn pivoted_cholesky(m: &ComplexMatrix, rel_tol: f64) -> Result<ComplexMatrix, LinalgError> {
    m.check_hermitian()?;
    let n = m.rows;
    let mut work = m.real_part();
    let max_diag = (0..n).map(|i| work[(i, i)].re).fold(0.0f64, f64::max);
    let cutoff = rel_tol * max_diag.max(f64::MIN_POSITIVE);
    let mut l = ComplexMatrix::zeros(n, n);
    let mut remaining: Vec<usize> = (0..n).collect();
    while let Some((pos, &piv)) = remaining
        .iter()
        .enumerate()
        .max_by(|a, b| work[(*a.1, *a.1)].re.total_cmp(&work[(*b.1, *b.1)].re))
    {
        let dpiv = work[(piv, piv)].re;
        if dpiv <= cutoff {
            if dpiv < -cutoff.max(1e-10 * max_diag) {
                return Err(LinalgError::NotPsd { min_eigenvalue: dpiv });
            }
            break;
        }
        remaining.swap_remove(pos);
        let root = dpiv.sqrt();
        let col = n - remaining.len() - 1;
        l[(piv, col)] = C64::new(root, 0.0);
        for &r in &remaining {
            l[(r, col)] = work[(r, piv)] / root;
        }
        for &r in &remaining {
            for &c in &remaining {
                let upd = l[(r, col)] * l[(c, col)].conj();
                work[(r, c)] -= upd;
            }
        }
    }
    Ok(l)
}
