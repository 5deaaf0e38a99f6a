//! Dense complex linear algebra for small internal spaces.
//!
//! Matrices are stored row-major. Superoperators act on column-stacked
//! vectorizations: entry `(i, j)` of an `n x n` matrix lands at index
//! `j * n + i`, so the map `rho -> A rho B^*` has matrix `conj(B) ⊗ A`.

use std::fmt;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Relative tolerance below which singular values count as zero.
pub const DEFAULT_KERNEL_TOL: f64 = 1e-10;
/// Two eigenvalues whose real parts differ by less than this tie for the lead.
pub const DEGENERACY_TOL: f64 = 1e-9;
/// A normalized matrix whose trace is below this cannot be trace-normalized.
pub const TRACE_ZERO_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },
    #[error("matrix must be square, found {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("Schur iteration did not converge for a {0}x{0} matrix")]
    NoConvergence(usize),
    #[error("matrix is singular to working precision")]
    Singular,
}

/// Dense `rows x cols` complex matrix in row-major order.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.6e}{:+.6e}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(LinalgError::Shape {
                expected: format!("{} entries for a {rows}x{cols} matrix", rows * cols),
                found: format!("{} entries", data.len()),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
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
        Self { rows, cols, data }
    }

    /// Builds a matrix from real entries given row by row.
    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Result<Self, LinalgError> {
        Self::new(rows, cols, entries.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self, LinalgError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|row| row.len() != c) {
            return Err(LinalgError::Shape {
                expected: format!("rows of length {c}"),
                found: format!("a row of length {}", bad.len()),
            });
        }
        Self::new(r, c, rows.concat())
    }

    pub fn diag(values: &[C64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn diag_real(values: &[f64]) -> Self {
        Self::diag(&values.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dim(&self) -> usize {
        debug_assert!(self.is_square());
        self.rows
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn require_square(&self) -> Result<usize, LinalgError> {
        if self.is_square() {
            Ok(self.rows)
        } else {
            Err(LinalgError::NotSquare { rows: self.rows, cols: self.cols })
        }
    }

    pub fn require_shape(&self, rows: usize, cols: usize) -> Result<(), LinalgError> {
        if self.rows == rows && self.cols == cols {
            Ok(())
        } else {
            Err(LinalgError::Shape {
                expected: format!("{rows}x{cols}"),
                found: format!("{}x{}", self.rows, self.cols),
            })
        }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z.conj()).collect() }
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| z * s).collect() }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| z * s).collect() }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.cols).map(|j| (0..self.rows).map(|i| self[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Hilbert-Schmidt inner product `Tr(self^* other)`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    /// `Tr(self * other)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        let mut acc = ZERO;
        for i in 0..self.rows {
            for k in 0..self.cols {
                acc += self[(i, k)] * other[(k, i)];
            }
        }
        acc
    }

    /// `a * self * a^*`.
    pub fn conjugated_by(&self, a: &Self) -> Self {
        &(a * self) * &a.adjoint()
    }

    pub fn kron(&self, other: &Self) -> Self {
        let (r, c) = (self.rows * other.rows, self.cols * other.cols);
        Self::from_fn(r, c, |i, j| self[(i / other.rows, j / other.cols)] * other[(i % other.rows, j % other.cols)])
    }

    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| (self[(i, j)] + self[(j, i)].conj()) * 0.5)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (i..self.cols).all(|j| (self[(i, j)] - self[(j, i)].conj()).norm() <= tol))
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let n = self.dim();
        match n {
            1 => vec![self[(0, 0)].re],
            2 => {
                let a = self[(0, 0)].re;
                let c = self[(1, 1)].re;
                let b = (self[(0, 1)] + self[(1, 0)].conj()) * 0.5;
                let mid = 0.5 * (a + c);
                let rad = (0.25 * (a - c) * (a - c) + b.norm_sqr()).sqrt();
                vec![mid - rad, mid + rad]
            }
            _ => {
                let eig = self.hermitian_part().to_nalgebra().symmetric_eigenvalues();
                let mut v: Vec<f64> = eig.iter().copied().collect();
                v.sort_by(f64::total_cmp);
                v
            }
        }
    }

    /// Hermitian eigendecomposition `(values ascending, unitary with eigenvector columns)`.
    pub fn hermitian_eigen(&self) -> (Vec<f64>, ComplexMatrix) {
        let eig = self.hermitian_part().to_nalgebra().symmetric_eigen();
        let n = self.dim();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = Self::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
        (values, vectors)
    }

    /// Hermitian within `tol` and every eigenvalue `>= -tol`.
    pub fn is_psd(&self, tol: f64) -> bool {
        self.is_hermitian(tol.max(1e-12) * self.max_abs().max(1.0))
            && self.hermitian_eigenvalues().first().is_some_and(|&l| l >= -tol)
    }

    pub fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    pub fn from_nalgebra(m: &DMatrix<C64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }

    /// Solves `self * x = rhs` by LU with partial pivoting.
    pub fn solve(&self, rhs: &Self) -> Result<Self, LinalgError> {
        self.require_square()?;
        let lu = self.to_nalgebra().lu();
        lu.solve(&rhs.to_nalgebra()).map(|x| Self::from_nalgebra(&x)).ok_or(LinalgError::Singular)
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, rhs.rows, "matrix product shape mismatch");
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        out
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.scale_real(-1.0)
    }
}

impl AddAssign<&ComplexMatrix> for ComplexMatrix {
    fn add_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "matrix sum shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }
}

impl SubAssign<&ComplexMatrix> for ComplexMatrix {
    fn sub_assign(&mut self, rhs: &ComplexMatrix) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "matrix difference shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a -= b;
        }
    }
}

impl ComplexMatrix {
    /// `self += s * rhs`.
    pub fn axpy(&mut self, s: C64, rhs: &ComplexMatrix) {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols), "axpy shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += s * b;
        }
    }
}

/// Column-stacking vectorization.
pub fn vectorize(m: &ComplexMatrix) -> Result<Vec<C64>, LinalgError> {
    let n = m.require_square()?;
    let mut v = vec![ZERO; n * n];
    for i in 0..n {
        for j in 0..n {
            v[j * n + i] = m[(i, j)];
        }
    }
    Ok(v)
}

pub fn devectorize(v: &[C64], n: usize) -> Result<ComplexMatrix, LinalgError> {
    if n == 0 || v.len() != n * n {
        return Err(LinalgError::Shape {
            expected: format!("vector of length {}", n * n),
            found: format!("length {}", v.len()),
        });
    }
    Ok(ComplexMatrix::from_fn(n, n, |i, j| v[j * n + i]))
}

/// A linear map on `n x n` matrices, stored as its `n^2 x n^2` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Superoperator {
    dim: usize,
    matrix: ComplexMatrix,
}

impl Superoperator {
    pub fn from_matrix(dim: usize, matrix: ComplexMatrix) -> Result<Self, LinalgError> {
        matrix.require_shape(dim * dim, dim * dim)?;
        Ok(Self { dim, matrix })
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, matrix: ComplexMatrix::zeros(dim * dim, dim * dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { dim, matrix: ComplexMatrix::identity(dim * dim) }
    }

    /// The map `rho -> a rho b^*`.
    pub fn sandwich(a: &ComplexMatrix, b: &ComplexMatrix) -> Self {
        Self { dim: a.rows(), matrix: b.conj().kron(a) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn add_scaled(&mut self, s: C64, other: &Superoperator) {
        self.matrix.axpy(s, &other.matrix);
    }

    /// Adjoint with respect to the Hilbert-Schmidt pairing.
    pub fn adjoint(&self) -> Self {
        Self { dim: self.dim, matrix: self.matrix.adjoint() }
    }

    pub fn apply(&self, m: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
        m.require_shape(self.dim, self.dim)?;
        let v = vectorize(m)?;
        let n2 = self.dim * self.dim;
        let out: Vec<C64> = (0..n2).map(|i| (0..n2).map(|k| self.matrix[(i, k)] * v[k]).sum()).collect();
        devectorize(&out, self.dim)
    }
}

/// Degree-13 Padé numerator coefficients and the scaling thresholds for
/// each admissible degree (Higham 2005).
const PADE_THETA: [(usize, f64); 4] =
    [(3, 1.495585217958292e-2), (5, 2.539398330063230e-1), (7, 9.504178996162932e-1), (9, 2.097847961257068)];
const THETA_13: f64 = 5.371920351148152;

fn pade_coefficients(degree: usize) -> &'static [f64] {
    match degree {
        3 => &[120.0, 60.0, 12.0, 1.0],
        5 => &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0],
        7 => &[17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0],
        9 => &[
            17643225600.0,
            8821612800.0,
            2075673600.0,
            302702400.0,
            30270240.0,
            2162160.0,
            110880.0,
            3960.0,
            90.0,
            1.0,
        ],
        _ => &[
            64764752532480000.0,
            32382376266240000.0,
            7771770303897600.0,
            1187353796428800.0,
            129060195264000.0,
            10559470521600.0,
            670442572800.0,
            33522128640.0,
            1323241920.0,
            40840800.0,
            960960.0,
            16380.0,
            182.0,
            1.0,
        ],
    }
}

/// `exp(t A)` by scaling and squaring with a diagonal Padé approximant.
pub fn matrix_exponential(a: &ComplexMatrix, t: f64) -> Result<ComplexMatrix, LinalgError> {
    let n = a.require_square()?;
    if !a.is_finite() || !t.is_finite() {
        return Err(LinalgError::NonFinite("matrix exponential input"));
    }
    let a = a.scale_real(t);
    let norm = a.norm_one();
    let id = ComplexMatrix::identity(n);
    if norm == 0.0 {
        return Ok(id);
    }

    if let Some(&(degree, _)) = PADE_THETA.iter().find(|(_, theta)| norm <= *theta) {
        let b = pade_coefficients(degree);
        let a2 = &a * &a;
        let mut powers = vec![id.clone(), a2.clone()];
        for _ in 2..=degree / 2 {
            let next = &powers[powers.len() - 1] * &a2;
            powers.push(next);
        }
        let mut u = ComplexMatrix::zeros(n, n);
        let mut v = ComplexMatrix::zeros(n, n);
        for (k, p) in powers.iter().enumerate() {
            u.axpy(C64::new(b[2 * k + 1], 0.0), p);
            v.axpy(C64::new(b[2 * k], 0.0), p);
        }
        let u = &a * &u;
        return pade_quotient(&u, &v);
    }

    let s = ((norm / THETA_13).log2().ceil().max(0.0)) as i32;
    let a = a.scale_real(0.5f64.powi(s));
    let b = pade_coefficients(13);
    let c = |k: usize| C64::new(b[k], 0.0);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let mut inner_u = a6.scale(c(13));
    inner_u.axpy(c(11), &a4);
    inner_u.axpy(c(9), &a2);
    let mut u = &a6 * &inner_u;
    u.axpy(c(7), &a6);
    u.axpy(c(5), &a4);
    u.axpy(c(3), &a2);
    u.axpy(c(1), &id);
    let u = &a * &u;

    let mut inner_v = a6.scale(c(12));
    inner_v.axpy(c(10), &a4);
    inner_v.axpy(c(8), &a2);
    let mut v = &a6 * &inner_v;
    v.axpy(c(6), &a6);
    v.axpy(c(4), &a4);
    v.axpy(c(2), &a2);
    v.axpy(c(0), &id);

    let mut r = pade_quotient(&u, &v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

fn pade_quotient(u: &ComplexMatrix, v: &ComplexMatrix) -> Result<ComplexMatrix, LinalgError> {
    let p = v + u;
    let q = v - u;
    q.solve(&p)
}

/// Complex Schur-based eigendecomposition. Returns the eigenvalues and a
/// matrix whose columns are the corresponding unit-norm eigenvectors.
pub fn eigen_decomposition(a: &ComplexMatrix) -> Result<(Vec<C64>, ComplexMatrix), LinalgError> {
    let n = a.require_square()?;
    if !a.is_finite() {
        return Err(LinalgError::NonFinite("eigendecomposition input"));
    }
    if n == 1 {
        return Ok((vec![a[(0, 0)]], ComplexMatrix::identity(1)));
    }
    let schur =
        nalgebra::Schur::try_new(a.to_nalgebra(), f64::EPSILON, 100_000).ok_or(LinalgError::NoConvergence(n))?;
    let (q, t) = schur.unpack();
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    let values: Vec<C64> = (0..n).map(|k| t[(k, k)]).collect();
    let mut vectors = ComplexMatrix::zeros(n, n);
    for k in 0..n {
        let lambda = values[k];
        let mut y = vec![ZERO; n];
        y[k] = ONE;
        for j in (0..k).rev() {
            let s: C64 = (j + 1..=k).map(|l| t[(j, l)] * y[l]).sum();
            let mut denom = t[(j, j)] - lambda;
            if denom.norm() < f64::EPSILON * scale {
                denom = C64::new(f64::EPSILON * scale, 0.0);
            }
            y[j] = -s / denom;
        }
        let x = &q * &DVector::from_vec(y);
        let norm = x.norm();
        for i in 0..n {
            vectors[(i, k)] = x[i] / norm;
        }
    }
    Ok((values, vectors))
}

/// Eigenvalues only, from the diagonal of the complex Schur form.
pub fn eigenvalues(a: &ComplexMatrix) -> Result<Vec<C64>, LinalgError> {
    let n = a.require_square()?;
    if !a.is_finite() {
        return Err(LinalgError::NonFinite("eigenvalue input"));
    }
    if n == 1 {
        return Ok(vec![a[(0, 0)]]);
    }
    let schur =
        nalgebra::Schur::try_new(a.to_nalgebra(), f64::EPSILON, 100_000).ok_or(LinalgError::NoConvergence(n))?;
    let (_, t) = schur.unpack();
    Ok((0..n).map(|k| t[(k, k)]).collect())
}

/// Rescales `m` so that it is Hermitian with unit trace.
///
/// Division by the trace fixes the arbitrary phase of an eigen/kernel vector.
/// Returns `None` when the trace of the Frobenius-normalized input is below
/// [`TRACE_ZERO_TOL`].
pub fn hermitize_unit_trace(m: &ComplexMatrix) -> Option<ComplexMatrix> {
    let norm = m.frobenius_norm();
    if norm == 0.0 {
        return None;
    }
    let unit = m.scale_real(1.0 / norm);
    let tr = unit.trace();
    if tr.norm() < TRACE_ZERO_TOL {
        return None;
    }
    Some(unit.scale(tr.inv()).hermitian_part())
}

/// Devectorized right singular vectors of `s` whose singular values fall
/// below `tol` times the largest singular value.
pub fn kernel_basis(s: &Superoperator, tol: f64) -> Vec<ComplexMatrix> {
    kernel_basis_scaled(s, tol, 0.0)
}

/// Like [`kernel_basis`], but the threshold is `tol * max(sigma_max, scale)`.
///
/// A map assembled from terms of size `scale` that cancel to roundoff has a
/// tiny `sigma_max`; passing the term size keeps such a map recognized as zero.
pub fn kernel_basis_scaled(s: &Superoperator, tol: f64, scale: f64) -> Vec<ComplexMatrix> {
    let n = s.dim();
    let n2 = n * n;
    let Some(svd) = full_svd(s.matrix()) else {
        return Vec::new();
    };
    let sigma = svd.S().column_vector();
    let v = svd.V();
    let sigma_max = (0..n2).map(|k| sigma[k]).fold(0.0, |a: f64, b: C64| a.max(b.re));
    let reference = sigma_max.max(scale);
    let threshold = tol * reference;
    (0..n2)
        .filter(|&k| reference == 0.0 || sigma[k].re < threshold)
        .map(|k| {
            let col: Vec<C64> = (0..n2).map(|i| v[(i, k)]).collect();
            devectorize(&col, n).expect("length n^2 by construction")
        })
        .collect()
}

fn to_faer(a: &ComplexMatrix) -> faer::Mat<C64> {
    faer::Mat::from_fn(a.rows(), a.cols(), |i, j| a[(i, j)])
}

/// Full SVD through faer. nalgebra's bidiagonal SVD silently returns wrong
/// factors for some nearly rank-deficient inputs (e.g. Lindblad adjoints).
fn full_svd(a: &ComplexMatrix) -> Option<faer::linalg::solvers::Svd<C64>> {
    if !a.is_finite() {
        return None;
    }
    to_faer(a).svd().ok()
}

/// Minimum-norm least-squares solution of `a x = b`; singular values below
/// `rel_tol * sigma_max` are treated as zero.
pub fn least_squares(a: &ComplexMatrix, b: &[C64], rel_tol: f64) -> Result<Vec<C64>, LinalgError> {
    if b.len() != a.rows() {
        return Err(LinalgError::Shape {
            expected: format!("right-hand side of length {}", a.rows()),
            found: format!("length {}", b.len()),
        });
    }
    if b.iter().any(|z| !z.is_finite()) {
        return Err(LinalgError::NonFinite("least-squares right-hand side"));
    }
    let svd = full_svd(a).ok_or(LinalgError::NonFinite("least-squares matrix"))?;
    let (u, v) = (svd.U(), svd.V());
    let sigma = svd.S().column_vector();
    let k = a.rows().min(a.cols());
    let sigma_max = (0..k).map(|i| sigma[i].re).fold(0.0, f64::max);
    let cutoff = rel_tol * sigma_max;
    let mut x = vec![ZERO; a.cols()];
    for i in (0..k).filter(|&i| sigma[i].re > cutoff) {
        let coeff: C64 = (0..a.rows()).map(|r| u[(r, i)].conj() * b[r]).sum::<C64>() / sigma[i].re;
        for (j, xj) in x.iter_mut().enumerate() {
            *xj += v[(j, i)] * coeff;
        }
    }
    Ok(x)
}

/// Leading eigenpair of a superoperator.
#[derive(Clone, Debug)]
pub struct SpectralAbscissa {
    /// Maximal real part over the spectrum.
    pub abscissa: f64,
    pub eigenvalue: C64,
    /// Devectorized eigenvector; Hermitian with unit trace when `normalized`.
    pub eigenvector: ComplexMatrix,
    pub normalized: bool,
    /// More than one eigenvalue attains the maximal real part within
    /// [`DEGENERACY_TOL`].
    pub degenerate: bool,
}

pub fn leading_spectral_abscissa(s: &Superoperator) -> Result<SpectralAbscissa, LinalgError> {
    let (values, vectors) = eigen_decomposition(s.matrix())?;
    let lead = (0..values.len()).max_by(|&a, &b| values[a].re.total_cmp(&values[b].re)).expect("nonempty spectrum");
    let abscissa = values[lead].re;
    let ties = values.iter().filter(|z| (z.re - abscissa).abs() <= DEGENERACY_TOL).count();
    let n2 = values.len();
    let raw: Vec<C64> = (0..n2).map(|i| vectors[(i, lead)]).collect();
    let raw = devectorize(&raw, s.dim())?;
    let (eigenvector, normalized) = match hermitize_unit_trace(&raw) {
        Some(h) => (h, true),
        None => (raw, false),
    };
    Ok(SpectralAbscissa { abscissa, eigenvalue: values[lead], eigenvector, normalized, degenerate: ties > 1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_matrix(n: usize, entries: &[(f64, f64)]) -> ComplexMatrix {
        ComplexMatrix::from_fn(n, n, |i, j| {
            let (re, im) = entries[(i * n + j) % entries.len()];
            c(re, im)
        })
    }

    #[test]
    fn vectorize_is_column_stacking() {
        let m = ComplexMatrix::from_real(2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let v = vectorize(&m).unwrap();
        assert_eq!(v, vec![c(1., 0.), c(3., 0.), c(2., 0.), c(4., 0.)]);
        assert_eq!(vectorize(&ComplexMatrix::identity(2)).unwrap(), vec![ONE, ZERO, ZERO, ONE]);
    }

    #[test]
    fn vectorize_shape_errors() {
        let rect = ComplexMatrix::zeros(2, 3);
        assert!(matches!(vectorize(&rect), Err(LinalgError::NotSquare { .. })));
        assert!(matches!(devectorize(&[ONE; 5], 2), Err(LinalgError::Shape { .. })));
    }

    #[test]
    fn sandwich_matches_direct_product() {
        let a = random_matrix(3, &[(0.3, -0.1), (1.2, 0.4), (-0.7, 0.2), (0.05, 0.9)]);
        let b = random_matrix(3, &[(-0.4, 0.6), (0.1, 0.0), (0.8, -0.3)]);
        let rho = random_matrix(3, &[(0.5, 0.5), (-1.0, 0.25), (0.0, -0.6), (0.2, 0.1), (0.9, 0.0)]);
        let direct = &(&a * &rho) * &b.adjoint();
        let via = Superoperator::sandwich(&a, &b).apply(&rho).unwrap();
        assert!((&direct - &via).frobenius_norm() < 1e-14);
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let a = random_matrix(3, &[(0.3, -0.1), (1.2, 0.4), (-0.7, 0.2)]);
        let e = matrix_exponential(&a, 0.0).unwrap();
        assert_eq!(e, ComplexMatrix::identity(3));
    }

    #[test]
    fn exp_of_diagonal() {
        let a = ComplexMatrix::diag(&[c(0.7, 0.0), c(-2.5, 1.0)]);
        let e = matrix_exponential(&a, 1.0).unwrap();
        assert!((e[(0, 0)] - c(0.7f64.exp(), 0.0)).norm() < 1e-14 * 0.7f64.exp());
        let expected = c(-2.5, 1.0).exp();
        assert!((e[(1, 1)] - expected).norm() < 1e-12 * expected.norm());
        assert_eq!(e[(0, 1)], ZERO);
        // large norm exercises scaling and squaring
        let big = ComplexMatrix::diag_real(&[10.0, -30.0]);
        let e = matrix_exponential(&big, 1.0).unwrap();
        assert!((e[(0, 0)].re - 10f64.exp()).abs() < 1e-12 * 10f64.exp());
        assert!((e[(1, 1)].re - (-30f64).exp()).abs() < 1e-12 * (-30f64).exp());
    }

    #[test]
    fn exp_of_nilpotent() {
        let a = ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]).unwrap();
        let e = matrix_exponential(&a, 1.0).unwrap();
        let expected = ComplexMatrix::from_real(2, 2, &[1.0, 1.0, 0.0, 1.0]).unwrap();
        assert!((&e - &expected).frobenius_norm() < 1e-15);
    }

    #[test]
    fn exp_rejects_non_finite() {
        let mut a = ComplexMatrix::identity(2);
        a[(0, 1)] = c(f64::NAN, 0.0);
        assert!(matches!(matrix_exponential(&a, 1.0), Err(LinalgError::NonFinite(_))));
    }

    #[test]
    fn exp_of_rotation_generator() {
        // exp(t [[0, -1], [1, 0]]) is a rotation by t
        let a = ComplexMatrix::from_real(2, 2, &[0.0, -1.0, 1.0, 0.0]).unwrap();
        for &t in &[0.01, 0.3, 2.0, 17.0] {
            let e = matrix_exponential(&a, t).unwrap();
            let expected = ComplexMatrix::from_real(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()]).unwrap();
            assert!((&e - &expected).frobenius_norm() < 1e-13, "t = {t}");
        }
    }

    #[test]
    fn kernel_of_zero_and_identity() {
        let zero = Superoperator::zero(2);
        assert_eq!(kernel_basis(&zero, DEFAULT_KERNEL_TOL).len(), 4);
        let id = Superoperator::identity(2);
        assert!(kernel_basis(&id, DEFAULT_KERNEL_TOL).is_empty());
    }

    #[test]
    fn kernel_of_projection() {
        // rho -> rho - diag part keeps off-diagonals; kernel = diagonal matrices
        let mut s = Superoperator::identity(2);
        let p0 = ComplexMatrix::diag_real(&[1.0, 0.0]);
        let p1 = ComplexMatrix::diag_real(&[0.0, 1.0]);
        s.add_scaled(c(-1.0, 0.0), &Superoperator::sandwich(&p0, &p0));
        s.add_scaled(c(-1.0, 0.0), &Superoperator::sandwich(&p1, &p1));
        let k = kernel_basis(&s, DEFAULT_KERNEL_TOL);
        assert_eq!(k.len(), 2);
        for m in &k {
            assert!(m[(0, 1)].norm() < 1e-14 && m[(1, 0)].norm() < 1e-14);
            assert!(s.apply(m).unwrap().frobenius_norm() < 1e-14);
        }
    }

    #[test]
    fn spectral_abscissa_of_diagonal() {
        let s = Superoperator::from_matrix(2, ComplexMatrix::diag_real(&[-1.0, -2.0, -3.0, -4.0])).unwrap();
        let r = leading_spectral_abscissa(&s).unwrap();
        assert_eq!(r.abscissa, -1.0);
        assert!(!r.degenerate);
        // eigenvector e_(0,0) is Hermitian with unit trace
        assert!(r.normalized);
        assert!((&r.eigenvector - &ComplexMatrix::diag_real(&[1.0, 0.0])).frobenius_norm() < 1e-14);
    }

    #[test]
    fn spectral_abscissa_flags_ties() {
        let s = Superoperator::from_matrix(1, ComplexMatrix::diag_real(&[0.0])).unwrap();
        assert!(!leading_spectral_abscissa(&s).unwrap().degenerate);
        let s = Superoperator::zero(2);
        let r = leading_spectral_abscissa(&s).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.abscissa, 0.0);
    }

    #[test]
    fn eigen_decomposition_non_normal() {
        let a = ComplexMatrix::new(
            3,
            3,
            vec![
                c(1.0, 0.5),
                c(2.0, 0.0),
                c(0.0, -1.0),
                c(0.0, 0.0),
                c(-0.5, 0.0),
                c(3.0, 1.0),
                c(0.2, 0.0),
                c(0.0, 0.3),
                c(2.0, -1.0),
            ],
        )
        .unwrap();
        let (values, vectors) = eigen_decomposition(&a).unwrap();
        for k in 0..3 {
            let v = ComplexMatrix::from_fn(3, 1, |i, _| vectors[(i, k)]);
            let residual = &(&a * &v) - &v.scale(values[k]);
            assert!(residual.frobenius_norm() < 1e-12, "eigenpair {k}");
        }
        let tr: C64 = values.iter().sum();
        assert!((tr - a.trace()).norm() < 1e-12);
    }

    #[test]
    fn hermitize_rejects_traceless() {
        let m = ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, -1.0]).unwrap();
        assert!(hermitize_unit_trace(&m).is_none());
        let phased = ComplexMatrix::diag_real(&[0.4, 0.6]).scale(c(0.0, -3.0));
        let h = hermitize_unit_trace(&phased).unwrap();
        assert!((&h - &ComplexMatrix::diag_real(&[0.4, 0.6])).frobenius_norm() < 1e-15);
    }

    #[test]
    fn psd_predicate() {
        assert!(ComplexMatrix::diag_real(&[0.0, 2.0]).is_psd(1e-12));
        assert!(!ComplexMatrix::diag_real(&[-1e-6, 2.0]).is_psd(1e-8));
        let h = ComplexMatrix::from_rows(&[vec![c(1.0, 0.0), c(0.0, 1.0)], vec![c(0.0, -1.0), c(1.0, 0.0)]]).unwrap();
        assert!(h.is_hermitian(0.0));
        assert!(h.is_psd(1e-12));
        let mut three = ComplexMatrix::diag_real(&[1.0, 2.0, -0.5]);
        assert!(!three.is_psd(1e-10));
        three[(2, 2)] = c(0.5, 0.0);
        assert!(three.is_psd(1e-10));
    }

    #[test]
    fn least_squares_minimum_norm() {
        // rank-one system: x0 + x1 = 2 has minimum-norm solution (1, 1)
        let a = ComplexMatrix::from_real(2, 2, &[1.0, 1.0, 1.0, 1.0]).unwrap();
        let x = least_squares(&a, &[c(2.0, 0.0), c(2.0, 0.0)], 1e-12).unwrap();
        assert!((x[0] - ONE).norm() < 1e-14 && (x[1] - ONE).norm() < 1e-14);
    }

    fn arb_matrix(n: usize, bound: f64) -> impl Strategy<Value = ComplexMatrix> {
        prop::collection::vec((-bound..bound, -bound..bound), n * n)
            .prop_map(move |e| ComplexMatrix::new(n, n, e.into_iter().map(|(re, im)| c(re, im)).collect()).unwrap())
    }

    proptest! {
        #[test]
        fn devectorize_inverts_vectorize(m in (1usize..5).prop_flat_map(|n| arb_matrix(n, 10.0))) {
            let n = m.rows();
            let back = devectorize(&vectorize(&m).unwrap(), n).unwrap();
            prop_assert_eq!(back, m);
        }

        #[test]
        fn exponential_semigroup(m in arb_matrix(3, 0.35), s in 0.0f64..2.0, t in 0.0f64..2.0) {
            // entries bounded so the 1-norm stays <= ~1.5
            let lhs = matrix_exponential(&m, s + t).unwrap();
            let rhs = &matrix_exponential(&m, s).unwrap() * &matrix_exponential(&m, t).unwrap();
            prop_assert!((&lhs - &rhs).frobenius_norm() <= 1e-10 * lhs.frobenius_norm().max(1.0));
        }

        #[test]
        fn kernel_vectors_are_annihilated(m in arb_matrix(2, 1.0)) {
            // build a rank-deficient superoperator: rho -> m rho - rho m
            let mut s = Superoperator::sandwich(&m, &ComplexMatrix::identity(2));
            s.add_scaled(c(-1.0, 0.0), &Superoperator::sandwich(&ComplexMatrix::identity(2), &m.adjoint()));
            let tol = DEFAULT_KERNEL_TOL;
            let norm = s.matrix().frobenius_norm();
            let kernel = kernel_basis(&s, tol);
            prop_assert!(kernel.len() >= 2);
            for k in &kernel {
                let r = s.apply(k).unwrap().frobenius_norm();
                prop_assert!(r <= 10.0 * tol * norm * k.frobenius_norm() + 1e-300);
            }
        }
    }
}
