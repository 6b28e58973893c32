//! Dense row-major matrices and Cholesky factors.
//!
//! Only what the GP code needs: symmetric positive definite factorization,
//! triangular solves and a handful of products. Rows are contiguous, so all
//! inner loops are written as dot products or axpys over rows.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data. Returns `None` on a length mismatch.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == rows * cols).then_some(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Option<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return None;
            }
            data.extend_from_slice(r);
        }
        Some(Self { rows: rows.len(), cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `self + c·I` for a square matrix.
    pub fn add_diagonal(&self, c: f64) -> Self {
        let mut m = self.clone();
        for i in 0..self.rows.min(self.cols) {
            m[(i, i)] += c;
        }
        m
    }

    /// Frobenius norm.
    pub fn frobenius(&self) -> f64 {
        math::sqrt(self.data.iter().map(|x| x * x).sum())
    }

    pub fn sub(&self, other: &Matrix) -> Matrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Matrix { rows: self.rows, cols: self.cols, data }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Dot product with four independent accumulators.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..n {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn squared_norm(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `y += alpha · x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

const PIVOT_TOL: f64 = 16.0 * f64::EPSILON;

/// Returned when a matrix is not numerically positive definite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NotPositiveDefinite {
    pub pivot: usize,
}

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    l: Matrix,
}

impl Cholesky {
    /// Factorizes a symmetric positive definite matrix. Only the lower
    /// triangle of `a` is read.
    pub fn new(a: &Matrix) -> Result<Self, NotPositiveDefinite> {
        assert_eq!(a.rows, a.cols, "Cholesky needs a square matrix");
        let n = a.rows;
        let mut l = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let s = {
                    let li = &l.data[i * n..i * n + j];
                    let lj = &l.data[j * n..j * n + j];
                    a[(i, j)] - dot(li, lj)
                };
                if i == j {
                    // a pivot at rounding level means the matrix is singular
                    if !(s > PIVOT_TOL * math::abs(a[(i, i)])) || !s.is_finite() {
                        return Err(NotPositiveDefinite { pivot: i });
                    }
                    l.data[i * n + i] = math::sqrt(s);
                } else {
                    l.data[i * n + j] = s / l.data[j * n + j];
                }
            }
        }
        Ok(Self { l })
    }

    /// Wraps an existing lower-triangular factor with positive diagonal.
    pub fn from_lower(l: Matrix) -> Option<Self> {
        if l.rows != l.cols {
            return None;
        }
        let ok = (0..l.rows).all(|i| l[(i, i)] > 0.0 && (i + 1..l.cols).all(|j| l[(i, j)] == 0.0));
        ok.then_some(Self { l })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.l.rows
    }

    pub fn lower(&self) -> &Matrix {
        &self.l
    }

    /// `ln det(L Lᵀ)`
    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| math::ln(self.l[(i, i)])).sum::<f64>()
    }

    /// `L · x`
    pub fn mul_lower(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(x.len(), n);
        (0..n).map(|i| dot(&self.l.row(i)[..=i], &x[..=i])).collect()
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        x
    }

    pub fn solve_lower_in_place(&self, x: &mut [f64]) {
        let n = self.dim();
        assert_eq!(x.len(), n);
        for i in 0..n {
            let row = self.l.row(i);
            let s = x[i] - dot(&row[..i], &x[..i]);
            x[i] = s / row[i];
        }
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_upper_in_place(&self, x: &mut [f64]) {
        let n = self.dim();
        assert_eq!(x.len(), n);
        for i in (0..n).rev() {
            let row = self.l.row(i);
            x[i] /= row[i];
            let xi = x[i];
            axpy(-xi, &row[..i], &mut x[..i]);
        }
    }

    /// Solves `A x = b` with `A = L Lᵀ`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        x
    }

    /// `L Lᵀ`, mostly useful in tests.
    pub fn reconstruct(&self) -> Matrix {
        let n = self.dim();
        Matrix::from_fn(n, n, |i, j| {
            let k = i.min(j) + 1;
            dot(&self.l.row(i)[..k], &self.l.row(j)[..k])
        })
    }
}

/// Outcome of a jittered factorization.
#[derive(Debug, Clone)]
pub struct JitteredCholesky {
    pub chol: Cholesky,
    pub jitter: f64,
}

/// Jitter ladder: 0, then `1e-10·scale` growing by 10× up to `1e-2·scale`.
pub fn jitter_ladder(scale: f64) -> impl Iterator<Item = f64> {
    core::iter::once(0.0).chain((0..9).map(move |k| scale * libm::pow(10.0, -10.0 + k as f64)))
}

/// Factorizes `a + jitter·I`, escalating the jitter until the factorization
/// succeeds. Returns `None` when the largest jitter also fails.
pub fn cholesky_with_jitter(a: &Matrix, scale: f64) -> Option<JitteredCholesky> {
    for jitter in jitter_ladder(scale) {
        let attempt = if jitter == 0.0 { Cholesky::new(a) } else { Cholesky::new(&a.add_diagonal(jitter)) };
        if let Ok(chol) = attempt {
            return Some(JitteredCholesky { chol, jitter });
        }
    }
    None
}
