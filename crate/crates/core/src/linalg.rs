//! Dense row-major matrices, Householder least squares and the cyclic
//! Jacobi symmetric eigensolver.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("matrix is rank deficient (column {column})")]
    RankDeficient { column: usize },
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self, LinalgError> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(LinalgError::Shape(format!("row {i} has {} columns, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn from_columns(columns: &[Vec<T>]) -> Result<Self, LinalgError> {
        let rows = columns.first().map(Vec::len).unwrap_or(0);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(LinalgError::Shape("columns of unequal length".into()));
        }
        let cols = columns.len();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            data.extend(columns.iter().map(|c| c[i]));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
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
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[T]> + '_ {
        // chunks_exact on an empty row width would panic
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { rows: idx.len(), cols: self.cols, data }
    }

    pub fn select_columns(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for i in 0..self.rows {
            let r = self.row(i);
            data.extend(idx.iter().map(|&j| r[j]));
        }
        Self { rows: self.rows, cols: idx.len(), data }
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Self) -> Result<Self, LinalgError> {
        if self.cols != rhs.rows {
            return Err(LinalgError::Shape(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..rhs.cols {
                    out[(i, j)] = out[(i, j)] + a * rhs[(k, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn column_means(&self) -> Vec<T> {
        let n = T::from_usize(self.rows.max(1)).unwrap();
        let mut sums = vec![T::zero(); self.cols];
        for r in self.row_iter() {
            for (s, &v) in sums.iter_mut().zip(r) {
                *s = *s + v;
            }
        }
        sums.into_iter().map(|s| s / n).collect()
    }

    /// Sample covariance (divisor n − 1).
    pub fn covariance(&self) -> Result<Self, LinalgError> {
        if self.rows < 2 {
            return Err(LinalgError::TooFewRows { needed: 2, got: self.rows });
        }
        let means = self.column_means();
        let d = self.cols;
        let mut cov = Self::zeros(d, d);
        for r in self.row_iter() {
            for a in 0..d {
                let da = r[a] - means[a];
                for b in a..d {
                    cov[(a, b)] = cov[(a, b)] + da * (r[b] - means[b]);
                }
            }
        }
        let denom = T::from_usize(self.rows - 1).unwrap();
        for a in 0..d {
            for b in a..d {
                let v = cov[(a, b)] / denom;
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
        Ok(cov)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn hstack(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.rows != other.rows {
            return Err(LinalgError::Shape("hstack row mismatch".into()));
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(Self { rows: self.rows, cols, data })
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Least-squares solution of `a·x ≈ b` by Householder QR.
///
/// Fails with `RankDeficient` when a diagonal entry of R falls below
/// `max(n, p)·ε·max|R_jj|`.
pub fn lstsq_qr<T: Real>(a: &Matrix<T>, b: &[T]) -> Result<Vec<T>, LinalgError> {
    let (n, p) = (a.rows(), a.cols());
    if b.len() != n {
        return Err(LinalgError::Shape(format!("rhs has {} rows, matrix {n}", b.len())));
    }
    if n < p {
        return Err(LinalgError::TooFewRows { needed: p, got: n });
    }
    // column-major working copy
    let mut cols: Vec<Vec<T>> = (0..p).map(|j| a.column(j)).collect();
    let mut rhs = b.to_vec();
    let mut diag = vec![T::zero(); p];

    for k in 0..p {
        let norm = cols[k][k..].iter().fold(T::zero(), |s, &v| s + v * v).sqrt();
        if norm == T::zero() {
            diag[k] = T::zero();
            continue;
        }
        let alpha = if cols[k][k] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = cols[k][k..].to_vec();
        v[0] = v[0] - alpha;
        let vnorm2 = v.iter().fold(T::zero(), |s, &x| s + x * x);
        diag[k] = alpha;
        if vnorm2 == T::zero() {
            continue;
        }
        let two = T::lit(2.0);
        for col in cols.iter_mut().skip(k + 1) {
            let s = dot(&v, &col[k..]) * two / vnorm2;
            for (c, &vi) in col[k..].iter_mut().zip(&v) {
                *c = *c - s * vi;
            }
        }
        let s = dot(&v, &rhs[k..]) * two / vnorm2;
        for (c, &vi) in rhs[k..].iter_mut().zip(&v) {
            *c = *c - s * vi;
        }
    }

    let max_diag = diag.iter().fold(T::zero(), |m, &d| m.max(d.abs()));
    let tol = T::from_usize(n.max(p)).unwrap() * T::epsilon() * max_diag;
    if let Some(column) = diag.iter().position(|d| d.abs() <= tol) {
        return Err(LinalgError::RankDeficient { column });
    }

    let mut x = vec![T::zero(); p];
    for k in (0..p).rev() {
        let mut s = rhs[k];
        for j in k + 1..p {
            s = s - cols[j][k] * x[j];
        }
        x[k] = s / diag[k];
    }
    Ok(x)
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricEigen<T> {
    /// Eigenvalues, descending.
    pub values: Vec<T>,
    /// Eigenvectors as columns, in the order of `values`.
    pub vectors: Matrix<T>,
    pub sweeps: usize,
}

/// Off-diagonal Frobenius norm.
pub fn off_diagonal_norm<T: Real>(m: &Matrix<T>) -> T {
    let mut s = T::zero();
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            if i != j {
                s = s + m[(i, j)] * m[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi rotations until the off-diagonal norm drops to `tol`
/// (absolute) or `max_sweeps` is hit.
///
/// Each eigenvector is sign-normalized so its largest-magnitude component
/// is positive.
pub fn jacobi_eigen<T: Real>(sym: &Matrix<T>, tol: T, max_sweeps: usize) -> Result<SymmetricEigen<T>, LinalgError> {
    let d = sym.rows();
    if sym.cols() != d {
        return Err(LinalgError::Shape("eigen-decomposition needs a square matrix".into()));
    }
    let mut a = sym.clone();
    let mut v = Matrix::identity(d);
    let mut sweeps = 0;
    while sweeps < max_sweeps && off_diagonal_norm(&a) > tol {
        sweeps += 1;
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap_or(std::cmp::Ordering::Equal));
    let values: Vec<T> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(d, d);
    for (new, &old) in order.iter().enumerate() {
        let mut pivot = T::zero();
        for k in 0..d {
            if v[(k, old)].abs() > pivot.abs() {
                pivot = v[(k, old)];
            }
        }
        let sign = if pivot < T::zero() { -T::one() } else { T::one() };
        for k in 0..d {
            vectors[(k, new)] = sign * v[(k, old)];
        }
    }
    Ok(SymmetricEigen { values, vectors, sweeps })
}

/// Minimum-norm least squares with intercept, via the pseudo-inverse of
/// the centered Gram matrix. Handles collinear columns.
pub fn lstsq_min_norm<T: Real>(x: &Matrix<T>, y: &[T]) -> Result<(T, Vec<T>), LinalgError> {
    let (n, d) = (x.rows(), x.cols());
    if y.len() != n {
        return Err(LinalgError::Shape("target length".into()));
    }
    if n == 0 {
        return Err(LinalgError::TooFewRows { needed: 1, got: 0 });
    }
    let means = x.column_means();
    let nf = T::from_usize(n).unwrap();
    let ymean = y.iter().copied().sum::<T>() / nf;
    let mut gram = Matrix::<T>::zeros(d, d);
    let mut xty = vec![T::zero(); d];
    for (i, r) in x.row_iter().enumerate() {
        let yc = y[i] - ymean;
        for a in 0..d {
            let ca = r[a] - means[a];
            xty[a] = xty[a] + ca * yc;
            for b in a..d {
                gram[(a, b)] = gram[(a, b)] + ca * (r[b] - means[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    let scale = (0..d).fold(T::zero(), |m, i| m.max(gram[(i, i)].abs())).max(T::min_positive_value());
    let eig = jacobi_eigen(&gram, T::solver_eps() * scale, 100)?;
    let cutoff = eig.values.first().copied().unwrap_or(T::zero()).abs() * T::lit(1e-10);
    let mut beta = vec![T::zero(); d];
    for k in 0..d {
        let lambda = eig.values[k];
        if lambda <= cutoff {
            continue;
        }
        let proj = (0..d).fold(T::zero(), |s, a| s + eig.vectors[(a, k)] * xty[a]) / lambda;
        for (a, b) in beta.iter_mut().enumerate() {
            *b = *b + eig.vectors[(a, k)] * proj;
        }
    }
    let intercept = ymean - dot(&beta, &means);
    Ok((intercept, beta))
}
