use std::ops::{Deref, DerefMut, Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

/// Dense column vector with contiguous storage.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector<T>(Vec<T>);

impl<T: Scalar> Vector<T> {
    pub fn zeros(n: usize) -> Self {
        Vector(vec![T::zero(); n])
    }

    pub fn filled(n: usize, value: T) -> Self {
        Vector(vec![value; n])
    }

    /// Wraps `values`, rejecting NaN and infinities.
    pub fn finite(values: Vec<T>) -> Result<Self> {
        ensure_finite("vector", &values)?;
        Ok(Vector(values))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn norm(&self) -> T {
        norm(&self.0)
    }
}

impl<T> Vector<T> {
    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }
}

impl<T> From<Vec<T>> for Vector<T> {
    fn from(v: Vec<T>) -> Self {
        Vector(v)
    }
}

impl<T: Clone> From<&[T]> for Vector<T> {
    fn from(v: &[T]) -> Self {
        Vector(v.to_vec())
    }
}

impl<T> FromIterator<T> for Vector<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        Vector(iter.into_iter().collect())
    }
}

impl<T> Deref for Vector<T> {
    type Target = [T];
    fn deref(&self) -> &[T] {
        &self.0
    }
}

impl<T> DerefMut for Vector<T> {
    fn deref_mut(&mut self) -> &mut [T] {
        &mut self.0
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        check_dim("Matrix::new", rows * cols, data.len())?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim("Matrix::from_rows", cols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// `Mᵀ v`.
    pub fn transpose_matvec(&self, v: &[T]) -> Result<Vector<T>> {
        check_dim("transpose_matvec", self.rows, v.len())?;
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &m) in out.iter_mut().zip(self.row(i)) {
                *o = *o + m * vi;
            }
        }
        Ok(Vector(out))
    }

    /// `Mᵀ M`.
    pub fn gram(&self) -> Matrix<T> {
        let n = self.cols;
        let mut g = Matrix::zeros(n, n);
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                let ri = row[i];
                if ri == T::zero() {
                    continue;
                }
                for j in i..n {
                    g.data[i * n + j] = g.data[i * n + j] + ri * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                g.data[i * n + j] = g.data[j * n + i];
            }
        }
        g
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

pub fn ensure_finite<T: Scalar>(what: &str, values: &[T]) -> Result<()> {
    match values.iter().position(|x| !x.is_finite()) {
        None => Ok(()),
        Some(k) => Err(Error::Numerical(format!(
            "{what} has a non-finite entry {} at index {k}",
            values[k]
        ))),
    }
}

/// Left-to-right sum of products.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    check_dim("dot", a.len(), b.len())?;
    Ok(a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y))
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |acc, &x| acc + x * x).sqrt()
}

/// `alpha * x + y`.
pub fn axpy<T: Scalar>(alpha: T, x: &[T], y: &[T]) -> Result<Vector<T>> {
    check_dim("axpy", x.len(), y.len())?;
    Ok(x.iter().zip(y).map(|(&xi, &yi)| alpha * xi + yi).collect())
}

pub fn sub<T: Scalar>(a: &[T], b: &[T]) -> Result<Vector<T>> {
    check_dim("sub", a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(&x, &y)| x - y).collect())
}

pub fn scale<T: Scalar>(alpha: T, x: &[T]) -> Vector<T> {
    x.iter().map(|&v| alpha * v).collect()
}

pub fn matvec<T: Scalar>(m: &Matrix<T>, v: &[T]) -> Result<Vector<T>> {
    check_dim("matvec", m.cols(), v.len())?;
    (0..m.rows()).map(|i| dot(m.row(i), v)).collect()
}

/// Sample mean and population variance (divisor `n`).
pub fn mean_and_var<T: Scalar>(samples: &[T]) -> Result<(T, T)> {
    if samples.is_empty() {
        return Err(Error::argument("mean_and_var of an empty sample"));
    }
    let n = T::from_usize_lossy(samples.len());
    let mean = samples.iter().fold(T::zero(), |acc, &x| acc + x) / n;
    let var = samples
        .iter()
        .fold(T::zero(), |acc, &x| acc + (x - mean) * (x - mean))
        / n;
    Ok((mean, var))
}

/// Solves `A x = b` for symmetric positive definite `A` by Cholesky factorization.
pub fn cholesky_solve<T: Scalar>(a: &Matrix<T>, b: &[T]) -> Result<Vector<T>> {
    let n = a.rows();
    check_dim("cholesky_solve (square)", n, a.cols())?;
    check_dim("cholesky_solve (rhs)", n, b.len())?;
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d = d - l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) {
            return Err(Error::Numerical(format!(
                "matrix is not positive definite (pivot {j} = {d})"
            )));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s = s - l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    Ok(Vector(x))
}
