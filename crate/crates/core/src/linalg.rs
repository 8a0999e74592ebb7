use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::Real;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    /// Builds a matrix from row-major data. Panics if the length does not match.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data has wrong length");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            assert_eq!(row.len(), cols, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: rows.len(), cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let cols = self.cols;
        &mut self.data[i * cols..(i + 1) * cols]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, factor: T) -> Self {
        self.map(|v| v * factor)
    }

    /// Frobenius inner product.
    pub fn inner(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum()
    }

    /// Induced infinity norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> T {
        (0..self.rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn max_entry(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
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

/// Inverse of a square row-major matrix by Gauss–Jordan elimination with
/// partial pivoting, with the same pivot rule as [`solve_square`].
pub(crate) fn invert<T: Real>(mut a: Vec<T>, n: usize, pivot_tol: T) -> Option<Vec<T>> {
    debug_assert_eq!(a.len(), n * n);
    let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if scale == T::zero() {
        return None;
    }
    let threshold = pivot_tol * scale;
    let mut inv = vec![T::zero(); n * n];
    for i in 0..n {
        inv[i * n + i] = T::one();
    }
    for col in 0..n {
        let (pivot_row, pivot_abs) = (col..n)
            .map(|r| (r, a[r * n + col].abs()))
            .fold((col, T::neg_infinity()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pivot_abs > threshold) {
            return None;
        }
        if pivot_row != col {
            for k in 0..n {
                a.swap(col * n + k, pivot_row * n + k);
                inv.swap(col * n + k, pivot_row * n + k);
            }
        }
        let pivot = a[col * n + col];
        for k in 0..n {
            a[col * n + k] /= pivot;
            inv[col * n + k] /= pivot;
        }
        let pivot_a = a[col * n..(col + 1) * n].to_vec();
        let pivot_inv = inv[col * n..(col + 1) * n].to_vec();
        for r in (0..n).filter(|&r| r != col) {
            let factor = a[r * n + col];
            if factor == T::zero() {
                continue;
            }
            for (x, &p) in a[r * n..(r + 1) * n].iter_mut().zip(&pivot_a) {
                *x -= factor * p;
            }
            for (x, &p) in inv[r * n..(r + 1) * n].iter_mut().zip(&pivot_inv) {
                *x -= factor * p;
            }
        }
    }
    Some(inv)
}

/// Solves the square system `a x = b` by Gaussian elimination with partial
/// pivoting. Returns `None` when a pivot falls below `pivot_tol` times the
/// largest absolute entry of `a`.
pub(crate) fn solve_square<T: Real>(mut a: Vec<T>, mut b: Vec<T>, n: usize, pivot_tol: T) -> Option<Vec<T>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if scale == T::zero() {
        return None;
    }
    let threshold = pivot_tol * scale;
    for col in 0..n {
        let (pivot_row, pivot_abs) = (col..n)
            .map(|r| (r, a[r * n + col].abs()))
            .fold((col, T::neg_infinity()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pivot_abs > threshold) {
            return None;
        }
        if pivot_row != col {
            for k in 0..n {
                a.swap(col * n + k, pivot_row * n + k);
            }
            b.swap(col, pivot_row);
        }
        let pivot = a[col * n + col];
        let (upper, lower) = a.split_at_mut((col + 1) * n);
        let pivot_row = &upper[col * n + col + 1..];
        for (offset, row) in lower.chunks_exact_mut(n).enumerate() {
            let factor = row[col] / pivot;
            if factor == T::zero() {
                continue;
            }
            row[col] = T::zero();
            for (x, &p) in row[col + 1..].iter_mut().zip(pivot_row) {
                *x -= factor * p;
            }
            let upd = factor * b[col];
            b[col + 1 + offset] -= upd;
        }
    }
    let mut x = vec![T::zero(); n];
    for r in (0..n).rev() {
        let mut acc = b[r];
        for k in r + 1..n {
            acc -= a[r * n + k] * x[k];
        }
        x[r] = acc / a[r * n + r];
    }
    Some(x)
}

/// Least-squares solution of an overdetermined system `a x ≈ b` (`m × n`,
/// `m ≥ n`) through the normal equations. `None` if the columns are
/// numerically dependent.
pub(crate) fn least_squares<T: Real>(a: &[T], b: &[T], m: usize, n: usize) -> Option<Vec<T>> {
    let mut normal = vec![T::zero(); n * n];
    let mut rhs = vec![T::zero(); n];
    for r in 0..m {
        let row = &a[r * n..(r + 1) * n];
        for i in 0..n {
            rhs[i] += row[i] * b[r];
            for j in 0..n {
                normal[i * n + j] += row[i] * row[j];
            }
        }
    }
    solve_square(normal, rhs, n, T::lit(1e-10))
}
