//! Compressed sparse row storage shared by the grid operators, the forward
//! solver and the Gauss-Newton Jacobians.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use faer::sparse::{SparseColMat, Triplet};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Field of values a sparse matrix or node field can carry.
pub trait Scalar:
    Copy
    + Default
    + Debug
    + Send
    + Sync
    + PartialEq
    + Add<Output = Self>
    + AddAssign
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Mul<f64, Output = Self>
    + Neg<Output = Self>
    + 'static
{
    fn from_real(x: f64) -> Self;
    /// Squared modulus.
    fn norm_sqr(self) -> f64;
    fn conj(self) -> Self;
    fn is_finite(self) -> bool;
}

impl Scalar for f64 {
    #[inline]
    fn from_real(x: f64) -> Self {
        x
    }
    #[inline]
    fn norm_sqr(self) -> f64 {
        self * self
    }
    #[inline]
    fn conj(self) -> Self {
        self
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Scalar for Complex64 {
    #[inline]
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    #[inline]
    fn norm_sqr(self) -> f64 {
        Complex64::norm_sqr(&self)
    }
    #[inline]
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    #[inline]
    fn is_finite(self) -> bool {
        Complex64::is_finite(self)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix<T = f64> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed
    /// and column indices end up sorted within each row.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(r, c, _) in triplets {
            assert!(
                r < nrows && c < ncols,
                "triplet ({r},{c}) out of {nrows}x{ncols}"
            );
            counts[r + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![T::default(); triplets.len()];
        for &(r, c, v) in triplets {
            cols[next[r]] = c;
            vals[next[r]] = v;
            next[r] += 1;
        }

        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for r in 0..nrows {
            let (lo, hi) = (counts[r], counts[r + 1]);
            order.clear();
            order.extend(lo..hi);
            order.sort_unstable_by_key(|&k| cols[k]);
            let mut last: Option<usize> = None;
            for &k in &order {
                if last == Some(cols[k]) {
                    *values.last_mut().unwrap() += vals[k];
                } else {
                    indices.push(cols[k]);
                    values.push(vals[k]);
                    last = Some(cols[k]);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![T::from_real(1.0); n],
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values stored in row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let (lo, hi) = (self.indptr[r], self.indptr[r + 1]);
        (&self.indices[lo..hi], &self.values[lo..hi])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        self.iter().collect()
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => T::default(),
        }
    }

    /// `y = A x` for any field the matrix entries can scale.
    pub fn apply<U>(&self, x: &[U]) -> Vec<U>
    where
        U: Copy + Default + AddAssign + Mul<T, Output = U>,
    {
        assert_eq!(x.len(), self.ncols, "apply: length mismatch");
        (0..self.nrows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                let mut acc = U::default();
                for (&c, &v) in cols.iter().zip(vals) {
                    acc += x[c] * v;
                }
                acc
            })
            .collect()
    }

    /// `y = A^T x`.
    pub fn apply_transpose<U>(&self, x: &[U]) -> Vec<U>
    where
        U: Copy + Default + AddAssign + Mul<T, Output = U>,
    {
        assert_eq!(x.len(), self.nrows, "apply_transpose: length mismatch");
        let mut y = vec![U::default(); self.ncols];
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                y[c] += x[r] * v;
            }
        }
        y
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    /// Sparse product `self * other` (Gustavson's row-by-row algorithm).
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.ncols, other.nrows, "matmul: inner dimension mismatch");
        let mut acc = vec![T::default(); other.ncols];
        let mut mark = vec![usize::MAX; other.ncols];
        let mut pattern: Vec<usize> = Vec::new();
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for r in 0..self.nrows {
            pattern.clear();
            let (cols, vals) = self.row(r);
            for (&k, &a) in cols.iter().zip(vals) {
                let (ocols, ovals) = other.row(k);
                for (&c, &b) in ocols.iter().zip(ovals) {
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = T::default();
                        pattern.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            pattern.sort_unstable();
            for &c in &pattern {
                indices.push(c);
                values.push(acc[c]);
            }
            indptr.push(indices.len());
        }
        Self {
            nrows: self.nrows,
            ncols: other.ncols,
            indptr,
            indices,
            values,
        }
    }

    /// `Diag(d) * A`.
    pub fn scale_rows(&self, d: &[T]) -> Self {
        assert_eq!(d.len(), self.nrows);
        let mut out = self.clone();
        for r in 0..self.nrows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                out.values[k] = self.values[k] * d[r];
            }
        }
        out
    }

    /// `A * Diag(d)`.
    pub fn scale_cols(&self, d: &[T]) -> Self {
        assert_eq!(d.len(), self.ncols);
        let mut out = self.clone();
        for (v, &c) in out.values.iter_mut().zip(&self.indices) {
            *v = *v * d[c];
        }
        out
    }

    pub fn scale(&self, alpha: T) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = *v * alpha);
        out
    }

    /// Keeps the listed rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for &r in rows {
            let (cols, vals) = self.row(r);
            indices.extend_from_slice(cols);
            values.extend_from_slice(vals);
            indptr.push(indices.len());
        }
        Self {
            nrows: rows.len(),
            ncols: self.ncols,
            indptr,
            indices,
            values,
        }
    }

    /// Keeps the listed columns; column `cols[k]` becomes column `k`.
    pub fn select_cols(&self, cols: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            map[c] = k;
        }
        let t: Vec<_> = self
            .iter()
            .filter(|&(_, c, _)| map[c] != usize::MAX)
            .map(|(r, c, v)| (r, map[c], v))
            .collect();
        Self::from_triplets(self.nrows, cols.len(), &t)
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.shape(), other.shape(), "add: shape mismatch");
        let mut t = self.triplets();
        t.extend(other.iter());
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    /// Stacks matrices with equal column counts on top of each other.
    pub fn vstack(blocks: &[&Self]) -> Self {
        let ncols = blocks.first().map_or(0, |b| b.ncols);
        let mut indptr = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut nrows = 0;
        for b in blocks {
            assert_eq!(b.ncols, ncols, "vstack: column mismatch");
            for r in 0..b.nrows {
                let (cols, vals) = b.row(r);
                indices.extend_from_slice(cols);
                values.extend_from_slice(vals);
                indptr.push(indices.len());
            }
            nrows += b.nrows;
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::default(); self.ncols]; self.nrows];
        for (r, c, v) in self.iter() {
            d[r][c] = v;
        }
        d
    }

    pub fn to_faer(&self) -> Result<SparseColMat<usize, T>>
    where
        T: faer::traits::ComplexField,
    {
        let t: Vec<_> = self.iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t)
            .map_err(|e| Error::Solver(format!("sparse matrix creation: {e:?}")))
    }
}

impl CsrMatrix<f64> {
    /// Entrywise absolute value.
    pub fn abs(&self) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = v.abs());
        out
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows)
            .map(|r| self.row(r).1.iter().sum())
            .collect()
    }

    pub fn to_complex(&self) -> CsrMatrix<Complex64> {
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: self
                .values
                .iter()
                .map(|&v| Complex64::new(v, 0.0))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CsrMatrix {
        CsrMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, 2.0), (1, 1, -1.0), (0, 2, 1.0)])
    }

    #[test]
    fn duplicates_are_summed() {
        let a = small();
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(0, 2), 3.0);
    }

    #[test]
    fn transpose_and_products_agree_with_dense() {
        let a = small();
        let at = a.transpose();
        let g = a.matmul(&at);
        assert_eq!(g.to_dense(), vec![vec![10.0, 0.0], vec![0.0, 1.0]]);
        let x = [1.0, 2.0, 3.0];
        assert_eq!(a.apply(&x), vec![10.0, -2.0]);
        assert_eq!(at.apply(&[1.0, 1.0]), a.apply_transpose(&[1.0, 1.0]));
    }

    #[test]
    fn complex_vectors_through_real_matrix() {
        let a = small();
        let x = [Complex64::new(0.0, 1.0); 3];
        let y = a.apply(&x);
        assert_eq!(y[0], Complex64::new(0.0, 4.0));
    }

    #[test]
    fn select_and_stack() {
        let a = small();
        let s = a.select_cols(&[2, 0]);
        assert_eq!(s.to_dense(), vec![vec![3.0, 1.0], vec![0.0, 0.0]]);
        let v = CsrMatrix::vstack(&[&a, &a.select_rows(&[1])]);
        assert_eq!(v.nrows(), 3);
        assert_eq!(v.get(2, 1), -1.0);
    }
}
