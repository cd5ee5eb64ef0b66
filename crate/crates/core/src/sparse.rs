//! Compressed sparse column matrices and a left-looking sparse LU with
//! threshold partial pivoting.
//!
//! Factorizations are deterministic: ties in the pivot search are broken by
//! the lowest row index, and the diagonal row is kept whenever it is within
//! [`PIVOT_THRESHOLD`] of the column maximum.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Relative size the diagonal candidate must have to be preferred as pivot.
pub const PIVOT_THRESHOLD: f64 = 0.1;

/// Coordinate-format accumulator. Duplicate entries are summed on conversion.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    pub nrows: usize,
    pub ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Triplets { nrows, ncols, entries: Vec::new() }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Triplets { nrows, ncols, entries: Vec::with_capacity(cap) }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn to_csc(&self) -> CscMatrix {
        let mut count = vec![0usize; self.ncols + 1];
        for &(_, c, _) in &self.entries {
            count[c + 1] += 1;
        }
        for c in 0..self.ncols {
            count[c + 1] += count[c];
        }
        let mut next = count.clone();
        let mut rows = vec![0usize; self.entries.len()];
        let mut vals = vec![0.0; self.entries.len()];
        for &(r, c, v) in &self.entries {
            let k = next[c];
            rows[k] = r;
            vals[k] = v;
            next[c] += 1;
        }
        // sort each column by row and merge duplicates
        let mut col_ptr = vec![0usize; self.ncols + 1];
        let mut out_rows = Vec::with_capacity(rows.len());
        let mut out_vals = Vec::with_capacity(rows.len());
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for c in 0..self.ncols {
            scratch.clear();
            scratch.extend((count[c]..count[c + 1]).map(|k| (rows[k], vals[k])));
            scratch.sort_by_key(|e| e.0);
            let mut i = 0;
            while i < scratch.len() {
                let r = scratch[i].0;
                let mut v = 0.0;
                while i < scratch.len() && scratch[i].0 == r {
                    v += scratch[i].1;
                    i += 1;
                }
                out_rows.push(r);
                out_vals.push(v);
            }
            col_ptr[c + 1] = out_rows.len();
        }
        CscMatrix { nrows: self.nrows, ncols: self.ncols, col_ptr, row_idx: out_rows, values: out_vals }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(row, value)` pairs of column `c`.
    pub fn column(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.col_ptr[c]..self.col_ptr[c + 1];
        self.row_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.column(c).find(|e| e.0 == r).map_or(0.0, |e| e.1)
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for (c, &xc) in x.iter().enumerate().take(self.ncols) {
            if xc != 0.0 {
                for (r, v) in self.column(c) {
                    y[r] += v * xc;
                }
            }
        }
        y
    }

    /// `Aᵀ x`.
    pub fn transpose_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.ncols).map(|c| self.column(c).map(|(r, v)| v * x[r]).sum()).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for c in 0..self.ncols {
            for (r, v) in self.column(c) {
                d[r][c] += v;
            }
        }
        d
    }
}

/// `P A = L U` with `L` unit lower triangular in pivot order.
#[derive(Debug, Clone)]
pub struct SparseLu {
    n: usize,
    /// Row of `A` chosen as pivot for column `k`.
    pivot_row: Vec<usize>,
    /// Pivot position of each row of `A`.
    row_pos: Vec<usize>,
    /// Strictly lower part of column `k` as `(row of A, multiplier)`.
    lower: Vec<Vec<(usize, f64)>>,
    /// Strictly upper part of column `k` as `(pivot position, value)`.
    upper: Vec<Vec<(usize, f64)>>,
    diag: Vec<f64>,
}

impl SparseLu {
    pub fn factor(a: &CscMatrix) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::DimensionMismatch { expected: a.nrows, got: a.ncols });
        }
        let n = a.nrows;
        const NONE: usize = usize::MAX;
        let mut pivot_row = vec![NONE; n];
        let mut row_pos = vec![NONE; n];
        let mut lower: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
        let mut upper: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
        let mut diag = vec![0.0; n];
        let mut x = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut mark = vec![false; n];

        for k in 0..n {
            touched.clear();
            for (r, v) in a.column(k) {
                if !mark[r] {
                    mark[r] = true;
                    touched.push(r);
                }
                x[r] += v;
            }
            // x <- L_{0..k}^{-1} x, processing pivots in order
            let mut ucol = Vec::new();
            for j in 0..k {
                let xj = x[pivot_row[j]];
                if xj == 0.0 {
                    continue;
                }
                ucol.push((j, xj));
                for &(r, l) in &lower[j] {
                    if !mark[r] {
                        mark[r] = true;
                        touched.push(r);
                    }
                    x[r] -= l * xj;
                }
            }
            let mut best = NONE;
            let mut best_abs = 0.0;
            touched.sort_unstable();
            for &r in &touched {
                if row_pos[r] == NONE {
                    let v = libm::fabs(x[r]);
                    if v > best_abs {
                        best_abs = v;
                        best = r;
                    }
                }
            }
            if best == NONE || !(best_abs > 0.0) || !best_abs.is_finite() {
                return Err(Error::SingularJacobian { column: k });
            }
            if k < n && row_pos[k] == NONE && mark[k] && libm::fabs(x[k]) >= PIVOT_THRESHOLD * best_abs {
                best = k;
            }
            let pivot = x[best];
            pivot_row[k] = best;
            row_pos[best] = k;
            diag[k] = pivot;
            let mut lcol = Vec::new();
            for &r in &touched {
                if row_pos[r] == NONE && x[r] != 0.0 {
                    lcol.push((r, x[r] / pivot));
                }
                x[r] = 0.0;
                mark[r] = false;
            }
            lower.push(lcol);
            upper.push(ucol);
        }
        Ok(SparseLu { n, pivot_row, row_pos, lower, upper, diag })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: b.len() });
        }
        let mut work = b.to_vec();
        let mut y = vec![0.0; self.n];
        for j in 0..self.n {
            let yj = work[self.pivot_row[j]];
            y[j] = yj;
            if yj != 0.0 {
                for &(r, l) in &self.lower[j] {
                    work[r] -= l * yj;
                }
            }
        }
        for j in (0..self.n).rev() {
            let xj = y[j] / self.diag[j];
            y[j] = xj;
            if xj != 0.0 {
                for &(i, u) in &self.upper[j] {
                    y[i] -= u * xj;
                }
            }
        }
        Ok(y)
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: b.len() });
        }
        // Uᵀ w = b
        let mut w = vec![0.0; self.n];
        for j in 0..self.n {
            let mut s = b[j];
            for &(i, u) in &self.upper[j] {
                s -= u * w[i];
            }
            w[j] = s / self.diag[j];
        }
        // Lᵀ v = w, then scatter back through the row permutation
        for j in (0..self.n).rev() {
            let mut s = w[j];
            for &(r, l) in &self.lower[j] {
                s -= l * w[self.row_pos[r]];
            }
            w[j] = s;
        }
        let mut x = vec![0.0; self.n];
        for j in 0..self.n {
            x[self.pivot_row[j]] = w[j];
        }
        Ok(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn residual(a: &CscMatrix, x: &[f64], b: &[f64]) -> f64 {
        a.mul_vec(x).iter().zip(b).map(|(p, q)| libm::fabs(p - q)).fold(0.0, f64::max)
    }

    #[test]
    fn duplicates_are_summed() {
        let mut t = Triplets::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(0, 0, 2.0);
        t.push(1, 0, 4.0);
        t.push(1, 1, 5.0);
        let a = t.to_csc();
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.nnz(), 3);
    }

    #[test]
    fn needs_pivoting() {
        // zero diagonal forces a row exchange
        let mut t = Triplets::new(3, 3);
        t.push(1, 0, 2.0);
        t.push(0, 1, 1.0);
        t.push(2, 1, 3.0);
        t.push(2, 2, 1.0);
        t.push(0, 2, 4.0);
        let a = t.to_csc();
        let lu = SparseLu::factor(&a).unwrap();
        let b = [1.0, 2.0, 3.0];
        let x = lu.solve(&b).unwrap();
        assert!(residual(&a, &x, &b) < 1e-14);
        let z = lu.solve_transpose(&b).unwrap();
        let at = a.transpose_mul_vec(&z);
        for i in 0..3 {
            assert!(libm::fabs(at[i] - b[i]) < 1e-14);
        }
    }

    #[test]
    fn singular_matrix_is_detected() {
        let mut t = Triplets::new(2, 2);
        t.push(0, 0, 1.0);
        t.push(1, 0, 1.0);
        t.push(0, 1, 2.0);
        t.push(1, 1, 2.0);
        assert!(matches!(SparseLu::factor(&t.to_csc()), Err(Error::SingularJacobian { .. })));
    }

    proptest! {
        #[test]
        fn random_sparse_systems(
            n in 2usize..30,
            seed in proptest::collection::vec((0usize..900, -1.0f64..1.0), 0..120),
            rhs in proptest::collection::vec(-10.0f64..10.0, 30),
        ) {
            // diagonally dominant plus random sparse off-diagonal entries
            let mut t = Triplets::new(n, n);
            for i in 0..n {
                t.push(i, i, 4.0 + i as f64 * 0.1);
            }
            for &(k, v) in &seed {
                t.push((k / 30) % n, k % n, v);
            }
            let a = t.to_csc();
            let lu = SparseLu::factor(&a).unwrap();
            let b = &rhs[..n];
            let x = lu.solve(b).unwrap();
            prop_assert!(residual(&a, &x, b) < 1e-10);
            let z = lu.solve_transpose(b).unwrap();
            let at = a.transpose_mul_vec(&z);
            for i in 0..n {
                prop_assert!(libm::fabs(at[i] - b[i]) < 1e-10);
            }
        }
    }
}
