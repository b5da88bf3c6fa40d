//! Compressed sparse row matrices with a triplet-based builder.
//!
//! Assembly pushes (row, col, value) triplets in element order; `build`
//! sorts, merges duplicates and produces an immutable CSR matrix. The
//! accumulation order is fixed by the caller's loop order, so repeated
//! assemblies are bitwise reproducible.

use nalgebra::{DMatrix, DVector};

/// Entries with absolute value at or below this are dropped on finalize.
/// The threshold is far below any meaningful matrix entry, so finalize
/// never changes the operator, only removes stored explicit zeros.
const DROP_TOLERANCE: f64 = 1e-300;

/// Triplet accumulator for sparse assembly.
#[derive(Debug, Clone)]
pub struct TripletBuilder {
    nrows: usize,
    ncols: usize,
    triplets: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            triplets: Vec::new(),
        }
    }

    pub fn with_capacity(nrows: usize, ncols: usize, cap: usize) -> Self {
        Self {
            nrows,
            ncols,
            triplets: Vec::with_capacity(cap),
        }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.triplets.push((row, col, value));
    }

    pub fn build(mut self) -> SparseMatrix {
        self.triplets.sort_by_key(|&(i, j, _)| (i, j));

        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();

        let mut iter = self.triplets.iter().peekable();
        while let Some(&(r, c, v)) = iter.next() {
            let mut sum = v;
            while let Some(&&(r2, c2, v2)) = iter.peek() {
                if r2 == r && c2 == c {
                    sum += v2;
                    iter.next();
                } else {
                    break;
                }
            }
            if sum.abs() > DROP_TOLERANCE {
                row_ptr[r + 1] += 1;
                col_idx.push(c);
                values.push(sum);
            }
        }
        for r in 0..self.nrows {
            row_ptr[r + 1] += row_ptr[r];
        }

        SparseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// Immutable CSR matrix.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn identity(n: usize) -> Self {
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, 1.0);
        }
        b.build()
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        TripletBuilder::new(nrows, ncols).build()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of row `i` as (column, value) pairs, sorted by column.
    #[inline]
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn iter_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = DVector::zeros(self.nrows);
        for i in 0..self.nrows {
            let mut s = 0.0;
            for (j, v) in self.row(i) {
                s += v * x[j];
            }
            y[i] = s;
        }
        y
    }

    pub fn diagonal(&self) -> DVector<f64> {
        let n = self.nrows.min(self.ncols);
        let mut d = DVector::zeros(n);
        for i in 0..n {
            d[i] = self.get(i, i);
        }
        d
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut b = TripletBuilder::with_capacity(self.ncols, self.nrows, self.nnz());
        for (i, j, v) in self.iter_entries() {
            b.push(j, i, v);
        }
        b.build()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// max |A - A^T| over all entries.
    pub fn max_asymmetry(&self) -> f64 {
        let mut m: f64 = 0.0;
        for (i, j, v) in self.iter_entries() {
            m = m.max((v - self.get(j, i)).abs());
        }
        m
    }

    /// Weighted sum of matrices sharing the same dimensions.
    pub fn linear_combination(terms: &[(f64, &SparseMatrix)]) -> SparseMatrix {
        assert!(!terms.is_empty());
        let (nrows, ncols) = (terms[0].1.nrows, terms[0].1.ncols);
        let cap = terms.iter().map(|(_, m)| m.nnz()).sum();
        let mut b = TripletBuilder::with_capacity(nrows, ncols, cap);
        for &(w, m) in terms {
            assert_eq!((m.nrows, m.ncols), (nrows, ncols));
            if w == 0.0 {
                continue;
            }
            for (i, j, v) in m.iter_entries() {
                b.push(i, j, w * v);
            }
        }
        b.build()
    }

    /// Rebuild with the given rows replaced by unit rows of the identity
    /// (used for strong boundary conditions on square systems) or cleared
    /// entirely when `unit_diag` is false (off-diagonal blocks).
    pub fn with_replaced_rows(&self, rows: &[usize], unit_diag: bool) -> SparseMatrix {
        let mut is_replaced = vec![false; self.nrows];
        for &r in rows {
            is_replaced[r] = true;
        }
        let mut b = TripletBuilder::with_capacity(self.nrows, self.ncols, self.nnz());
        for (i, j, v) in self.iter_entries() {
            if !is_replaced[i] {
                b.push(i, j, v);
            }
        }
        if unit_diag {
            for &r in rows {
                b.push(r, r, 1.0);
            }
        }
        b.build()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.iter_entries() {
            d[(i, j)] = v;
        }
        d
    }

    pub fn from_dense(d: &DMatrix<f64>) -> SparseMatrix {
        let mut b = TripletBuilder::new(d.nrows(), d.ncols());
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                if d[(i, j)] != 0.0 {
                    b.push(i, j, d[(i, j)]);
                }
            }
        }
        b.build()
    }
}
