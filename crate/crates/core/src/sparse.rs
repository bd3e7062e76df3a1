//! Compressed sparse storage with mirrored row-major and column-major indices.

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sparse matrix stored in CSR with a CSC index over the same value array.
///
/// `value_perm[k]` is the position in `values` of the `k`-th entry in
/// column-major order, so column slices cost O(nnz(column)) without
/// duplicating the values.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    value_perm: Vec<usize>,
}

impl<T: Scalar> SparseMatrix<T> {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self::from_csr_parts(n_rows, n_cols, vec![0; n_rows + 1], Vec::new(), Vec::new())
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![T::one(); n])
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let n = diag.len();
        let row_ptr = (0..=n).collect();
        let col_idx = (0..n).collect();
        Self::from_csr_parts(n, n, row_ptr, col_idx, diag.to_vec())
    }

    /// Builds from unsorted `(row, col, value)` triplets. Duplicate
    /// coordinates are summed.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> Result<Self> {
        let mut trip: Vec<(usize, usize, T)> = Vec::new();
        for (r, c, v) in triplets {
            if r >= n_rows {
                return Err(Error::IndexError { index: r, dim: n_rows });
            }
            if c >= n_cols {
                return Err(Error::IndexError { index: c, dim: n_cols });
            }
            trip.push((r, c, v));
        }
        Ok(Self::from_triplets_unchecked(n_rows, n_cols, trip))
    }

    pub(crate) fn from_triplets_unchecked(
        n_rows: usize,
        n_cols: usize,
        trip: Vec<(usize, usize, T)>,
    ) -> Self {
        // Bucket by row (stable), then merge duplicates per row through a
        // dense slot array, summing in input order.
        let mut row_ptr = vec![0usize; n_rows + 1];
        for &(r, _, _) in &trip {
            row_ptr[r + 1] += 1;
        }
        for i in 0..n_rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut next = row_ptr.clone();
        let mut bucketed: Vec<(usize, T)> = vec![(0, T::zero()); trip.len()];
        for (r, c, v) in trip {
            bucketed[next[r]] = (c, v);
            next[r] += 1;
        }
        let mut slot = vec![usize::MAX; n_cols];
        let mut out_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(bucketed.len());
        let mut values: Vec<T> = Vec::with_capacity(bucketed.len());
        let mut row: Vec<(usize, T)> = Vec::new();
        for i in 0..n_rows {
            row.clear();
            for &(c, v) in &bucketed[row_ptr[i]..row_ptr[i + 1]] {
                if slot[c] == usize::MAX {
                    slot[c] = row.len();
                    row.push((c, v));
                } else {
                    row[slot[c]].1 += v;
                }
            }
            for &(c, _) in &row {
                slot[c] = usize::MAX;
            }
            row.sort_unstable_by_key(|e| e.0);
            col_idx.extend(row.iter().map(|e| e.0));
            values.extend(row.iter().map(|e| e.1));
            out_ptr[i + 1] = col_idx.len();
        }
        let row_ptr = out_ptr;
        Self::from_csr_parts(n_rows, n_cols, row_ptr, col_idx, values)
    }

    /// Assembles from CSR arrays whose rows are sorted by column with no
    /// duplicates, then derives the column-major mirror.
    pub(crate) fn from_csr_parts(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<T>,
    ) -> Self {
        debug_assert_eq!(row_ptr.len(), n_rows + 1);
        debug_assert_eq!(col_idx.len(), values.len());
        let nnz = values.len();
        let mut col_ptr = vec![0usize; n_cols + 1];
        for &c in &col_idx {
            col_ptr[c + 1] += 1;
        }
        for j in 0..n_cols {
            col_ptr[j + 1] += col_ptr[j];
        }
        let mut next = col_ptr.clone();
        let mut row_idx = vec![0usize; nnz];
        let mut value_perm = vec![0usize; nnz];
        for r in 0..n_rows {
            for k in row_ptr[r]..row_ptr[r + 1] {
                let c = col_idx[k];
                let slot = next[c];
                row_idx[slot] = r;
                value_perm[slot] = k;
                next[c] += 1;
            }
        }
        Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
            col_ptr,
            row_idx,
            value_perm,
        }
    }

    pub fn from_dense(d: &DenseMatrix<T>) -> Self {
        let mut row_ptr = Vec::with_capacity(d.n_rows() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..d.n_rows() {
            for j in 0..d.n_cols() {
                let v = d[(i, j)];
                if v != T::zero() {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self::from_csr_parts(d.n_rows(), d.n_cols(), row_ptr, col_idx, values)
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    /// Entries of row `i` as `(col, value)` in increasing column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    /// Entries of column `j` as `(row, value)` in increasing row order.
    pub fn col(&self, j: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.value_perm[r].iter().map(move |&k| self.values[k]))
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn col_nnz(&self, j: usize) -> usize {
        self.col_ptr[j + 1] - self.col_ptr[j]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => T::zero(),
        }
    }

    /// All entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// All entries in column-major order, read through the CSC mirror.
    pub fn triplets_col_major(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n_cols).flat_map(move |j| self.col(j).map(move |(i, v)| (i, j, v)))
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.n_rows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<T> {
        let mut s = vec![T::zero(); self.n_cols];
        for (k, &c) in self.col_idx.iter().enumerate() {
            s[c] += self.values[k];
        }
        s
    }

    pub fn spmv(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.n_cols {
            return Err(Error::SizeError(format!(
                "spmv: vector length {} vs {} columns",
                x.len(),
                self.n_cols
            )));
        }
        let mut y = vec![T::zero(); self.n_rows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    /// `y = A x` without length checks; callers guarantee dimensions.
    pub(crate) fn spmv_into(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = T::zero();
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yi = acc;
        }
    }

    /// `y = Aᵀ x`.
    pub fn spmv_transpose(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.n_rows {
            return Err(Error::SizeError(format!(
                "spmv_transpose: vector length {} vs {} rows",
                x.len(),
                self.n_rows
            )));
        }
        let mut y = vec![T::zero(); self.n_cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.col_idx[k]] += self.values[k] * xi;
            }
        }
        Ok(y)
    }

    pub fn transpose(&self) -> Self {
        let mut row_ptr = self.col_ptr.clone();
        row_ptr.truncate(self.n_cols + 1);
        let col_idx = self.row_idx.clone();
        let values = self.value_perm.iter().map(|&k| self.values[k]).collect();
        Self::from_csr_parts(self.n_cols, self.n_rows, row_ptr, col_idx, values)
    }

    pub fn scale(&self, s: T) -> Self {
        let mut out = self.clone();
        for v in &mut out.values {
            *v *= s;
        }
        out
    }

    /// `a·self + b·other`.
    pub fn add(&self, other: &Self, a: T, b: T) -> Result<Self> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::SizeError(format!(
                "add: {}x{} vs {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::with_capacity(self.nnz() + other.nnz());
        let mut values = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n_rows {
            let mut p = self.row_ptr[i];
            let pe = self.row_ptr[i + 1];
            let mut q = other.row_ptr[i];
            let qe = other.row_ptr[i + 1];
            while p < pe || q < qe {
                let cp = if p < pe { self.col_idx[p] } else { usize::MAX };
                let cq = if q < qe { other.col_idx[q] } else { usize::MAX };
                if cp < cq {
                    col_idx.push(cp);
                    values.push(a * self.values[p]);
                    p += 1;
                } else if cq < cp {
                    col_idx.push(cq);
                    values.push(b * other.values[q]);
                    q += 1;
                } else {
                    col_idx.push(cp);
                    values.push(a * self.values[p] + b * other.values[q]);
                    p += 1;
                    q += 1;
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self::from_csr_parts(self.n_rows, self.n_cols, row_ptr, col_idx, values))
    }

    /// Drops explicit zeros.
    pub fn compact(&self) -> Self {
        self.filter(|_, _, v| v != T::zero())
    }

    /// Keeps entries for which `keep(row, col, value)` holds.
    pub fn filter(&self, mut keep: impl FnMut(usize, usize, T) -> bool) -> Self {
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                if keep(i, j, v) {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self::from_csr_parts(self.n_rows, self.n_cols, row_ptr, col_idx, values)
    }

    /// Submatrix `A[rows, cols]`. The relative order of the selected
    /// indices is preserved.
    pub fn restrict(&self, rows: &[usize], cols: &[usize]) -> Result<Self> {
        let mut col_map = vec![usize::MAX; self.n_cols];
        for (new, &c) in cols.iter().enumerate() {
            if c >= self.n_cols {
                return Err(Error::IndexError { index: c, dim: self.n_cols });
            }
            col_map[c] = new;
        }
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut buf: Vec<(usize, T)> = Vec::new();
        for &r in rows {
            if r >= self.n_rows {
                return Err(Error::IndexError { index: r, dim: self.n_rows });
            }
            buf.clear();
            buf.extend(
                self.row(r)
                    .filter_map(|(c, v)| (col_map[c] != usize::MAX).then(|| (col_map[c], v))),
            );
            buf.sort_unstable_by_key(|e| e.0);
            for &(c, v) in &buf {
                col_idx.push(c);
                values.push(v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self::from_csr_parts(rows.len(), cols.len(), row_ptr, col_idx, values))
    }

    /// Places `self` into a `n_rows × n_cols` zero matrix at the given
    /// row/column index lists.
    pub fn embed(&self, rows: &[usize], cols: &[usize], n_rows: usize, n_cols: usize) -> Result<Self> {
        if rows.len() != self.n_rows || cols.len() != self.n_cols {
            return Err(Error::SizeError("embed: index list length mismatch".into()));
        }
        let trip = self
            .triplets()
            .map(|(i, j, v)| (rows[i], cols[j], v))
            .collect::<Vec<_>>();
        Self::from_triplets(n_rows, n_cols, trip)
    }

    /// Sparse product `self · other` (Gustavson row-by-row accumulation).
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.n_cols != other.n_rows {
            return Err(Error::SizeError(format!(
                "matmul: {}x{} times {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut acc = RowAccumulator::new(other.n_cols);
        let mut row_ptr = Vec::with_capacity(self.n_rows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..self.n_rows {
            for (k, a) in self.row(i) {
                for (j, b) in other.row(k) {
                    acc.add(j, a * b);
                }
            }
            acc.drain_into(&mut col_idx, &mut values);
            row_ptr.push(col_idx.len());
        }
        Ok(Self::from_csr_parts(self.n_rows, other.n_cols, row_ptr, col_idx, values))
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut d = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for (i, j, v) in self.triplets() {
            d[(i, j)] = v;
        }
        d
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Checks that the CSR and CSC views describe the same entry set.
    pub fn views_consistent(&self) -> bool {
        let mut a: Vec<(usize, usize, T)> = self.triplets().collect();
        let mut b: Vec<(usize, usize, T)> = self.triplets_col_major().collect();
        a.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        b.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
        a == b
    }
}

/// Dense scratch row (sparse accumulator) for row-wise products.
pub(crate) struct RowAccumulator<T> {
    vals: Vec<T>,
    used: Vec<bool>,
    touched: Vec<usize>,
}

impl<T: Scalar> RowAccumulator<T> {
    pub(crate) fn new(width: usize) -> Self {
        Self {
            vals: vec![T::zero(); width],
            used: vec![false; width],
            touched: Vec::new(),
        }
    }

    #[inline]
    pub(crate) fn add(&mut self, j: usize, v: T) {
        if !self.used[j] {
            self.used[j] = true;
            self.touched.push(j);
        }
        self.vals[j] += v;
    }

    /// Appends the accumulated row in column order and resets.
    pub(crate) fn drain_into(&mut self, col_idx: &mut Vec<usize>, values: &mut Vec<T>) {
        self.touched.sort_unstable();
        for &j in &self.touched {
            col_idx.push(j);
            values.push(self.vals[j]);
            self.vals[j] = T::zero();
            self.used[j] = false;
        }
        self.touched.clear();
    }
}
