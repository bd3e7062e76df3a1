//! Directed Laplacians, vertex partitions and diagonal-dominance checks.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::scalar::{kahan_sum, Scalar};
use crate::sparse::SparseMatrix;

/// Numerical tolerances for structural and spectral checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative threshold (against the largest diagonal) for zero-sum checks.
    pub structural_tol: f64,
    /// Eigenvalue floor for PSD assertions.
    pub psd_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            structural_tol: 1e-9,
            psd_tol: 1e-8,
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        if !(self.structural_tol > 0.0 && self.psd_tol > 0.0) {
            return Err(Error::InvalidInput("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Square matrix with non-positive off-diagonals and zero column sums.
///
/// `L[i][j] = -w(j -> i)` and the diagonal carries weighted out-degrees.
/// Row sums, column sums and the diagonal are cached at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedLaplacian<T> {
    mat: SparseMatrix<T>,
    diag: Vec<T>,
    row_sums: Vec<T>,
    col_sums: Vec<T>,
    eulerian: bool,
}

impl<T: Scalar> DirectedLaplacian<T> {
    /// Builds from weighted edges `(src, dst, w)`. Parallel edges merge.
    pub fn from_edges(n: usize, edges: &[(usize, usize, T)]) -> Result<Self> {
        let mut trip = Vec::with_capacity(edges.len() * 2);
        let mut out: Vec<Vec<T>> = vec![Vec::new(); n];
        for &(src, dst, w) in edges {
            if src >= n || dst >= n {
                return Err(Error::InvalidEdge { src, dst, reason: "vertex index out of range" });
            }
            if src == dst {
                return Err(Error::InvalidEdge { src, dst, reason: "self-loop" });
            }
            if !(w > T::zero()) || !w.is_finite() {
                return Err(Error::InvalidEdge { src, dst, reason: "weight must be positive and finite" });
            }
            trip.push((dst, src, -w));
            out[src].push(w);
        }
        for (v, ws) in out.iter().enumerate() {
            if !ws.is_empty() {
                trip.push((v, v, kahan_sum(ws.iter().copied())));
            }
        }
        let mat = SparseMatrix::from_triplets_unchecked(n, n, trip);
        Ok(Self::from_matrix_unchecked(mat))
    }

    /// Wraps a matrix after checking the directed-Laplacian structure.
    pub fn from_matrix(mat: SparseMatrix<T>, tol: &Tolerances) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::NotLaplacian(format!(
                "{}x{} is not square",
                mat.n_rows(),
                mat.n_cols()
            )));
        }
        for (i, j, v) in mat.triplets() {
            if !v.is_finite() {
                return Err(Error::NumericError(format!("entry ({i},{j}) is {v}")));
            }
            if i != j && v > T::zero() {
                return Err(Error::NotLaplacian(format!("positive off-diagonal at ({i},{j})")));
            }
        }
        let l = Self::from_matrix_unchecked(mat);
        let scale = l.max_diag().as_f64().max(f64::MIN_POSITIVE);
        let col_res = l.col_sums.iter().fold(0.0f64, |m, v| m.max(v.as_f64().abs()));
        if col_res > tol.structural_tol * scale {
            return Err(Error::NotLaplacian(format!(
                "column sums nonzero (residual {col_res:e})"
            )));
        }
        let mut l = l;
        l.eulerian = l.row_residual() <= tol.structural_tol * scale;
        Ok(l)
    }

    /// Caches sums and flags Eulerianness at the default tolerance without
    /// validating structure. Used on intermediates whose structure holds by
    /// construction and is re-checked at stage boundaries.
    pub(crate) fn from_matrix_unchecked(mat: SparseMatrix<T>) -> Self {
        let n = mat.n_rows();
        let diag = mat.diagonal();
        let row_sums = (0..n).map(|i| kahan_sum(mat.row(i).map(|(_, v)| v))).collect();
        let col_sums = (0..n).map(|j| kahan_sum(mat.col(j).map(|(_, v)| v))).collect();
        let mut l = Self {
            mat,
            diag,
            row_sums,
            col_sums,
            eulerian: false,
        };
        let scale = l.max_diag().as_f64().max(f64::MIN_POSITIVE);
        l.eulerian = l.residual() <= Tolerances::default().structural_tol * scale;
        l
    }

    pub fn n(&self) -> usize {
        self.mat.n_rows()
    }

    pub fn nnz(&self) -> usize {
        self.mat.nnz()
    }

    pub fn matrix(&self) -> &SparseMatrix<T> {
        &self.mat
    }

    pub fn into_matrix(self) -> SparseMatrix<T> {
        self.mat
    }

    pub fn diag(&self) -> &[T] {
        &self.diag
    }

    pub fn row_sums(&self) -> &[T] {
        &self.row_sums
    }

    pub fn col_sums(&self) -> &[T] {
        &self.col_sums
    }

    /// Weighted out-degrees.
    pub fn out_degrees(&self) -> Vec<T> {
        self.diag.clone()
    }

    /// Weighted in-degrees, `d_i - (L 1)_i`.
    pub fn in_degrees(&self) -> Vec<T> {
        self.diag
            .iter()
            .zip(&self.row_sums)
            .map(|(&d, &r)| d - r)
            .collect()
    }

    pub fn max_diag(&self) -> T {
        self.diag.iter().fold(T::zero(), |m, &d| m.max(d))
    }

    /// Flag computed at construction.
    pub fn eulerian_flag(&self) -> bool {
        self.eulerian
    }

    /// `‖L 1‖∞`.
    pub fn row_residual(&self) -> f64 {
        self.row_sums.iter().fold(0.0f64, |m, v| m.max(v.as_f64().abs()))
    }

    /// `max(‖L 1‖∞, ‖1ᵀ L‖∞)`.
    pub fn residual(&self) -> f64 {
        let c = self.col_sums.iter().fold(0.0f64, |m, v| m.max(v.as_f64().abs()));
        c.max(self.row_residual())
    }

    /// Residual divided by the largest diagonal entry (0 for the zero matrix).
    pub fn relative_residual(&self) -> f64 {
        let s = self.max_diag().as_f64();
        if s == 0.0 {
            self.residual()
        } else {
            self.residual() / s
        }
    }

    pub fn is_eulerian(&self, tol: f64) -> bool {
        self.residual() <= tol * self.max_diag().as_f64().max(f64::MIN_POSITIVE)
    }

    pub fn require_eulerian(&self, tol: f64) -> Result<()> {
        if self.is_eulerian(tol) {
            Ok(())
        } else {
            Err(Error::NotEulerian {
                residual: self.relative_residual(),
                allowed: tol,
            })
        }
    }

    /// `½(L + Lᵀ − Diag((L + Lᵀ) 1))`. For Eulerian inputs this is `(L + Lᵀ)/2`.
    pub fn undirectify(&self) -> SparseMatrix<T> {
        undirectify(&self.mat)
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        self.mat.to_dense()
    }

    /// Edges `(src, dst, w)` read off the off-diagonal entries.
    pub fn edges(&self) -> Vec<(usize, usize, T)> {
        self.mat
            .triplets()
            .filter(|&(i, j, v)| i != j && v != T::zero())
            .map(|(i, j, v)| (j, i, -v))
            .collect()
    }

    /// Strong connectivity of the graph on the off-diagonal support.
    pub fn is_strongly_connected(&self) -> bool {
        let n = self.n();
        if n <= 1 {
            return true;
        }
        // Row i lists sources j with j -> i; column j lists targets i.
        let forward = reach(n, |v, out: &mut Vec<usize>| {
            out.extend(self.mat.col(v).filter(|&(i, w)| i != v && w != T::zero()).map(|(i, _)| i))
        });
        let backward = reach(n, |v, out: &mut Vec<usize>| {
            out.extend(self.mat.row(v).filter(|&(j, w)| j != v && w != T::zero()).map(|(j, _)| j))
        });
        forward && backward
    }

    pub fn scale(&self, s: T) -> Self {
        Self::from_matrix_unchecked(self.mat.scale(s))
    }
}

fn reach(n: usize, mut nbrs: impl FnMut(usize, &mut Vec<usize>)) -> bool {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    let mut buf = Vec::new();
    while let Some(v) = queue.pop_front() {
        buf.clear();
        nbrs(v, &mut buf);
        for &u in &buf {
            if !seen[u] {
                seen[u] = true;
                count += 1;
                queue.push_back(u);
            }
        }
    }
    count == n
}

/// Free-function form of [`DirectedLaplacian::from_edges`].
pub fn build_laplacian<T: Scalar>(edges: &[(usize, usize, T)], n: usize) -> Result<DirectedLaplacian<T>> {
    DirectedLaplacian::from_edges(n, edges)
}

/// `½(A + Aᵀ − Diag((A + Aᵀ) 1))` for any square sparse `A`.
pub fn undirectify<T: Scalar>(a: &SparseMatrix<T>) -> SparseMatrix<T> {
    let half = T::of(0.5);
    let sym = a.add(&a.transpose(), half, half).expect("square");
    let fix: Vec<T> = sym.row_sums().into_iter().map(|s| -s).collect();
    let d = SparseMatrix::from_diagonal(&fix);
    sym.add(&d, T::one(), T::one()).expect("same shape").compact()
}

/// Largest α for which a matrix is α-RCDD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RcddMargin {
    /// Finite margin `α ≥ 0`.
    Alpha(f64),
    /// Every off-diagonal row and column sum is zero.
    Unbounded,
    /// Some row or column is not even weakly diagonally dominant.
    NotRcdd,
}

impl RcddMargin {
    pub fn at_least(&self, alpha: f64) -> bool {
        match *self {
            RcddMargin::Alpha(a) => a >= alpha,
            RcddMargin::Unbounded => true,
            RcddMargin::NotRcdd => false,
        }
    }

    /// `f64::INFINITY` for the unbounded case, `None` when not RCDD.
    pub fn value(&self) -> Option<f64> {
        match *self {
            RcddMargin::Alpha(a) => Some(a),
            RcddMargin::Unbounded => Some(f64::INFINITY),
            RcddMargin::NotRcdd => None,
        }
    }
}

/// `min over rows and columns of A_ii / Σ_{j≠i}|A_ij| − 1`.
pub fn rcdd_margin<T: Scalar>(a: &SparseMatrix<T>) -> RcddMargin {
    let n = a.n_rows().min(a.n_cols());
    let mut row_off = vec![0.0f64; a.n_rows()];
    let mut col_off = vec![0.0f64; a.n_cols()];
    let mut diag = vec![0.0f64; n];
    for (i, j, v) in a.triplets() {
        if i == j {
            diag[i] = v.as_f64();
        } else {
            row_off[i] += v.as_f64().abs();
            col_off[j] += v.as_f64().abs();
        }
    }
    let mut alpha = f64::INFINITY;
    for (i, &d) in diag.iter().enumerate() {
        for off in [row_off[i], col_off[i]] {
            if off == 0.0 {
                if d < 0.0 {
                    return RcddMargin::NotRcdd;
                }
                continue;
            }
            let a = d / off - 1.0;
            if a < 0.0 {
                return RcddMargin::NotRcdd;
            }
            alpha = alpha.min(a);
        }
    }
    if alpha.is_infinite() {
        RcddMargin::Unbounded
    } else {
        RcddMargin::Alpha(alpha)
    }
}

/// Split of `[n]` into eliminated vertices `F` and kept vertices `C`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    f: Vec<usize>,
    c: Vec<usize>,
    n: usize,
}

impl Partition {
    /// `C` is the complement of `F`. Duplicates in `f` are rejected.
    pub fn from_f(f: &[usize], n: usize) -> Result<Self> {
        let mut in_f = vec![false; n];
        for &i in f {
            if i >= n {
                return Err(Error::IndexError { index: i, dim: n });
            }
            if in_f[i] {
                return Err(Error::InvalidInput(format!("vertex {i} listed twice in F")));
            }
            in_f[i] = true;
        }
        let f = (0..n).filter(|&i| in_f[i]).collect();
        let c = (0..n).filter(|&i| !in_f[i]).collect();
        Ok(Self { f, c, n })
    }

    pub fn from_c(c: &[usize], n: usize) -> Result<Self> {
        let p = Self::from_f(c, n)?;
        Ok(Self { f: p.c, c: p.f, n })
    }

    pub fn f(&self) -> &[usize] {
        &self.f
    }

    pub fn c(&self) -> &[usize] {
        &self.c
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Membership mask for `F`.
    pub fn f_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.n];
        for &i in &self.f {
            m[i] = true;
        }
        m
    }

    /// For each vertex, its position within `F` or `C`.
    pub fn local_index(&self) -> Vec<usize> {
        let mut pos = vec![0; self.n];
        for (k, &i) in self.f.iter().enumerate() {
            pos[i] = k;
        }
        for (k, &i) in self.c.iter().enumerate() {
            pos[i] = k;
        }
        pos
    }
}
