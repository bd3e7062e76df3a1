//! Dense linear algebra used as the reference oracle and for the coarsest
//! chain level: symmetric eigensolver, SVD, LU, pseudoinverses, exact Schur
//! complements and exact partial block elimination.

use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplacian::{DirectedLaplacian, Partition};
use crate::scalar::Scalar;

/// Largest dimension the dense routines accept.
pub const ORACLE_CAP: usize = 2000;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    data: Vec<T>,
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n_cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n_cols + j]
    }
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![T::zero(); n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diagonal(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for i in 0..n_rows {
            for j in 0..n_cols {
                data.push(f(i, j));
            }
        }
        Self { n_rows, n_cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::SizeError("ragged rows".into()));
        }
        Ok(Self {
            n_rows,
            n_cols,
            data: rows.concat(),
        })
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.n_cols.max(1)).take(self.n_rows).map(|r| r.to_vec()).collect()
    }

    #[inline]
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    #[inline]
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n_cols, self.n_rows, |i, j| self[(j, i)])
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.n_cols, other.n_rows, "matmul shape");
        let mut out = Self::zeros(self.n_rows, other.n_cols);
        for i in 0..self.n_rows {
            let orow = &mut out.data[i * other.n_cols..(i + 1) * other.n_cols];
            for k in 0..self.n_cols {
                let a = self.data[i * self.n_cols + k];
                if a == T::zero() {
                    continue;
                }
                for (o, &b) in orow.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(self.n_cols, x.len(), "matvec shape");
        (0..self.n_rows)
            .map(|i| self.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// `a·self + b·other`.
    pub fn add(&self, other: &Self, a: T, b: T) -> Self {
        assert_eq!((self.n_rows, self.n_cols), (other.n_rows, other.n_cols), "add shape");
        Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            data: self.data.iter().zip(&other.data).map(|(&x, &y)| a * x + b * y).collect(),
        }
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            data: self.data.iter().map(|&x| x * s).collect(),
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.n_rows).map(|i| self.row(i).iter().copied().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<T> {
        let mut s = vec![T::zero(); self.n_cols];
        for i in 0..self.n_rows {
            for (acc, &v) in s.iter_mut().zip(self.row(i)) {
                *acc += v;
            }
        }
        s
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// `‖A‖∞`, the largest absolute row sum.
    pub fn inf_norm(&self) -> T {
        (0..self.n_rows)
            .map(|i| self.row(i).iter().map(|v| v.abs()).sum::<T>())
            .fold(T::zero(), |m, v| m.max(v))
    }

    /// `A[rows, cols]`.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self::from_fn(rows.len(), cols.len(), |i, j| self[(rows[i], cols[j])])
    }

    /// Writes `block` into `self[rows, cols]`.
    pub fn set_block(&mut self, rows: &[usize], cols: &[usize], block: &Self) {
        for (bi, &i) in rows.iter().enumerate() {
            for (bj, &j) in cols.iter().enumerate() {
                self[(i, j)] = block[(bi, bj)];
            }
        }
    }

    /// `(A + Aᵀ)/2`.
    pub fn symmetric_part(&self) -> Self {
        let half = T::of(0.5);
        Self::from_fn(self.n_rows, self.n_cols, |i, j| half * (self[(i, j)] + self[(j, i)]))
    }

    pub fn quad_form(&self, x: &[T]) -> T {
        self.matvec(x).iter().zip(x).map(|(&a, &b)| a * b).sum()
    }

    /// Largest relative deviation from symmetry.
    pub fn asymmetry(&self) -> T {
        let mut m = T::zero();
        for i in 0..self.n_rows {
            for j in 0..i {
                m = m.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        m / self.max_abs().max(T::min_positive_value())
    }
}

fn check_cap(n: usize) -> Result<()> {
    if n > ORACLE_CAP {
        Err(Error::TooLarge { size: n, cap: ORACLE_CAP })
    } else {
        Ok(())
    }
}

fn check_finite<T: Scalar>(a: &DenseMatrix<T>, what: &str) -> Result<()> {
    if a.is_finite() {
        Ok(())
    } else {
        Err(Error::NumericError(format!("{what}: non-finite input")))
    }
}

/// `½(A + Aᵀ − Diag((A + Aᵀ) 1))`.
pub fn undirectify_dense<T: Scalar>(a: &DenseMatrix<T>) -> DenseMatrix<T> {
    let mut u = a.symmetric_part();
    let sums = u.row_sums();
    for (i, s) in sums.into_iter().enumerate() {
        u[(i, i)] -= s;
    }
    u
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen<T> {
    /// Eigenvalues in ascending order.
    pub values: Vec<T>,
    /// Column `k` is the unit eigenvector of `values[k]`.
    pub vectors: DenseMatrix<T>,
}

/// Householder tridiagonalisation followed by implicit QL.
pub fn sym_eigen<T: Scalar>(a: &DenseMatrix<T>) -> Result<SymEigen<T>> {
    let n = a.n_rows();
    if n != a.n_cols() {
        return Err(Error::SizeError("eigen: matrix not square".into()));
    }
    check_cap(n)?;
    check_finite(a, "eigen")?;
    if n == 0 {
        return Ok(SymEigen {
            values: Vec::new(),
            vectors: DenseMatrix::zeros(0, 0),
        });
    }
    let mut v = a.symmetric_part();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).expect("finite eigenvalues"));
    let values = order.iter().map(|&k| d[k]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |i, j| v[(i, order[j])]);
    Ok(SymEigen { values, vectors })
}

fn tred2<T: Scalar>(v: &mut DenseMatrix<T>, d: &mut [T], e: &mut [T]) {
    let n = d.len();
    let zero = T::zero();
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = zero;
        let mut h = zero;
        for &dk in d.iter().take(i) {
            scale += dk.abs();
        }
        if scale == zero {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = zero;
                v[(j, i)] = zero;
            }
        } else {
            for dk in d.iter_mut().take(i) {
                *dk /= scale;
                h += *dk * *dk;
            }
            let f = d[i - 1];
            let mut g = h.sqrt();
            if f > zero {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = zero;
            }
            for j in 0..i {
                let f = d[j];
                v[(j, i)] = f;
                let mut g = e[j] + v[(j, j)] * f;
                for k in j + 1..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            let mut f = zero;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let f = d[j];
                let g = e[j];
                for k in j..i {
                    let t = f * e[k] + g * d[k];
                    v[(k, j)] -= t;
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = zero;
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = T::one();
        let h = d[i + 1];
        if h != zero {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = zero;
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    let t = g * d[k];
                    v[(k, j)] -= t;
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = zero;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = zero;
    }
    v[(n - 1, n - 1)] = T::one();
    e[0] = zero;
}

fn tql2<T: Scalar>(v: &mut DenseMatrix<T>, d: &mut [T], e: &mut [T]) -> Result<()> {
    let n = d.len();
    let zero = T::zero();
    let one = T::one();
    let two = T::of(2.0);
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = zero;
    let mut f = zero;
    let mut tst1 = zero;
    let eps = T::epsilon();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(Error::NumericError("eigen: QL iteration did not converge".into()));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(one);
                if p < zero {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;
                p = d[m];
                let mut c = one;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = zero;
                let mut s2 = zero;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let h = v[(k, i + 1)];
                        let vki = v[(k, i)];
                        v[(k, i + 1)] = s * vki + c * h;
                        v[(k, i)] = c * vki - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = zero;
    }
    Ok(())
}

/// Thin SVD `A = U Σ Vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: DenseMatrix<T>,
    pub sigma: Vec<T>,
    pub v: DenseMatrix<T>,
}

/// One-sided Jacobi SVD. Singular values come out in descending order.
pub fn svd<T: Scalar>(a: &DenseMatrix<T>) -> Result<Svd<T>> {
    check_cap(a.n_rows().max(a.n_cols()))?;
    check_finite(a, "svd")?;
    if a.n_rows() < a.n_cols() {
        let t = svd(&a.transpose())?;
        return Ok(Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }
    let m = a.n_rows();
    let n = a.n_cols();
    // Columns of A stored as rows for contiguous access.
    let mut w = a.transpose();
    let mut v = DenseMatrix::<T>::identity(n);
    let eps = T::epsilon();
    let mut converged = false;
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let wp = w.row(p);
                    let wq = w.row(q);
                    let mut a = T::zero();
                    let mut b = T::zero();
                    let mut g = T::zero();
                    for k in 0..m {
                        a += wp[k] * wp[k];
                        b += wq[k] * wq[k];
                        g += wp[k] * wq[k];
                    }
                    (a, b, g)
                };
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::of(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut w, p, q, c, s);
                rotate_rows(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NumericError("svd: Jacobi sweeps did not converge".into()));
    }
    let mut sigma: Vec<T> = (0..n).map(|j| w.row(j).iter().map(|&x| x * x).sum::<T>().sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).expect("finite"));
    let u = DenseMatrix::from_fn(m, n, |i, j| {
        let k = order[j];
        if sigma[k] > T::zero() {
            w[(k, i)] / sigma[k]
        } else {
            T::zero()
        }
    });
    let vv = DenseMatrix::from_fn(n, n, |i, j| v[(order[j], i)]);
    sigma = order.iter().map(|&k| sigma[k]).collect();
    Ok(Svd { u, sigma, v: vv })
}

fn rotate_rows<T: Scalar>(w: &mut DenseMatrix<T>, p: usize, q: usize, c: T, s: T) {
    let nc = w.n_cols();
    for k in 0..nc {
        let a = w[(p, k)];
        let b = w[(q, k)];
        w[(p, k)] = c * a - s * b;
        w[(q, k)] = s * a + c * b;
    }
}

/// Moore–Penrose pseudoinverse with cutoff `1e-12·σ_max`.
pub fn pinv<T: Scalar>(a: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let s = svd(a)?;
    let smax = s.sigma.first().copied().unwrap_or(T::zero());
    let cut = T::of(1e-12) * smax;
    let r = s.sigma.len();
    let mut out = DenseMatrix::zeros(a.n_cols(), a.n_rows());
    for k in 0..r {
        let sk = s.sigma[k];
        if sk <= cut || sk == T::zero() {
            continue;
        }
        let inv = T::one() / sk;
        for i in 0..a.n_cols() {
            let vik = s.v[(i, k)] * inv;
            if vik == T::zero() {
                continue;
            }
            for j in 0..a.n_rows() {
                out[(i, j)] += vik * s.u[(j, k)];
            }
        }
    }
    Ok(out)
}

/// LU factorisation with partial pivoting.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: DenseMatrix<T>,
    perm: Vec<usize>,
    max_abs: T,
}

impl<T: Scalar> Lu<T> {
    pub fn new(a: &DenseMatrix<T>) -> Result<Self> {
        let n = a.n_rows();
        if n != a.n_cols() {
            return Err(Error::SizeError("lu: matrix not square".into()));
        }
        check_cap(n)?;
        check_finite(a, "lu")?;
        let max_abs = a.max_abs();
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = lu[(k, k)].abs();
            for i in k + 1..n {
                let v = lu[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[(k, k)];
            if pivot == T::zero() {
                continue;
            }
            let (head, tail) = lu.data.split_at_mut((k + 1) * n);
            let krow = &head[k * n..(k + 1) * n];
            for row in tail.chunks_mut(n) {
                let l = row[k] / pivot;
                row[k] = l;
                if l == T::zero() {
                    continue;
                }
                for (x, &y) in row[k + 1..].iter_mut().zip(&krow[k + 1..]) {
                    *x -= l * y;
                }
            }
        }
        Ok(Self { lu, perm, max_abs })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    /// Smallest `|U_kk|` relative to the largest entry of the input.
    pub fn pivot_ratio(&self) -> T {
        let n = self.dim();
        if n == 0 {
            return T::one();
        }
        let m = (0..n).map(|k| self.lu[(k, k)].abs()).fold(T::infinity(), |a, b| a.min(b));
        if self.max_abs == T::zero() {
            T::zero()
        } else {
            m / self.max_abs
        }
    }

    pub fn is_singular(&self, rel_tol: T) -> bool {
        self.pivot_ratio() <= rel_tol
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        assert_eq!(b.len(), n, "lu solve shape");
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let row = self.lu.row(i);
            let mut s = x[i];
            for j in 0..i {
                s -= row[j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let row = self.lu.row(i);
            let mut s = x[i];
            for j in i + 1..n {
                s -= row[j] * x[j];
            }
            x[i] = s / row[i];
        }
        x
    }

    /// `A⁻¹ B`.
    pub fn solve_matrix(&self, b: &DenseMatrix<T>) -> DenseMatrix<T> {
        let bt = b.transpose();
        let mut out = DenseMatrix::zeros(b.n_cols(), b.n_rows());
        for j in 0..b.n_cols() {
            let x = self.solve(bt.row(j));
            out.row_mut(j).copy_from_slice(&x);
        }
        out.transpose()
    }

    pub fn inverse(&self) -> DenseMatrix<T> {
        self.solve_matrix(&DenseMatrix::identity(self.dim()))
    }
}

/// Solver for `L x = b` with `L` a strongly connected Eulerian Laplacian,
/// through the nonsingular matrix `L + 11ᵀ/n`.
#[derive(Debug, Clone)]
pub struct LaplacianOracle<T> {
    lu: Lu<T>,
}

impl<T: Scalar> LaplacianOracle<T> {
    pub fn new(l: &DenseMatrix<T>) -> Result<Self> {
        let n = l.n_rows();
        let shift = T::one() / T::of_usize(n.max(1));
        let mut m = l.clone();
        for v in m.data.iter_mut() {
            *v += shift;
        }
        let lu = Lu::new(&m)?;
        if lu.is_singular(T::of(1e-14)) {
            return Err(Error::SingularBlock("L + J/n (graph not strongly connected?)".into()));
        }
        Ok(Self { lu })
    }

    /// `L† b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = b.len();
        let mean = b.iter().copied().sum::<T>() / T::of_usize(n.max(1));
        let mut y = self.lu.solve(b);
        for v in &mut y {
            *v -= mean;
        }
        y
    }
}

/// `L†` for a strongly connected Eulerian Laplacian: `(L + J/n)⁻¹ − J/n`.
pub fn laplacian_pinv<T: Scalar>(l: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let n = l.n_rows();
    let o = LaplacianOracle::new(l)?;
    let mut inv = o.lu.inverse();
    let shift = T::one() / T::of_usize(n.max(1));
    for v in inv.data.iter_mut() {
        *v -= shift;
    }
    Ok(inv)
}

/// `sc(A, F) = A_CC − A_CF A_FF⁻¹ A_FC`.
pub fn exact_schur<T: Scalar>(a: &DenseMatrix<T>, part: &Partition) -> Result<DenseMatrix<T>> {
    if a.n_rows() != part.n() || a.n_cols() != part.n() {
        return Err(Error::SizeError(format!(
            "schur: {}x{} matrix, partition of {}",
            a.n_rows(),
            a.n_cols(),
            part.n()
        )));
    }
    let (f, c) = (part.f(), part.c());
    let acc = a.submatrix(c, c);
    if f.is_empty() {
        return Ok(acc);
    }
    let lu = Lu::new(&a.submatrix(f, f))?;
    if lu.is_singular(T::of(1e-12)) {
        return Err(Error::SingularBlock(format!(
            "A_FF pivot ratio {:e}",
            lu.pivot_ratio().as_f64()
        )));
    }
    let x = lu.solve_matrix(&a.submatrix(f, c));
    Ok(acc.add(&a.submatrix(c, f).matmul(&x), T::one(), -T::one()))
}

/// One exact partial-block-elimination step on dense `(L, A)` with fixed
/// `D_FF`.
pub(crate) fn pbe_step<T: Scalar>(
    l: &DenseMatrix<T>,
    a: &DenseMatrix<T>,
    d_f: &[T],
    part: &Partition,
) -> (DenseMatrix<T>, DenseMatrix<T>) {
    let n = part.n();
    let (f, c) = (part.f(), part.c());
    let two = T::of(2.0);
    let mut next = DenseMatrix::zeros(n, n);
    for (k, &i) in f.iter().enumerate() {
        next[(i, i)] = d_f[k];
        for &j in c {
            next[(i, j)] = -a[(i, j)];
            next[(j, i)] = -a[(j, i)];
        }
    }
    for &i in c {
        for &j in c {
            next[(i, j)] = two * l[(i, j)];
        }
    }
    // Subtract Σ_{k∈F} A_{:,k} A_{k,:} / D_kk.
    for (kk, &k) in f.iter().enumerate() {
        let inv = T::one() / d_f[kk];
        let arow: Vec<T> = a.row(k).to_vec();
        for i in 0..n {
            let aik = a[(i, k)];
            if aik == T::zero() {
                continue;
            }
            let s = aik * inv;
            for (j, &akj) in arow.iter().enumerate() {
                if akj != T::zero() {
                    next[(i, j)] -= s * akj;
                }
            }
        }
    }
    let next_a = pbe_weights(&next, d_f, part);
    (next, next_a)
}

/// `A = blockdiag(D_FF, Diag(L_CC)) − L`.
pub(crate) fn pbe_weights<T: Scalar>(l: &DenseMatrix<T>, d_f: &[T], part: &Partition) -> DenseMatrix<T> {
    let mut a = l.scale(-T::one());
    for (k, &i) in part.f().iter().enumerate() {
        a[(i, i)] += d_f[k];
    }
    for &i in part.c() {
        a[(i, i)] = T::zero();
    }
    a
}

/// Exact `k`-th partially block-eliminated Laplacian `L^(k)` and its weight
/// matrix `A^(k)`, both in the original vertex order.
pub fn exact_pbe<T: Scalar>(
    l: &DirectedLaplacian<T>,
    part: &Partition,
    k: usize,
) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
    if l.n() != part.n() {
        return Err(Error::SizeError("pbe: partition size".into()));
    }
    check_cap(l.n())?;
    let d_f: Vec<T> = part.f().iter().map(|&i| l.diag()[i]).collect();
    if let Some(pos) = d_f.iter().position(|&d| d == T::zero()) {
        return Err(Error::SingularBlock(format!("zero diagonal at F vertex {}", part.f()[pos])));
    }
    let mut lk = l.to_dense();
    let diag = l.diag().to_vec();
    let mut ak = lk.scale(-T::one());
    for (i, &d) in diag.iter().enumerate() {
        ak[(i, i)] += d;
    }
    for _ in 0..k {
        let (nl, na) = pbe_step(&lk, &ak, &d_f, part);
        lk = nl;
        ak = na;
    }
    Ok((lk, ak))
}

/// Positive part of a symmetric PSD matrix, factored for repeated
/// `U^{†/2} · U^{†/2}` conjugation.
#[derive(Debug, Clone)]
pub struct PsdRoot<T> {
    /// `V₊ Λ₊^{-1/2}`, `n × r`.
    half_pinv: DenseMatrix<T>,
    /// Orthonormal kernel basis, `n × (n − r)`.
    kernel: DenseMatrix<T>,
    lambda_max: T,
    min_eig: T,
}

/// Result of measuring `‖U^{†/2} A U^{†/2}‖₂` and the kernel inclusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymMeasureReport {
    pub value: f64,
    pub kernel_ok: bool,
    /// Largest `‖A v‖, ‖Aᵀ v‖` over the kernel basis, relative to `‖A‖_F`.
    pub kernel_residual: f64,
}

impl AsymMeasureReport {
    /// `A ⪯̃ δ·U` as a boolean.
    pub fn within(&self, delta: f64) -> bool {
        self.kernel_ok && self.value <= delta
    }
}

impl<T: Scalar> PsdRoot<T> {
    pub fn new(u: &DenseMatrix<T>, psd_tol: f64) -> Result<Self> {
        let eig = sym_eigen(u)?;
        let n = u.n_rows();
        let lambda_max = eig.values.last().copied().unwrap_or(T::zero()).max(T::zero());
        let min_eig = eig.values.first().copied().unwrap_or(T::zero());
        if min_eig.as_f64() < -psd_tol * lambda_max.as_f64().max(1.0) {
            return Err(Error::NotPsd { min_eig: min_eig.as_f64() });
        }
        let rel = 1e-12f64.max(10.0 * n as f64 * T::epsilon().as_f64());
        let cut = T::of(rel) * lambda_max;
        let pos: Vec<usize> = (0..n).filter(|&k| eig.values[k] > cut).collect();
        let ker: Vec<usize> = (0..n).filter(|&k| eig.values[k] <= cut).collect();
        let half_pinv = DenseMatrix::from_fn(n, pos.len(), |i, j| {
            eig.vectors[(i, pos[j])] / eig.values[pos[j]].sqrt()
        });
        let kernel = DenseMatrix::from_fn(n, ker.len(), |i, j| eig.vectors[(i, ker[j])]);
        Ok(Self {
            half_pinv,
            kernel,
            lambda_max,
            min_eig,
        })
    }

    pub fn rank(&self) -> usize {
        self.half_pinv.n_cols()
    }

    pub fn lambda_max(&self) -> T {
        self.lambda_max
    }

    pub fn min_eig(&self) -> T {
        self.min_eig
    }

    /// `Λ₊^{-1/2} V₊ᵀ A V₊ Λ₊^{-1/2}`.
    pub fn conjugate(&self, a: &DenseMatrix<T>) -> DenseMatrix<T> {
        let w = &self.half_pinv;
        w.transpose().matmul(&a.matmul(w))
    }

    pub fn measure(&self, a: &DenseMatrix<T>, kernel_tol: f64) -> Result<AsymMeasureReport> {
        if a.n_rows() != self.half_pinv.n_rows() || a.n_cols() != a.n_rows() {
            return Err(Error::SizeError("asym_measure: shape mismatch".into()));
        }
        check_finite(a, "asym_measure")?;
        let value = spectral_norm(&self.conjugate(a))?.as_f64();
        let scale = a.frobenius_norm().as_f64().max(self.lambda_max.as_f64()).max(f64::MIN_POSITIVE);
        let at = a.transpose();
        let mut worst = 0.0f64;
        for k in 0..self.kernel.n_cols() {
            let v: Vec<T> = (0..self.kernel.n_rows()).map(|i| self.kernel[(i, k)]).collect();
            for m in [&*a, &at] {
                let r = m.matvec(&v).iter().map(|&x| x * x).sum::<T>().sqrt().as_f64();
                worst = worst.max(r / scale);
            }
        }
        Ok(AsymMeasureReport {
            value,
            kernel_ok: worst <= kernel_tol,
            kernel_residual: worst,
        })
    }
}

/// `‖U^{†/2} A U^{†/2}‖₂` and the kernel condition, in one call.
pub fn asym_measure<T: Scalar>(a: &DenseMatrix<T>, u: &DenseMatrix<T>, psd_tol: f64) -> Result<AsymMeasureReport> {
    PsdRoot::new(u, psd_tol)?.measure(a, psd_tol)
}

/// Largest singular value.
pub fn spectral_norm<T: Scalar>(a: &DenseMatrix<T>) -> Result<T> {
    if a.n_rows() == 0 || a.n_cols() == 0 {
        return Ok(T::zero());
    }
    let g = if a.n_rows() >= a.n_cols() {
        a.transpose().matmul(a)
    } else {
        a.matmul(&a.transpose())
    };
    let top = sym_eigen(&g)?.values.last().copied().unwrap_or(T::zero());
    Ok(top.max(T::zero()).sqrt())
}

pub fn min_eig<T: Scalar>(u: &DenseMatrix<T>) -> Result<T> {
    Ok(sym_eigen(u)?.values.first().copied().unwrap_or(T::zero()))
}

/// Second-smallest eigenvalue of a symmetric matrix.
pub fn lambda2<T: Scalar>(u: &DenseMatrix<T>) -> Result<T> {
    let vals = sym_eigen(u)?.values;
    vals.get(1).copied().ok_or_else(|| Error::SizeError("lambda2 needs n >= 2".into()))
}

/// `√(xᵀ U x)`, clamped at zero for round-off.
pub fn u_norm<T: Scalar>(u: &DenseMatrix<T>, x: &[T]) -> T {
    u.quad_form(x).max(T::zero()).sqrt()
}

/// Smallest eigenvalue of `big − small`, scaled by `‖big‖₂`: a quantitative
/// `small ⪯ big` margin.
pub fn loewner_margin<T: Scalar>(big: &DenseMatrix<T>, small: &DenseMatrix<T>) -> Result<f64> {
    let diff = big.add(small, T::one(), -T::one());
    let e = sym_eigen(&diff)?;
    let norm = sym_eigen(big)?
        .values
        .iter()
        .fold(0.0f64, |m, v| m.max(v.as_f64().abs()))
        .max(f64::MIN_POSITIVE);
    Ok(e.values[0].as_f64() / norm)
}
