//! Augmented matrices `M^(i,k)`, the block bijections `ψ^(i)` and repetition
//! matrices. Dense and small; used to check elimination identities.
//!
//! Layout: `[C, F_1, F_2, …, F_{2^{k-i}}]`, each `F_a` a copy of `F` in the
//! partition's order.

use serde::{Deserialize, Serialize};

use crate::dense::{exact_pbe, DenseMatrix};
use crate::error::{Error, Result};
use crate::laplacian::{DirectedLaplacian, Partition};
use crate::scalar::Scalar;

/// Largest augmented dimension `2^{k-i}|F| + |C|` accepted.
pub const AUGMENTED_CAP: usize = 512;
/// Largest `k` accepted.
pub const MAX_LEVEL: usize = 6;

/// Permutation of `[2^i]`, stored 0-based: `table[a] = ψ^(i)(a+1) - 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PsiBijection {
    pub level: usize,
    table: Vec<usize>,
}

impl PsiBijection {
    pub fn apply(&self, a: usize) -> usize {
        self.table[a]
    }

    pub fn table(&self) -> &[usize] {
        &self.table
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.table.len()];
        for &b in &self.table {
            if b >= seen.len() || seen[b] {
                return false;
            }
            seen[b] = true;
        }
        true
    }

    pub fn is_fixed_point_free(&self) -> bool {
        self.table.iter().enumerate().all(|(a, &b)| a != b)
    }
}

/// `ψ^(0)(1) = 1`; `ψ^(i)(a) = a + 2^{i-1}` on the lower half and
/// `ψ^(i-1)(a − 2^{i-1})` on the upper half.
pub fn psi(i: usize) -> PsiBijection {
    let mut table = vec![0usize];
    for level in 1..=i {
        let half = 1usize << (level - 1);
        let mut next = Vec::with_capacity(2 * half);
        next.extend((0..half).map(|a| a + half));
        next.extend(table.iter().copied());
        table = next;
    }
    PsiBijection { level: i, table }
}

/// What a block of `M^(i,k)` holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockSource {
    Dff,
    NegAff,
    NegAfc,
    NegAcf,
    ScaledLcc,
    /// `D_FF − A_FF` on the single diagonal block of `M^(k,k)`.
    Lff,
}

#[derive(Debug, Clone)]
pub struct AugmentedMatrix<T> {
    pub i: usize,
    pub k: usize,
    pub mat: DenseMatrix<T>,
    /// Nonzero block labels keyed by `(block_row, block_col)`, where block 0 is
    /// `C` and block `a ≥ 1` is `F_a`.
    pub block_layout: Vec<((usize, usize), BlockSource)>,
    c_len: usize,
    f_len: usize,
}

impl<T: Scalar> AugmentedMatrix<T> {
    pub fn copies(&self) -> usize {
        1 << (self.k - self.i)
    }

    pub fn c_indices(&self) -> Vec<usize> {
        (0..self.c_len).collect()
    }

    /// Indices of `F_a`, `a` 1-based.
    pub fn f_indices(&self, a: usize) -> Vec<usize> {
        let start = self.c_len + (a - 1) * self.f_len;
        (start..start + self.f_len).collect()
    }

    /// Indices of `F_{m/2+1} ∪ … ∪ F_m`, the blocks eliminated to reach the
    /// next level.
    pub fn upper_half(&self) -> Vec<usize> {
        let m = self.copies();
        (m / 2 + 1..=m).flat_map(|a| self.f_indices(a)).collect()
    }

    /// Indices outside `C ∪ F_1`.
    pub fn beyond_original(&self) -> Vec<usize> {
        (self.c_len + self.f_len..self.mat.n_rows()).collect()
    }

    /// Indices outside `C`.
    pub fn beyond_c(&self) -> Vec<usize> {
        (self.c_len..self.mat.n_rows()).collect()
    }

    /// Number of nonzero blocks in block row `r`.
    pub fn blocks_in_row(&self, r: usize) -> usize {
        self.block_layout.iter().filter(|((br, _), _)| *br == r).count()
    }

    pub fn blocks_in_col(&self, c: usize) -> usize {
        self.block_layout.iter().filter(|((_, bc), _)| *bc == c).count()
    }
}

/// `x̃ = (x_C, x_F, …, x_F)` with `copies` repetitions of `x_F`.
pub fn lift<T: Scalar>(x: &[T], part: &Partition, copies: usize) -> Vec<T> {
    let mut out: Vec<T> = part.c().iter().map(|&i| x[i]).collect();
    for _ in 0..copies {
        out.extend(part.f().iter().map(|&i| x[i]));
    }
    out
}

/// Permutes an `n × n` matrix into `[C, F]` order.
pub fn to_cf_order<T: Scalar>(a: &DenseMatrix<T>, part: &Partition) -> DenseMatrix<T> {
    let order: Vec<usize> = part.c().iter().chain(part.f()).copied().collect();
    a.submatrix(&order, &order)
}

pub fn build_augmented<T: Scalar>(
    l: &DirectedLaplacian<T>,
    part: &Partition,
    i: usize,
    k: usize,
) -> Result<AugmentedMatrix<T>> {
    if i > k || k > MAX_LEVEL {
        return Err(Error::InvalidInput(format!("need 0 <= i <= k <= {MAX_LEVEL}, got i={i}, k={k}")));
    }
    let (f, c) = (part.f(), part.c());
    let m = 1usize << (k - i);
    let size = m * f.len() + c.len();
    if size > AUGMENTED_CAP {
        return Err(Error::TooLarge { size, cap: AUGMENTED_CAP });
    }
    let (li, ai) = exact_pbe(l, part, i)?;
    let d_ff = DenseMatrix::from_diagonal(&f.iter().map(|&v| l.diag()[v]).collect::<Vec<_>>());
    let neg = |blk: DenseMatrix<T>| blk.scale(-T::one());
    let a_ff = neg(ai.submatrix(f, f));
    let a_fc = neg(ai.submatrix(f, c));
    let a_cf = neg(ai.submatrix(c, f));
    let l_cc = li.submatrix(c, c).scale(T::of_usize(m));

    let mut aug = AugmentedMatrix {
        i,
        k,
        mat: DenseMatrix::zeros(size, size),
        block_layout: Vec::new(),
        c_len: c.len(),
        f_len: f.len(),
    };
    let cc = aug.c_indices();
    aug.mat.set_block(&cc, &cc, &l_cc);
    aug.block_layout.push(((0, 0), BlockSource::ScaledLcc));
    let ps = psi(k - i);
    for a in 1..=m {
        let fa = aug.f_indices(a);
        let b = ps.apply(a - 1) + 1;
        if b == a {
            aug.mat.set_block(&fa, &fa, &d_ff.add(&a_ff, T::one(), T::one()));
            aug.block_layout.push(((a, a), BlockSource::Lff));
        } else {
            aug.mat.set_block(&fa, &fa, &d_ff);
            aug.block_layout.push(((a, a), BlockSource::Dff));
            let fb = aug.f_indices(b);
            aug.mat.set_block(&fa, &fb, &a_ff);
            aug.block_layout.push(((a, b), BlockSource::NegAff));
        }
        aug.mat.set_block(&fa, &cc, &a_fc);
        aug.block_layout.push(((a, 0), BlockSource::NegAfc));
        aug.mat.set_block(&cc, &fa, &a_cf);
        aug.block_layout.push(((0, a), BlockSource::NegAcf));
    }
    Ok(aug)
}

/// `rep(k, C, A)`: `k·A_CC` in the corner and `k` copies of the `F` blocks
/// along the border and the block diagonal.
pub fn repetition<T: Scalar>(k: usize, part: &Partition, a: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    repetition_padded(k, part, a, k * part.f().len() + part.c().len())
}

pub fn repetition_padded<T: Scalar>(
    k: usize,
    part: &Partition,
    a: &DenseMatrix<T>,
    n_total: usize,
) -> Result<DenseMatrix<T>> {
    if a.n_rows() != part.n() || a.n_cols() != part.n() {
        return Err(Error::SizeError("repetition: matrix and partition differ".into()));
    }
    let (f, c) = (part.f(), part.c());
    let need = k * f.len() + c.len();
    if n_total < need {
        return Err(Error::SizeError(format!("repetition needs {need} rows, got {n_total}")));
    }
    let mut out = DenseMatrix::zeros(n_total, n_total);
    let cc: Vec<usize> = (0..c.len()).collect();
    out.set_block(&cc, &cc, &a.submatrix(c, c).scale(T::of_usize(k)));
    let (a_cf, a_fc, a_ff) = (a.submatrix(c, f), a.submatrix(f, c), a.submatrix(f, f));
    for r in 0..k {
        let fr: Vec<usize> = (c.len() + r * f.len()..c.len() + (r + 1) * f.len()).collect();
        out.set_block(&cc, &fr, &a_cf);
        out.set_block(&fr, &cc, &a_fc);
        out.set_block(&fr, &fr, &a_ff);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::exact_schur;
    use crate::laplacian::build_laplacian;

    fn one_based(p: &PsiBijection) -> Vec<usize> {
        p.table().iter().map(|&b| b + 1).collect()
    }

    #[test]
    fn psi_small_levels() {
        assert_eq!(one_based(&psi(0)), vec![1]);
        assert_eq!(one_based(&psi(1)), vec![2, 1]);
        assert_eq!(one_based(&psi(2)), vec![3, 4, 2, 1]);
        for i in 1..=MAX_LEVEL {
            let p = psi(i);
            assert!(p.is_bijection() && p.is_fixed_point_free(), "level {i}");
        }
    }

    fn cycle3() -> DirectedLaplacian<f64> {
        build_laplacian(&[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)], 3).unwrap()
    }

    #[test]
    fn top_level_is_pbe_laplacian() {
        let part = Partition::from_f(&[0], 3).unwrap();
        let m = build_augmented(&cycle3(), &part, 1, 1).unwrap();
        let (l1, _) = exact_pbe(&cycle3(), &part, 1).unwrap();
        assert_eq!(m.mat, to_cf_order(&l1, &part));
    }

    #[test]
    fn cycle_three_block_matrix() {
        let l = cycle3();
        let part = Partition::from_f(&[0], 3).unwrap();
        let m = build_augmented(&l, &part, 0, 1).unwrap();
        // [C = {2,3}, F_1 = {1}, F_2 = {1}]; A_FF = 0, A_FC = [0 1], A_CF = [1 0]ᵀ.
        let want = DenseMatrix::from_rows(&[
            vec![2.0, 0.0, -1.0, -1.0],
            vec![-2.0, 2.0, 0.0, 0.0],
            vec![0.0, -1.0, 1.0, 0.0],
            vec![0.0, -1.0, 0.0, 1.0],
        ])
        .unwrap();
        assert_eq!(m.mat, want);
        for a in 1..=2 {
            assert_eq!(m.blocks_in_row(a), 3);
            assert_eq!(m.blocks_in_col(a), 3);
        }
        let keep: Vec<usize> = (0..3).collect();
        let sc = exact_schur(&m.mat, &Partition::from_c(&keep, 4).unwrap()).unwrap();
        let top = build_augmented(&l, &part, 1, 1).unwrap();
        assert!(sc.add(&top.mat, 1.0, -1.0).max_abs() < 1e-14);
    }

    #[test]
    fn size_cap() {
        let e: Vec<_> = (0..40).map(|i| (i, (i + 1) % 40, 1.0)).collect();
        let l = build_laplacian(&e, 40).unwrap();
        let f: Vec<usize> = (0..40).step_by(2).collect();
        let part = Partition::from_f(&f, 40).unwrap();
        assert!(matches!(build_augmented(&l, &part, 0, 5), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn repetition_k1_is_permutation() {
        let a = DenseMatrix::from_fn(4, 4, |i, j| (i * 4 + j) as f64);
        let part = Partition::from_f(&[0, 2], 4).unwrap();
        let r = repetition(1, &part, &a).unwrap();
        assert_eq!(r, a.submatrix(&[1, 3, 0, 2], &[1, 3, 0, 2]));
    }

    #[test]
    fn repetition_composes() {
        let a = DenseMatrix::from_fn(5, 5, |i, j| ((i * 7 + j * 3) % 5) as f64 - 1.0);
        let part = Partition::from_f(&[1, 4], 5).unwrap();
        let ra = repetition(2, &part, &a).unwrap();
        let inner = Partition::from_c(&[0, 1, 2], ra.n_rows()).unwrap();
        let rba = repetition(3, &inner, &ra).unwrap();
        assert_eq!(rba, repetition(6, &part, &a).unwrap());
    }

    #[test]
    fn padded_repetition() {
        let a = DenseMatrix::<f64>::identity(3);
        let part = Partition::from_f(&[0], 3).unwrap();
        let r = repetition_padded(2, &part, &a, 6).unwrap();
        assert_eq!(r.n_rows(), 6);
        assert_eq!(r[(5, 5)], 0.0);
        assert!(repetition_padded(2, &part, &a, 3).is_err());
    }
}
