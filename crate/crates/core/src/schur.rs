//! Sparsified Schur complements by repeated approximate partial block
//! elimination, biclique sampling and a one-vertex degree patch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplacian::{rcdd_margin, DirectedLaplacian, Partition, RcddMargin, Tolerances};
use crate::rng::RngStream;
use crate::scalar::{kahan_sum, Scalar};
use crate::sparse::SparseMatrix;
use crate::sparsify::{product_into, se, se_unchecked, sp_into, spar_e, SparsifierConfig};

/// Triplets buffered before folding into the running sum.
const FOLD_AT: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchurConfig {
    pub sparsifier: SparsifierConfig,
    /// Overrides the number of elimination rounds `K`.
    pub rounds: Option<usize>,
    pub tol: Tolerances,
    /// Keep every `Ltt^(k)` in the trace.
    pub keep_iterates: bool,
}

impl Default for SchurConfig {
    fn default() -> Self {
        Self {
            sparsifier: SparsifierConfig::default(),
            rounds: None,
            tol: Tolerances::default(),
            keep_iterates: false,
        }
    }
}

impl SchurConfig {
    pub fn exact() -> Self {
        Self {
            sparsifier: SparsifierConfig::passthrough_exact(),
            ..Self::default()
        }
    }
}

/// `K = ⌈log₂ log₂(n/δ)⌉ + 2`.
pub fn default_rounds(n: usize, delta: f64) -> usize {
    let inner = (n.max(2) as f64 / delta).log2().max(1.0);
    (inner.log2().ceil().max(0.0) as usize) + 2
}

/// Closed-form bound `n²‖D_FF‖ / (2^{K−1} α) · (1/(1+α))^{2^K}` on the
/// spectral norm of the patch plus truncation error.
pub fn patch_bound(n: usize, d_ff_max: f64, rounds: usize, alpha: f64) -> f64 {
    let n = n as f64;
    let decay = (1.0 / (1.0 + alpha)).powf(2f64.powi(rounds as i32));
    n * n * d_ff_max / (2f64.powi(rounds as i32 - 1) * alpha) * decay
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    /// Relative Eulerian residual of `Ltt^(k,0)` before sparsification.
    pub assembled_residual: f64,
    /// Relative Eulerian residual of `Ltt^(k)`.
    pub residual: f64,
    /// `‖D_FF⁻¹ Att^(k)_FF‖∞`.
    pub att_ff_norm: f64,
    pub nnz: usize,
    /// Biclique products that were sampled rather than formed exactly.
    pub sampled_products: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchurTrace {
    pub n: usize,
    pub n_f: usize,
    pub n_c: usize,
    pub rounds: usize,
    pub eps: f64,
    pub margin: RcddMargin,
    pub guard_applied: bool,
    /// `‖D_FF⁻¹ Att^(0)_FF‖∞`.
    pub att_ff_norm0: f64,
    pub d_ff_max: f64,
    pub per_round: Vec<RoundTrace>,
    /// Relative residual of `S^(0) + R`.
    pub patched_residual: f64,
    /// Relative residual of the returned `S`.
    pub output_residual: f64,
    pub patch_frobenius: f64,
    pub output_nnz: usize,
    pub strongly_connected: bool,
}

impl SchurTrace {
    fn trivial(n: usize, n_f: usize) -> Self {
        Self {
            n,
            n_f,
            n_c: n - n_f,
            rounds: 0,
            eps: 0.0,
            margin: RcddMargin::Unbounded,
            guard_applied: false,
            att_ff_norm0: 0.0,
            d_ff_max: 0.0,
            per_round: Vec::new(),
            patched_residual: 0.0,
            output_residual: 0.0,
            patch_frobenius: 0.0,
            output_nnz: 0,
            strongly_connected: true,
        }
    }
}

/// Everything `sparse_schur_traced` returns.
#[derive(Debug, Clone)]
pub struct SchurOutput<T> {
    /// Laplacian on `C`, indexed by position in `part.c()`.
    pub s: DirectedLaplacian<T>,
    pub trace: SchurTrace,
    /// `Ltt^(k)` for `k = 0..=K` when requested.
    pub iterates: Vec<SparseMatrix<T>>,
}

pub fn sparse_schur<T: Scalar>(
    l: &DirectedLaplacian<T>,
    part: &Partition,
    delta: f64,
    cfg: &SchurConfig,
    stream: RngStream,
) -> Result<DirectedLaplacian<T>> {
    Ok(sparse_schur_traced(l, part, delta, cfg, stream)?.s)
}

/// Sum of sparse pieces, folded in bounded-size batches.
struct TripletSum<T> {
    n: usize,
    buf: Vec<(usize, usize, T)>,
    acc: Option<SparseMatrix<T>>,
}

impl<T: Scalar> TripletSum<T> {
    fn new(n: usize) -> Self {
        Self { n, buf: Vec::new(), acc: None }
    }

    fn maybe_fold(&mut self) {
        if self.buf.len() >= FOLD_AT {
            self.fold();
        }
    }

    fn fold(&mut self) {
        let part = SparseMatrix::from_triplets_unchecked(self.n, self.n, std::mem::take(&mut self.buf));
        self.acc = Some(match self.acc.take() {
            None => part,
            Some(a) => a.add(&part, T::one(), T::one()).expect("same shape"),
        });
    }

    fn finish(mut self) -> SparseMatrix<T> {
        self.fold();
        self.acc.expect("folded")
    }
}

fn positive_entries<T: Scalar>(it: impl Iterator<Item = (usize, T)>, keep: impl Fn(usize) -> bool) -> Vec<(usize, T)> {
    it.filter(|&(j, v)| v > T::zero() && keep(j)).collect()
}

fn drift_check<T: Scalar>(l: &DirectedLaplacian<T>, tol: &Tolerances, stage: String) -> Result<f64> {
    let r = l.relative_residual();
    if r > tol.structural_tol {
        return Err(Error::NumericDrift { stage, residual: r });
    }
    Ok(r)
}

/// `Att = blockdiag(D_FF, Diag(Ltt_CC)) − Ltt`. Tiny negative self-loop mass
/// from round-off is clamped to zero.
fn weights_from<T: Scalar>(ltt: &SparseMatrix<T>, d: &[T], in_f: &[bool]) -> SparseMatrix<T> {
    ltt.triplets()
        .filter_map(|(i, j, v)| {
            if i != j {
                return Some((i, j, -v));
            }
            if !in_f[i] {
                return None;
            }
            let w = d[i] - v;
            (w > T::zero()).then_some((i, i, w))
        })
        .fold(TripletSum::new(ltt.n_rows()), |mut s, t| {
            s.buf.push(t);
            s
        })
        .finish()
}

/// `max_{i∈F} Σ_{j∈F} Att_ij / D_ii`.
fn att_ff_norm<T: Scalar>(att: &SparseMatrix<T>, d: &[T], part: &Partition, in_f: &[bool]) -> f64 {
    part.f()
        .iter()
        .map(|&i| {
            let s = kahan_sum(att.row(i).filter(|&(j, _)| in_f[j]).map(|(_, v)| v));
            s.as_f64() / d[i].as_f64()
        })
        .fold(0.0, f64::max)
}

pub fn sparse_schur_traced<T: Scalar>(
    l: &DirectedLaplacian<T>,
    part: &Partition,
    delta: f64,
    cfg: &SchurConfig,
    stream: RngStream,
) -> Result<SchurOutput<T>> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta must lie in (0,1), got {delta}")));
    }
    cfg.sparsifier.validate()?;
    cfg.tol.validate()?;
    let n = l.n();
    if part.n() != n {
        return Err(Error::SizeError(format!("partition of {} for a {n}-vertex Laplacian", part.n())));
    }
    l.require_eulerian(cfg.tol.structural_tol)?;
    let (f, c) = (part.f(), part.c());
    if c.is_empty() {
        return Err(Error::InvalidInput("C must be nonempty".into()));
    }
    if c.len() == 1 {
        return Ok(SchurOutput {
            s: DirectedLaplacian::from_matrix_unchecked(SparseMatrix::zeros(1, 1)),
            trace: SchurTrace::trivial(n, f.len()),
            iterates: Vec::new(),
        });
    }
    let margin = rcdd_margin(&l.matrix().restrict(f, f)?);
    if margin.value().map_or(true, |a| a <= 0.0) {
        return Err(Error::PreconditionViolated("L_FF is not RCDD".into()));
    }
    let d = l.diag().to_vec();
    let d_ff_max = f.iter().map(|&i| d[i].as_f64()).fold(0.0, f64::max);
    let rounds = cfg.rounds.unwrap_or_else(|| default_rounds(n, delta));
    let eps = delta / (8.0 * rounds.max(1) as f64);
    let mut trace = SchurTrace {
        rounds,
        eps,
        margin,
        d_ff_max,
        ..SchurTrace::trivial(n, f.len())
    };
    if f.is_empty() {
        return Ok(SchurOutput { s: l.clone(), trace, iterates: Vec::new() });
    }

    let scfg = &cfg.sparsifier;
    let mut ltt = if (l.nnz() as f64) >= scfg.edge_budget(n, delta) {
        trace.guard_applied = true;
        se(l, delta / 4.0, part, scfg, stream.derive(0x5C, 0))?
    } else {
        l.clone()
    };
    let in_f = part.f_mask();
    let mut att = weights_from(ltt.matrix(), &d, &in_f);
    trace.att_ff_norm0 = att_ff_norm(&att, &d, part, &in_f);
    let mut iterates = Vec::new();
    if cfg.keep_iterates {
        iterates.push(ltt.matrix().clone());
    }
    let two = T::of(2.0);

    for k in 1..=rounds {
        let att_t = att.transpose();
        let mut ysum = TripletSum::new(n);
        let mut sampled = 0usize;
        for &i in f {
            let xs = positive_entries(att_t.row(i), |_| true);
            let ys = positive_entries(att.row(i), |_| true);
            let inv = T::one() / d[i];
            let st = stream.derive(0x100 + k as u64, i as u64);
            if sp_into(&xs, &ys, inv, eps, &in_f, scfg, n, st, &mut ysum.buf) {
                sampled += 1;
            }
            ysum.maybe_fold();
        }
        let y = ysum.finish();

        // [[D_FF, −Att_FC], [−Att_CF, 2 Ltt_CC]] − Y
        let mut trip: Vec<(usize, usize, T)> = Vec::with_capacity(att.nnz() + ltt.nnz() + y.nnz() + f.len());
        trip.extend(f.iter().map(|&i| (i, i, d[i])));
        trip.extend(att.triplets().filter(|&(i, j, _)| in_f[i] != in_f[j]).map(|(i, j, v)| (i, j, -v)));
        trip.extend(ltt.matrix().triplets().filter(|&(i, j, _)| !in_f[i] && !in_f[j]).map(|(i, j, v)| (i, j, two * v)));
        trip.extend(y.triplets().map(|(i, j, v)| (i, j, -v)));
        let assembled = DirectedLaplacian::from_matrix_unchecked(SparseMatrix::from_triplets_unchecked(n, n, trip).compact());
        let assembled_residual = drift_check(&assembled, &cfg.tol, format!("round {k} assembly"))?;

        ltt = se_unchecked(&assembled, eps, part, scfg, stream.derive(0x200 + k as u64, 0))?;
        let residual = drift_check(&ltt, &cfg.tol, format!("round {k} sparsification"))?;
        att = weights_from(ltt.matrix(), &d, &in_f);
        trace.per_round.push(RoundTrace {
            round: k,
            assembled_residual,
            residual,
            att_ff_norm: att_ff_norm(&att, &d, part, &in_f),
            nnz: ltt.nnz(),
            sampled_products: sampled,
        });
        if cfg.keep_iterates {
            iterates.push(ltt.matrix().clone());
        }
    }

    // X̂ = Σ_i SparP(Att_{C,i}, Att_{i,C}ᵀ, ε) / D_ii, all on C.
    let local = part.local_index();
    let nc = c.len();
    let att_t = att.transpose();
    let mut xsum = TripletSum::new(nc);
    for &i in f {
        let xs: Vec<(usize, T)> = positive_entries(att_t.row(i), |j| !in_f[j]).into_iter().map(|(j, v)| (local[j], v)).collect();
        let ys: Vec<(usize, T)> = positive_entries(att.row(i), |j| !in_f[j]).into_iter().map(|(j, v)| (local[j], v)).collect();
        let st = stream.derive(0x300, i as u64);
        product_into(&xs, &ys, T::one() / d[i], eps, scfg, n, st, &mut xsum.buf);
        xsum.maybe_fold();
    }
    let x_hat = xsum.finish();
    let scale = T::one() / T::of(2f64.powi(rounds as i32));
    let ltt_cc = ltt.matrix().restrict(c, c)?;
    let s0 = ltt_cc.add(&x_hat, scale, -scale)?;

    let r = patch_matrix(&s0, &cfg.tol)?;
    trace.patch_frobenius = kahan_sum(r.values().iter().map(|&v| v * v)).sqrt().as_f64();
    let patched = DirectedLaplacian::from_matrix_unchecked(s0.add(&r, T::one(), T::one())?.compact());
    trace.patched_residual = drift_check(&patched, &cfg.tol, "patched S0".into())?;

    let s = spar_e(&patched, delta / 8.0, scfg, stream.derive(0x400, 0))?;
    trace.output_residual = drift_check(&s, &cfg.tol, "final sparsification".into())?;
    trace.output_nnz = s.nnz();
    trace.strongly_connected = s.is_strongly_connected();
    Ok(SchurOutput { s, trace, iterates })
}

/// Patch supported on the first row and column that makes `S0 + R` Eulerian.
///
/// Needs nonnegative row and column sums in `S0`; sums that are negative only
/// by round-off are accepted as is.
pub fn patch_matrix<T: Scalar>(s0: &SparseMatrix<T>, tol: &Tolerances) -> Result<SparseMatrix<T>> {
    if !s0.is_square() || s0.n_rows() == 0 {
        return Err(Error::SizeError("patch_matrix needs a nonempty square matrix".into()));
    }
    let n = s0.n_rows();
    let rows = s0.row_sums();
    let cols = s0.col_sums();
    let scale = s0.diagonal().iter().fold(0.0f64, |m, v| m.max(v.as_f64().abs())).max(f64::MIN_POSITIVE);
    let floor = -tol.structural_tol * scale;
    if let Some(i) = (0..n).find(|&i| rows[i].as_f64() < floor || cols[i].as_f64() < floor) {
        return Err(Error::PreconditionViolated(format!(
            "S0 has a negative sum at {i} (row {:e}, column {:e})",
            rows[i].as_f64(),
            cols[i].as_f64()
        )));
    }
    let total = kahan_sum(rows.iter().copied());
    let mut trip = Vec::with_capacity(2 * n);
    let mut sum_r1 = Vec::with_capacity(n);
    for j in 1..n {
        if rows[j] != T::zero() {
            trip.push((j, 0, -rows[j]));
        }
        if cols[j] != T::zero() {
            trip.push((0, j, -cols[j]));
        }
        sum_r1.push(cols[j] + rows[j]);
    }
    let r11 = kahan_sum(sum_r1.into_iter()) - total;
    if r11 != T::zero() {
        trip.push((0, 0, r11));
    }
    Ok(SparseMatrix::from_triplets_unchecked(n, n, trip))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{exact_pbe, exact_schur, DenseMatrix};
    use crate::generators::{cycle, random_eulerian};
    use crate::rcdd::find_rcdd;

    #[test]
    fn rounds_formula() {
        // n/δ = 6: log₂ 6 ≈ 2.58, log₂ of that ≈ 1.37.
        assert_eq!(default_rounds(3, 0.5), 4);
        assert_eq!(default_rounds(2000, 0.1), 6);
    }

    #[test]
    fn patch_examples() {
        let s0 = SparseMatrix::from_triplets(2, 2, [(0, 0, 1.0)]).unwrap();
        let r = patch_matrix(&s0, &Tolerances::default()).unwrap();
        assert_eq!(r.to_dense(), DenseMatrix::from_rows(&[vec![-1.0, 0.0], vec![0.0, 0.0]]).unwrap());

        let lap = cycle::<f64>(4).unwrap();
        let r = patch_matrix(lap.matrix(), &Tolerances::default()).unwrap();
        assert_eq!(r.nnz(), 0);

        let bad = SparseMatrix::from_triplets(2, 2, [(0, 1, -1.0)]).unwrap();
        assert!(matches!(patch_matrix(&bad, &Tolerances::default()), Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn three_cycle_exact() {
        let l = cycle::<f64>(3).unwrap();
        let part = Partition::from_f(&[0], 3).unwrap();
        let cfg = SchurConfig { rounds: Some(3), ..SchurConfig::exact() };
        let s = sparse_schur(&l, &part, 0.5, &cfg, RngStream::new(0)).unwrap();
        let want = DenseMatrix::from_rows(&[vec![1.0, -1.0], vec![-1.0, 1.0]]).unwrap();
        assert!(s.to_dense().add(&want, 1.0, -1.0).frobenius_norm() <= 1e-3);
    }

    #[test]
    fn exact_mode_matches_pbe() {
        let l = random_eulerian::<f64>(40, 200, 5).unwrap();
        let sel = find_rcdd(&l, 0.25, RngStream::new(5)).unwrap();
        let cfg = SchurConfig { keep_iterates: true, rounds: Some(4), ..SchurConfig::exact() };
        let out = sparse_schur_traced(&l, &sel.part, 0.5, &cfg, RngStream::new(1)).unwrap();
        for (k, it) in out.iterates.iter().enumerate() {
            let (lk, _) = exact_pbe(&l, &sel.part, k).unwrap();
            let err = it.to_dense().add(&lk, 1.0, -1.0).max_abs();
            assert!(err <= 1e-10 * lk.max_abs(), "round {k}: {err:e}");
        }
        let sc = exact_schur(&l.to_dense(), &sel.part).unwrap();
        let err = out.s.to_dense().add(&sc, 1.0, -1.0).frobenius_norm();
        assert!(err <= sc.frobenius_norm() * 1e-2, "{err:e}");
    }

    #[test]
    fn att_decays_quadratically() {
        let l = random_eulerian::<f64>(120, 900, 8).unwrap();
        let sel = find_rcdd(&l, 0.25, RngStream::new(2)).unwrap();
        let out = sparse_schur_traced(&l, &sel.part, 0.5, &SchurConfig::default(), RngStream::new(3)).unwrap();
        let mut prev = out.trace.att_ff_norm0;
        assert!(prev <= 1.0 / 1.25 + 1e-15);
        for r in &out.trace.per_round {
            assert!(r.att_ff_norm <= prev * prev * (1.0 + 1e-12) + 1e-300, "round {}", r.round);
            assert!(r.residual <= 1e-9);
            prev = r.att_ff_norm;
        }
        assert!(out.s.is_eulerian(1e-9));
    }

    #[test]
    fn single_kept_vertex() {
        let l = cycle::<f64>(3).unwrap();
        let part = Partition::from_c(&[2], 3).unwrap();
        let s = sparse_schur(&l, &part, 0.5, &SchurConfig::default(), RngStream::new(0)).unwrap();
        assert_eq!(s.n(), 1);
        assert_eq!(s.nnz(), 0);
    }

    #[test]
    fn rejects_non_rcdd_block() {
        let e = [(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0), (2, 3, 1.0), (3, 2, 1.0)];
        let l = crate::laplacian::build_laplacian(&e, 4).unwrap();
        let part = Partition::from_f(&[0, 1], 4).unwrap();
        let r = sparse_schur(&l, &part, 0.5, &SchurConfig::default(), RngStream::new(0));
        assert!(matches!(r, Err(Error::PreconditionViolated(_))));
    }
}
