//! Preconditioned Richardson iteration, the chain preconditioner and the
//! outer solver.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::chain::SchurChain;
use crate::dense::{exact_schur, DenseMatrix};
use crate::error::{Error, Result};
use crate::laplacian::{DirectedLaplacian, Partition};
use crate::scalar::{kahan_sum, Scalar};
use crate::sparse::SparseMatrix;

/// Window and ratio for stagnation detection.
const STAGNATION_WINDOW: usize = 20;
const STAGNATION_RATIO: f64 = 0.99;

/// `x ← x + η Z(b − A x)` from `x = 0`, `iters` times.
pub fn pri<T: Scalar>(
    a: impl Fn(&[T]) -> Vec<T>,
    b: &[T],
    z: impl Fn(&[T]) -> Vec<T>,
    eta: T,
    iters: usize,
) -> Result<Vec<T>> {
    let mut x = vec![T::zero(); b.len()];
    for k in 0..iters {
        let ax = a(&x);
        let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
        let zr = z(&r);
        for (xi, &d) in x.iter_mut().zip(&zr) {
            *xi += eta * d;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged(k + 1));
        }
    }
    Ok(x)
}

/// Blocks of one non-final level, in `F`/`C`-local coordinates.
#[derive(Debug, Clone)]
struct LevelBlocks<T> {
    f: Vec<usize>,
    c: Vec<usize>,
    s_ff: SparseMatrix<T>,
    s_cf: SparseMatrix<T>,
    s_fc: SparseMatrix<T>,
    inv_diag: Vec<T>,
}

/// The linear operator `Z` built from a chain.
#[derive(Debug, Clone)]
pub struct Preconditioner<T> {
    n: usize,
    levels: Vec<LevelBlocks<T>>,
    last: Vec<usize>,
    final_pinv: DenseMatrix<T>,
    inner_n: Vec<usize>,
}

/// `⌈2 log₂ n⌉`, at least 1.
pub fn default_inner_n(n: usize) -> usize {
    ((2.0 * (n.max(2) as f64).log2()).ceil() as usize).max(1)
}

impl<T: Scalar> Preconditioner<T> {
    /// Uniform inner iteration count.
    pub fn new(chain: &SchurChain<T>, inner_n: usize) -> Result<Self> {
        Self::with_inner(chain, vec![inner_n; chain.depth().saturating_sub(1)])
    }

    /// One inner iteration count per non-final level.
    pub fn with_inner(chain: &SchurChain<T>, inner_n: Vec<usize>) -> Result<Self> {
        let d = chain.depth();
        if d == 0 {
            return Err(Error::ChainError("chain has no levels".into()));
        }
        if inner_n.len() != d - 1 || inner_n.iter().any(|&k| k == 0) {
            return Err(Error::InvalidInput(format!("need {} positive inner counts", d - 1)));
        }
        let mut levels = Vec::with_capacity(d - 1);
        for lvl in &chain.levels[..d - 1] {
            let (fl, cl) = (lvl.part.f(), lvl.part.c());
            let m = lvl.s.matrix();
            let diag = lvl.s.diag();
            let inv_diag = fl
                .iter()
                .map(|&k| {
                    if diag[k] > T::zero() {
                        Ok(T::one() / diag[k])
                    } else {
                        Err(Error::ChainError(format!("level {} has a zero diagonal in F", lvl.index)))
                    }
                })
                .collect::<Result<_>>()?;
            levels.push(LevelBlocks {
                f: fl.iter().map(|&k| lvl.vertices[k]).collect(),
                c: cl.iter().map(|&k| lvl.vertices[k]).collect(),
                s_ff: m.restrict(fl, fl)?,
                s_cf: m.restrict(cl, fl)?,
                s_fc: m.restrict(fl, cl)?,
                inv_diag,
            });
        }
        let last = chain.levels[d - 1].vertices.clone();
        if chain.final_pinv.n_rows() != last.len() {
            return Err(Error::ChainError("missing dense pseudoinverse for the last level".into()));
        }
        Ok(Self {
            n: chain.n,
            levels,
            last,
            final_pinv: chain.final_pinv.clone(),
            inner_n,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn inner_n(&self) -> &[usize] {
        &self.inner_n
    }

    /// `PRI(S_FF, b, D_FF⁻¹, ½, N)`.
    fn inner(&self, lv: &LevelBlocks<T>, b: &[T], iters: usize) -> Vec<T> {
        let half = T::of(0.5);
        let mut x = vec![T::zero(); b.len()];
        let mut ax = vec![T::zero(); b.len()];
        for _ in 0..iters {
            lv.s_ff.spmv_into(&x, &mut ax);
            for k in 0..x.len() {
                x[k] += half * lv.inv_diag[k] * (b[k] - ax[k]);
            }
        }
        x
    }

    pub fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.n {
            return Err(Error::SizeError(format!("vector of {} for a preconditioner on {}", x.len(), self.n)));
        }
        let mut x = x.to_vec();
        let mut xf_store: Vec<Vec<T>> = Vec::with_capacity(self.levels.len());
        for (i, lv) in self.levels.iter().enumerate() {
            let bf: Vec<T> = lv.f.iter().map(|&g| x[g]).collect();
            let xf = self.inner(lv, &bf, self.inner_n[i]);
            let upd = lv.s_cf.spmv(&xf)?;
            for (k, &g) in lv.c.iter().enumerate() {
                x[g] -= upd[k];
            }
            for (k, &g) in lv.f.iter().enumerate() {
                x[g] = xf[k];
            }
            xf_store.push(xf);
        }
        let xd: Vec<T> = self.last.iter().map(|&g| x[g]).collect();
        let yd = self.final_pinv.matvec(&xd);
        for (k, &g) in self.last.iter().enumerate() {
            x[g] = yd[k];
        }
        for (i, lv) in self.levels.iter().enumerate().rev() {
            let xc: Vec<T> = lv.c.iter().map(|&g| x[g]).collect();
            let rhs = lv.s_fc.spmv(&xc)?;
            let corr = self.inner(lv, &rhs, self.inner_n[i]);
            for (k, &g) in lv.f.iter().enumerate() {
                x[g] -= corr[k];
            }
        }
        drop(xf_store);
        project_out_ones(&mut x);
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericError(format!("preconditioner output entry {k} is not finite")));
        }
        Ok(x)
    }

    /// `Z` as a dense matrix, column by column.
    pub fn to_dense(&self) -> Result<DenseMatrix<T>> {
        let mut z = DenseMatrix::zeros(self.n, self.n);
        let mut e = vec![T::zero(); self.n];
        for j in 0..self.n {
            e[j] = T::one();
            let col = self.apply(&e)?;
            for (i, v) in col.into_iter().enumerate() {
                z[(i, j)] = v;
            }
            e[j] = T::zero();
        }
        Ok(z)
    }
}

/// The preconditioner as applied by `PreC`: `Z x` with the forward and
/// backward sweeps and the final mean removal.
pub fn prec_apply<T: Scalar>(chain: &SchurChain<T>, x: &[T], inner_n: usize) -> Result<Vec<T>> {
    Preconditioner::new(chain, inner_n)?.apply(x)
}

pub fn project_out_ones<T: Scalar>(x: &mut [T]) {
    if x.is_empty() {
        return;
    }
    let mean = kahan_sum(x.iter().copied()) / T::of_usize(x.len());
    for v in x.iter_mut() {
        *v -= mean;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    /// Target relative error in the `U(L)` seminorm.
    pub eps: f64,
    /// Inner Richardson steps per level; `None` means `⌈2 log₂ n⌉`.
    pub inner_n: Option<usize>,
    /// Outer iteration cap; `None` means `40⌈log₂(n/ε)⌉`.
    pub max_iters: Option<usize>,
    /// The outer loop stops once the last update is below
    /// `stop_factor · ε · ‖x‖_{U(L)}`.
    pub stop_factor: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            eps: 1e-8,
            inner_n: None,
            max_iters: None,
            stop_factor: 0.1,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidInput(format!("eps must lie in (0,1), got {}", self.eps)));
        }
        if self.inner_n == Some(0) {
            return Err(Error::InvalidInput("inner_n must be at least 1".into()));
        }
        if !(self.stop_factor > 0.0 && self.stop_factor <= 1.0) {
            return Err(Error::InvalidInput("stop_factor must lie in (0,1]".into()));
        }
        Ok(())
    }

    pub fn iteration_cap(&self, n: usize) -> usize {
        self.max_iters
            .unwrap_or_else(|| 40 * ((n.max(2) as f64 / self.eps).log2().ceil() as usize))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// `‖x_{k+1} − x_k‖_{U(L)} / ‖x_{k+1}‖_{U(L)}` per outer step.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// `b` had a component along `1`, which was removed.
    pub projected_b: bool,
    pub inner_n: usize,
    pub wall_ms: f64,
}

/// `√(xᵀ L x)`; equals the `U(L)` seminorm for square `L`.
pub fn l_norm<T: Scalar>(l: &SparseMatrix<T>, x: &[T]) -> Result<f64> {
    let lx = l.spmv(x)?;
    let q = kahan_sum(x.iter().zip(&lx).map(|(&a, &b)| a * b));
    Ok(q.as_f64().max(0.0).sqrt())
}

/// Outer Richardson iteration `x ← x + Z(b − L x)`.
pub fn solve<T: Scalar>(
    l: &DirectedLaplacian<T>,
    b: &[T],
    pre: &Preconditioner<T>,
    cfg: &SolveConfig,
) -> Result<(Vec<T>, SolveReport)> {
    solve_observed(l, b, pre, cfg, |_, _| {})
}

/// [`solve`] with a callback on every iterate, starting with `x_0 = 0`.
pub fn solve_observed<T: Scalar>(
    l: &DirectedLaplacian<T>,
    b: &[T],
    pre: &Preconditioner<T>,
    cfg: &SolveConfig,
    mut observe: impl FnMut(usize, &[T]),
) -> Result<(Vec<T>, SolveReport)> {
    cfg.validate()?;
    let n = l.n();
    if b.len() != n || pre.n() != n {
        return Err(Error::SizeError(format!("b has {} entries, L is {n}x{n}, Z is {}", b.len(), pre.n())));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericError("b has a non-finite entry".into()));
    }
    let t0 = Instant::now();
    let mut b = b.to_vec();
    let bmax = b.iter().fold(0.0f64, |m, v| m.max(v.as_f64().abs()));
    let mean = kahan_sum(b.iter().copied()).as_f64() / n as f64;
    let projected_b = mean.abs() > 1e-12 * bmax.max(f64::MIN_POSITIVE);
    if projected_b {
        project_out_ones(&mut b);
    }
    let inner_n = pre.inner_n().first().copied().unwrap_or(0);
    let mut report = SolveReport {
        iterations: 0,
        residual_history: Vec::new(),
        converged: false,
        projected_b,
        inner_n,
        wall_ms: 0.0,
    };
    let mut x = vec![T::zero(); n];
    observe(0, &x);
    if bmax == 0.0 {
        report.converged = true;
        return Ok((x, report));
    }
    let cap = cfg.iteration_cap(n);
    let a = l.matrix();
    let mut ax = vec![T::zero(); n];
    for k in 1..=cap {
        a.spmv_into(&x, &mut ax);
        let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
        let dx = pre.apply(&r)?;
        for (xi, &d) in x.iter_mut().zip(&dx) {
            *xi += d;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged(k));
        }
        observe(k, &x);
        let rel = l_norm(a, &dx)? / l_norm(a, &x)?.max(f64::MIN_POSITIVE);
        report.residual_history.push(rel);
        report.iterations = k;
        if rel <= cfg.stop_factor * cfg.eps {
            report.converged = true;
            break;
        }
        let h = &report.residual_history;
        if h.len() > STAGNATION_WINDOW && h[h.len() - 1] > STAGNATION_RATIO * h[h.len() - 1 - STAGNATION_WINDOW] {
            return Err(Error::Stagnated { iterations: k, residual: rel });
        }
    }
    report.wall_ms = t0.elapsed().as_secs_f64() * 1e3;
    if !report.converged {
        let last = report.residual_history.last().copied().unwrap_or(f64::NAN);
        return Err(Error::Stagnated { iterations: report.iterations, residual: last });
    }
    Ok((x, report))
}

/// Places an `m × m` block at `idx × idx` in an `n × n` zero matrix.
fn put<T: Scalar>(block: &DenseMatrix<T>, idx: &[usize], n: usize) -> DenseMatrix<T> {
    let mut out = DenseMatrix::zeros(n, n);
    out.set_block(idx, idx, block);
    out
}

/// `L̂ = Stt^(1) + Σ_i put(Stt^(i+1) − sc(Stt^(i), F_i), C_i)`, dense.
pub fn assemble_lhat<T: Scalar>(chain: &SchurChain<T>) -> Result<DenseMatrix<T>> {
    let n = chain.n;
    let mut lhat = chain.levels[0].s.to_dense();
    for w in chain.levels.windows(2) {
        let (cur, next) = (&w[0], &w[1]);
        let sc = exact_schur(&cur.s.to_dense(), &cur.part)?;
        let diff = next.s.to_dense().add(&sc, T::one(), -T::one());
        lhat = lhat.add(&put(&diff, &next.vertices, n), T::one(), T::one());
    }
    Ok(lhat)
}

/// `B̂ = δ₁U(L̂) + Σ_i δ_{i+1} put(U(sc(L̂, F_1 ∪ … ∪ F_i)), C_i)`, dense.
pub fn assemble_bhat<T: Scalar>(chain: &SchurChain<T>, lhat: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    let n = chain.n;
    let cfg = &chain.config;
    let mut b = lhat.symmetric_part().scale(T::of(cfg.declared_delta(1)));
    for next in &chain.levels[1..] {
        let part = Partition::from_c(&next.vertices, n)?;
        let sc = exact_schur(lhat, &part)?;
        let term = put(&sc.symmetric_part(), &next.vertices, n);
        b = b.add(&term, T::one(), T::of(cfg.declared_delta(next.index)));
    }
    Ok(b)
}

/// `‖M‖_B = ‖B^{1/2} M B^{†/2}‖₂` for symmetric PSD `B`.
pub fn b_norm<T: Scalar>(m: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<f64> {
    let eig = crate::dense::sym_eigen(b)?;
    let n = b.n_rows();
    let lmax = eig.values.last().copied().unwrap_or(T::zero()).max(T::zero());
    let cut = T::of(1e-12f64.max(10.0 * n as f64 * T::epsilon().as_f64())) * lmax;
    let pos: Vec<usize> = (0..n).filter(|&k| eig.values[k] > cut).collect();
    let half = DenseMatrix::from_fn(n, pos.len(), |i, j| eig.vectors[(i, pos[j])] * eig.values[pos[j]].sqrt());
    let half_inv = DenseMatrix::from_fn(n, pos.len(), |i, j| eig.vectors[(i, pos[j])] / eig.values[pos[j]].sqrt());
    let inner = half.transpose().matmul(&m.matmul(&half_inv));
    Ok(crate::dense::spectral_norm(&inner)?.as_f64())
}
