//! Randomized sparsification: biclique products (`spar_p`, `sp`) and
//! degree-preserving Laplacian sparsifiers (`spar_e`, `se`).

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplacian::{DirectedLaplacian, Partition, Tolerances};
use crate::rng::RngStream;
use crate::scalar::{kahan_sum, Scalar};
use crate::sparse::SparseMatrix;

const BALANCE_ITERS: usize = 50;
const BALANCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Returns the input unchanged.
    Passthrough,
    /// Importance sampling followed by a star-shaped degree patch.
    SamplePatch,
}

impl std::str::FromStr for Backend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "passthrough" => Ok(Backend::Passthrough),
            "sample_patch" | "sample-patch" => Ok(Backend::SamplePatch),
            other => Err(Error::InvalidInput(format!("unknown backend {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsifierConfig {
    pub backend: Backend,
    /// `c_s` in the edge keep probability
    /// `min(1, c_s·w·(1/d_out(u) + 1/d_in(v))·ln n / δ²)`.
    pub oversample: f64,
    /// Constant in the number of couplings `⌈c·ε⁻²·ln(m/p)⌉` drawn by `spar_p`.
    pub product_oversample: f64,
    /// Nominal failure probability; `None` means `n⁻³`.
    pub failure_prob: Option<f64>,
    /// Forces `spar_p` to return the exact outer product.
    pub exact_products: bool,
    /// Lower bound on the accuracy used in sampling probabilities and
    /// coupling counts. `None` samples at the requested accuracy. Read from
    /// `delta` in JSON configs as well.
    #[serde(default, alias = "delta")]
    pub delta_floor: Option<f64>,
}

impl Default for SparsifierConfig {
    fn default() -> Self {
        Self {
            backend: Backend::SamplePatch,
            oversample: 16.0,
            product_oversample: 1.0,
            failure_prob: None,
            exact_products: false,
            delta_floor: None,
        }
    }
}

impl SparsifierConfig {
    pub fn passthrough_exact() -> Self {
        Self {
            backend: Backend::Passthrough,
            exact_products: true,
            ..Self::default()
        }
    }

    /// Settings for desk-scale chains. Sampling runs at accuracy at least 0.5,
    /// so light fill edges are dropped instead of accumulating over the
    /// squaring rounds.
    pub fn practical() -> Self {
        Self {
            oversample: 1.0,
            product_oversample: 0.05,
            delta_floor: Some(0.5),
            ..Self::default()
        }
    }

    /// Accuracy actually used for sampling at requested accuracy `delta`.
    pub fn sampling_delta(&self, delta: f64) -> f64 {
        self.delta_floor.map_or(delta, |f| delta.max(f))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.oversample > 0.0 && self.oversample.is_finite()) {
            return Err(Error::InvalidInput("oversample must be positive".into()));
        }
        if !(self.product_oversample > 0.0 && self.product_oversample.is_finite()) {
            return Err(Error::InvalidInput("product_oversample must be positive".into()));
        }
        if let Some(f) = self.delta_floor {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidInput("delta_floor must lie in (0,1)".into()));
            }
        }
        if let Some(p) = self.failure_prob {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidInput("failure_prob must lie in (0,1)".into()));
            }
        }
        Ok(())
    }

    /// Upper bound on the expected number of edges `spar_e` keeps on an
    /// `n`-vertex graph.
    pub fn edge_budget(&self, n: usize, delta: f64) -> f64 {
        let n = n.max(2) as f64;
        let delta = self.sampling_delta(delta);
        2.0 * self.oversample * n * n.ln() / (delta * delta)
    }

    fn coupling_count(&self, n: usize, m: usize, eps: f64) -> usize {
        let p = self.failure_prob.unwrap_or_else(|| (n.max(2) as f64).powi(-3));
        let l = (m.max(2) as f64 / p).ln();
        let eps = self.sampling_delta(eps);
        (self.product_oversample * l / (eps * eps)).ceil().max(1.0) as usize
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must lie in (0,1), got {v}")))
    }
}

fn positive_support<T: Scalar>(v: &[T], what: &str) -> Result<Vec<(usize, T)>> {
    let mut out = Vec::new();
    for (i, &x) in v.iter().enumerate() {
        if x < T::zero() || !x.is_finite() {
            return Err(Error::InvalidInput(format!("{what}[{i}] = {x} is not a finite nonnegative value")));
        }
        if x > T::zero() {
            out.push((i, x));
        }
    }
    Ok(out)
}

/// Sparse nonnegative `A` with `A 1 = x (1ᵀy)` and `1ᵀA = (1ᵀx) yᵀ`,
/// approximating `x yᵀ`.
///
/// `A` averages `s` random couplings of `x/1ᵀx` and `y/1ᵀy`. Each coupling is
/// the interval overlap of the two distributions laid on a circle after a
/// random relabelling and a uniform rotation, so it has exact margins and
/// expectation `x yᵀ`. When the exact product is no larger than the sampled
/// one, it is returned instead.
pub fn spar_p<T: Scalar>(
    x: &[T],
    y: &[T],
    eps: f64,
    cfg: &SparsifierConfig,
    stream: RngStream,
) -> Result<SparseMatrix<T>> {
    check_unit("eps", eps)?;
    let xs = positive_support(x, "x")?;
    let ys = positive_support(y, "y")?;
    let mut trip = Vec::new();
    product_into(&xs, &ys, T::one(), eps, cfg, x.len().max(y.len()), stream, &mut trip);
    Ok(SparseMatrix::from_triplets_unchecked(x.len(), y.len(), trip))
}

/// Returns `true` if the product was sampled rather than formed exactly.
#[allow(clippy::too_many_arguments)]
pub(crate) fn product_into<T: Scalar>(
    xs: &[(usize, T)],
    ys: &[(usize, T)],
    scale: T,
    eps: f64,
    cfg: &SparsifierConfig,
    n: usize,
    stream: RngStream,
    out: &mut Vec<(usize, usize, T)>,
) -> bool {
    if xs.is_empty() || ys.is_empty() {
        return false;
    }
    let m = xs.len() + ys.len();
    let s = cfg.coupling_count(n, m, eps);
    if cfg.exact_products || xs.len() * ys.len() <= s.saturating_mul(m) {
        for &(i, a) in xs {
            let a = a * scale;
            for &(j, b) in ys {
                out.push((i, j, a * b));
            }
        }
        return false;
    }
    let mut rng = stream.rng();
    let weight = scale / T::of_usize(s);
    let mut xp = xs.to_vec();
    let mut yp = ys.to_vec();
    let total_x = kahan_sum(xs.iter().map(|e| e.1));
    let total_y = kahan_sum(ys.iter().map(|e| e.1));
    for _ in 0..s {
        xp.shuffle(&mut rng);
        yp.shuffle(&mut rng);
        let u: f64 = rng.gen();
        rotated_coupling(&xp, &yp, total_x, total_y, T::of(u), weight, out);
    }
    true
}

/// Northwest-corner coupling of row masses `x_i·Y` against column masses
/// `X·y_j` after rotating the columns by `u·XY`.
fn rotated_coupling<T: Scalar>(
    xs: &[(usize, T)],
    ys: &[(usize, T)],
    total_x: T,
    total_y: T,
    u: T,
    weight: T,
    out: &mut Vec<(usize, usize, T)>,
) {
    let shift = u * total_x * total_y;
    let mut cols: Vec<(usize, T)> = Vec::with_capacity(ys.len() + 1);
    let mut cum = T::zero();
    let mut split = ys.len() - 1;
    let mut before = T::zero();
    for (k, &(_, y)) in ys.iter().enumerate() {
        let c = total_x * y;
        if cum + c > shift {
            split = k;
            before = shift - cum;
            break;
        }
        cum += c;
    }
    let (js, yv) = ys[split];
    let cs = total_x * yv;
    cols.push((js, (cs - before).max(T::zero())));
    cols.extend(ys[split + 1..].iter().map(|&(j, y)| (j, total_x * y)));
    cols.extend(ys[..split].iter().map(|&(j, y)| (j, total_x * y)));
    if before > T::zero() {
        cols.push((js, before));
    }

    let mut ci = 0;
    let mut rem_c = cols[0].1;
    for &(i, x) in xs {
        let mut rem_r = x * total_y;
        while rem_r > T::zero() {
            if ci >= cols.len() {
                // Round-off leftover: attach to the last column.
                let j = cols[cols.len() - 1].0;
                out.push((i, j, rem_r * weight));
                break;
            }
            if rem_r <= rem_c {
                out.push((i, cols[ci].0, rem_r * weight));
                rem_c -= rem_r;
                rem_r = T::zero();
            } else {
                if rem_c > T::zero() {
                    out.push((i, cols[ci].0, rem_c * weight));
                }
                rem_r -= rem_c;
                ci += 1;
                rem_c = if ci < cols.len() { cols[ci].1 } else { T::zero() };
            }
        }
    }
}

/// `spar_p` applied separately to the `(C,F)`, `(F,F)`, `(F,C)` and `(C,C)`
/// splits of `x yᵀ`, so every block keeps its row and column sums.
pub fn sp<T: Scalar>(
    x: &[T],
    y: &[T],
    eps: f64,
    part: &Partition,
    cfg: &SparsifierConfig,
    stream: RngStream,
) -> Result<SparseMatrix<T>> {
    check_unit("eps", eps)?;
    if x.len() != part.n() || y.len() != part.n() {
        return Err(Error::SizeError("sp: vector length differs from partition".into()));
    }
    let xs = positive_support(x, "x")?;
    let ys = positive_support(y, "y")?;
    let mut trip = Vec::new();
    sp_into(&xs, &ys, T::one(), eps, &part.f_mask(), cfg, part.n(), stream, &mut trip);
    Ok(SparseMatrix::from_triplets_unchecked(part.n(), part.n(), trip))
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn sp_into<T: Scalar>(
    xs: &[(usize, T)],
    ys: &[(usize, T)],
    scale: T,
    eps: f64,
    in_f: &[bool],
    cfg: &SparsifierConfig,
    n: usize,
    stream: RngStream,
    out: &mut Vec<(usize, usize, T)>,
) -> bool {
    let (xf, xc): (Vec<_>, Vec<_>) = xs.iter().partition(|e| in_f[e.0]);
    let (yf, yc): (Vec<_>, Vec<_>) = ys.iter().partition(|e| in_f[e.0]);
    let mut sampled = false;
    for (tag, a, b) in [(0u64, &xc, &yf), (1, &xf, &yf), (2, &xf, &yc), (3, &xc, &yc)] {
        sampled |= product_into(a, b, scale, eps, cfg, n, stream.derive(tag, 0), out);
    }
    sampled
}

/// Degree-preserving sparsification of a directed edge set.
///
/// Kept edges are reweighted by `1/p`, rescaled towards the original degrees
/// by alternating row and column scaling, and whatever is still missing goes
/// through the patch. `bipartite` pieces have disjoint source and target sets and get a
/// two-hub patch; general pieces get a single hub. Returns `None` when every
/// edge would be kept with probability one, or when the patch cannot be
/// completed (the caller then keeps the input).
pub(crate) fn sparsify_edges<T: Scalar>(
    edges: &[(usize, usize, T)],
    n: usize,
    delta: f64,
    cfg: &SparsifierConfig,
    bipartite: bool,
    stream: RngStream,
) -> Option<Vec<(usize, usize, T)>> {
    if edges.len() < 4 {
        return None;
    }
    let zero = T::zero();
    let mut out_deg = vec![zero; n];
    let mut in_deg = vec![zero; n];
    for &(u, v, w) in edges {
        out_deg[u] += w;
        in_deg[v] += w;
    }
    let (hs, ht) = if bipartite {
        let hs = argmax(&out_deg);
        let ht = argmax(&in_deg);
        (hs, ht)
    } else {
        let tot: Vec<T> = out_deg.iter().zip(&in_deg).map(|(&a, &b)| a + b).collect();
        let h = argmax(&tot);
        (h, h)
    };
    let is_nonhub = |u: usize, v: usize| {
        if bipartite {
            u != hs && v != ht
        } else {
            u != hs && v != hs
        }
    };

    let logn = (n.max(2) as f64).ln();
    let delta = cfg.sampling_delta(delta);
    let c = cfg.oversample * logn / (delta * delta);
    let probs: Vec<f64> = edges
        .iter()
        .map(|&(u, v, w)| {
            if !is_nonhub(u, v) {
                return 1.0;
            }
            let w = w.as_f64();
            (c * w * (1.0 / out_deg[u].as_f64() + 1.0 / in_deg[v].as_f64())).min(1.0)
        })
        .collect();
    if probs.iter().all(|&p| p >= 1.0) {
        return None;
    }

    let mut rng = stream.rng();
    let mut kept: Vec<(usize, usize, T)> = Vec::new();
    let mut w_target = zero;
    let mut hub_w = zero;
    for (k, &(u, v, w)) in edges.iter().enumerate() {
        if !is_nonhub(u, v) {
            if bipartite && u == hs && v == ht {
                hub_w += w;
            }
            continue;
        }
        w_target += w;
        let p = probs[k];
        if p >= 1.0 || rng.gen::<f64>() < p {
            kept.push((u, v, w / T::of(p)));
        }
    }

    // Non-hub degrees the kept edges should reproduce.
    let mut t_out = vec![zero; n];
    let mut t_in = vec![zero; n];
    for &(u, v, w) in edges {
        if is_nonhub(u, v) {
            t_out[u] += w;
            t_in[v] += w;
        }
    }
    let sums = |kept: &[(usize, usize, T)]| {
        let mut so = vec![zero; n];
        let mut si = vec![zero; n];
        for &(u, v, w) in kept {
            so[u] += w;
            si[v] += w;
        }
        (so, si)
    };

    // Alternate row and column scaling towards those degrees, so that only a
    // small residual is left for the patch.
    for _ in 0..BALANCE_ITERS {
        let (so, _) = sums(&kept);
        for e in kept.iter_mut() {
            e.2 = e.2 * (t_out[e.0] / so[e.0]);
        }
        let (so, si) = sums(&kept);
        for e in kept.iter_mut() {
            e.2 = e.2 * (t_in[e.1] / si[e.1]);
        }
        let off = (0..n)
            .filter(|&x| so[x] > zero)
            .map(|x| ((so[x] - t_out[x]) / t_out[x]).abs().as_f64())
            .fold(0.0, f64::max);
        if off < BALANCE_TOL {
            break;
        }
    }

    // Cap at the targets, rows first, then columns.
    let (s_out, _) = sums(&kept);
    for e in kept.iter_mut() {
        if s_out[e.0] > t_out[e.0] {
            e.2 = e.2 * (t_out[e.0] / s_out[e.0]);
        }
    }
    let (_, s_in) = sums(&kept);
    for e in kept.iter_mut() {
        if s_in[e.1] > t_in[e.1] {
            e.2 = e.2 * (t_in[e.1] / s_in[e.1]);
        }
    }
    let (mut s_out, mut s_in) = sums(&kept);
    let w_kept = kahan_sum(kept.iter().map(|e| e.2));
    let mut deficit = w_target - w_kept;
    let tiny = w_target * T::of(1e-14);
    if deficit > tiny {
        let srcs: Vec<usize> = (0..n)
            .filter(|&x| x != hs && t_out[x] - s_out[x] > zero && (!bipartite || in_deg[x] == zero))
            .collect();
        let dsts: Vec<usize> = (0..n)
            .filter(|&y| y != ht && t_in[y] - s_in[y] > zero && (!bipartite || out_deg[y] == zero))
            .collect();
        let mut b = 0usize;
        for &x in &srcs {
            while deficit > tiny {
                let slack_x = t_out[x] - s_out[x];
                if slack_x <= zero {
                    break;
                }
                while b < dsts.len() && t_in[dsts[b]] - s_in[dsts[b]] <= zero {
                    b += 1;
                }
                let mut k = b;
                if k < dsts.len() && dsts[k] == x {
                    k += 1;
                    while k < dsts.len() && t_in[dsts[k]] - s_in[dsts[k]] <= zero {
                        k += 1;
                    }
                }
                if k >= dsts.len() {
                    break;
                }
                let y = dsts[k];
                let amt = deficit.min(slack_x).min(t_in[y] - s_in[y]);
                kept.push((x, y, amt));
                s_out[x] += amt;
                s_in[y] += amt;
                deficit -= amt;
            }
            if deficit <= tiny {
                break;
            }
        }
        // What is left sits on vertices whose only partner is themselves:
        // reroute part of a kept edge `u → v` as `u → x → v`.
        while deficit > tiny && !bipartite {
            let Some(x) = srcs.iter().copied().find(|&x| t_out[x] - s_out[x] > zero && t_in[x] - s_in[x] > zero) else {
                break;
            };
            let Some(k) = (0..kept.len())
                .filter(|&k| kept[k].0 != x && kept[k].1 != x)
                .max_by(|&a, &b| kept[a].2.partial_cmp(&kept[b].2).unwrap_or(std::cmp::Ordering::Equal))
            else {
                break;
            };
            let (u, v, w) = kept[k];
            let amt = deficit.min(t_out[x] - s_out[x]).min(t_in[x] - s_in[x]).min(w);
            if amt <= zero {
                break;
            }
            kept[k].2 = w - amt;
            kept.push((u, x, amt));
            kept.push((x, v, amt));
            s_out[x] += amt;
            s_in[x] += amt;
            deficit -= amt;
        }
        if deficit > tiny * T::of(1e3) {
            return None;
        }
    }

    // Patch through the hubs.
    let mut result = kept;
    for x in 0..n {
        if x == hs {
            continue;
        }
        if bipartite && out_deg[x] == zero {
            continue;
        }
        let r = out_deg[x] - s_out[x];
        if r > zero {
            result.push((x, ht, r));
        }
    }
    for y in 0..n {
        if y == ht {
            continue;
        }
        if bipartite && in_deg[y] == zero {
            continue;
        }
        let r = in_deg[y] - s_in[y];
        if r > zero {
            result.push((hs, y, r));
        }
    }
    if bipartite && hub_w > zero {
        result.push((hs, ht, hub_w));
    }
    Some(result)
}

fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Pre-patch importance sample of an edge set: each edge kept with its
/// probability and reweighted by `1/p`. Exposed for unbiasedness checks.
pub fn sample_edges<T: Scalar>(
    edges: &[(usize, usize, T)],
    n: usize,
    delta: f64,
    cfg: &SparsifierConfig,
    stream: RngStream,
) -> Vec<(usize, usize, T)> {
    let mut out_deg = vec![T::zero(); n];
    let mut in_deg = vec![T::zero(); n];
    for &(u, v, w) in edges {
        out_deg[u] += w;
        in_deg[v] += w;
    }
    let delta = cfg.sampling_delta(delta);
    let c = cfg.oversample * (n.max(2) as f64).ln() / (delta * delta);
    let mut rng = stream.rng();
    let mut kept = Vec::new();
    for &(u, v, w) in edges {
        let p = (c * w.as_f64() * (1.0 / out_deg[u].as_f64() + 1.0 / in_deg[v].as_f64())).min(1.0);
        if p >= 1.0 || rng.gen::<f64>() < p {
            kept.push((u, v, w / T::of(p)));
        }
    }
    kept
}

fn laplacian_from_edges<T: Scalar>(
    n: usize,
    edges: impl IntoIterator<Item = (usize, usize, T)>,
    diag: &[T],
) -> DirectedLaplacian<T> {
    let mut trip: Vec<(usize, usize, T)> = edges.into_iter().map(|(u, v, w)| (v, u, -w)).collect();
    trip.extend(diag.iter().enumerate().filter(|(_, &d)| d != T::zero()).map(|(i, &d)| (i, i, d)));
    DirectedLaplacian::from_matrix_unchecked(SparseMatrix::from_triplets_unchecked(n, n, trip).compact())
}

/// Eulerian sparsifier: same diagonal, same row and column sums.
pub fn spar_e<T: Scalar>(
    l: &DirectedLaplacian<T>,
    delta: f64,
    cfg: &SparsifierConfig,
    stream: RngStream,
) -> Result<DirectedLaplacian<T>> {
    check_unit("delta", delta)?;
    l.require_eulerian(Tolerances::default().structural_tol)?;
    if cfg.backend == Backend::Passthrough {
        return Ok(l.clone());
    }
    let edges = l.edges();
    match sparsify_edges(&edges, l.n(), delta, cfg, false, stream) {
        Some(e) => Ok(laplacian_from_edges(l.n(), e, l.diag())),
        None => Ok(l.clone()),
    }
}

/// Sparsifies the `(F,F)`, `(F,C)`, `(C,F)` and `(C,C)` edge sets separately,
/// so in addition to the `spar_e` guarantees the `F`-block keeps its in- and
/// out-degrees.
pub fn se<T: Scalar>(
    l: &DirectedLaplacian<T>,
    eps: f64,
    part: &Partition,
    cfg: &SparsifierConfig,
    stream: RngStream,
) -> Result<DirectedLaplacian<T>> {
    check_unit("eps", eps)?;
    if l.n() != part.n() {
        return Err(Error::SizeError("se: partition size".into()));
    }
    l.require_eulerian(Tolerances::default().structural_tol)?;
    if cfg.backend == Backend::Passthrough {
        return Ok(l.clone());
    }
    se_unchecked(l, eps, part, cfg, stream)
}

pub(crate) fn se_unchecked<T: Scalar>(
    l: &DirectedLaplacian<T>,
    eps: f64,
    part: &Partition,
    cfg: &SparsifierConfig,
    stream: RngStream,
) -> Result<DirectedLaplacian<T>> {
    if cfg.backend == Backend::Passthrough {
        return Ok(l.clone());
    }
    let in_f = part.f_mask();
    let mut pieces: [Vec<(usize, usize, T)>; 4] = Default::default();
    for e in l.edges() {
        let k = (in_f[e.0] as usize) * 2 + in_f[e.1] as usize;
        pieces[k].push(e);
    }
    // Index 3: F→F, 0: C→C, 2: F→C, 1: C→F.
    let mut changed = false;
    let mut all = Vec::with_capacity(l.nnz());
    for (k, piece) in pieces.iter().enumerate() {
        let bipartite = k == 1 || k == 2;
        match sparsify_edges(piece, l.n(), eps, cfg, bipartite, stream.derive(0x5E, k as u64)) {
            Some(e) => {
                changed = true;
                all.extend(e);
            }
            None => all.extend_from_slice(piece),
        }
    }
    if !changed {
        return Ok(l.clone());
    }
    Ok(laplacian_from_edges(l.n(), all, l.diag()))
}
