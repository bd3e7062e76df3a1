//! Schur complement chains: build, validate, save and load.

use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dense::{asym_measure, exact_schur, loewner_margin, pinv, DenseMatrix, ORACLE_CAP};
use crate::error::{Error, Result};
use crate::laplacian::{rcdd_margin, DirectedLaplacian, Partition, RcddMargin, Tolerances};
use crate::mtx;
use crate::rcdd::find_rcdd;
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::schur::{sparse_schur_traced, SchurConfig, SchurTrace};
use crate::sparsify::{spar_e, SparsifierConfig};

pub const CHAIN_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub alpha: f64,
    pub delta: f64,
    /// Stop eliminating once at most this many vertices remain.
    pub threshold: usize,
    pub schur: SchurConfig,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            delta: 0.1,
            threshold: 100,
            schur: SchurConfig::default(),
            seed: 0,
        }
    }
}

impl ChainConfig {
    /// Defaults with [`SparsifierConfig::practical`] sampling.
    pub fn practical() -> Self {
        let mut cfg = Self::default();
        cfg.schur.sparsifier = SparsifierConfig::practical();
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidInput(format!("alpha must lie in (0,1], got {}", self.alpha)));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::InvalidInput(format!("delta must lie in (0,1], got {}", self.delta)));
        }
        if self.threshold == 0 {
            return Err(Error::InvalidInput("threshold must be positive".into()));
        }
        self.schur.sparsifier.validate()?;
        self.schur.tol.validate()
    }

    /// Per-level sparsification accuracy `δ'_i = δ/(3i²)`.
    pub fn level_delta(&self, i: usize) -> f64 {
        self.delta / (3.0 * (i * i) as f64)
    }

    /// Declared chain accuracy `δ_i = δ/i²`.
    pub fn declared_delta(&self, i: usize) -> f64 {
        self.delta / (i * i) as f64
    }

    /// `β = 1/(16(1+α))`.
    pub fn beta(&self) -> f64 {
        1.0 / (16.0 * (1.0 + self.alpha))
    }
}

/// One level: the boosted Laplacian `Stt^(i)` on `C_{i−1}` and the block
/// `F_i` it eliminates.
#[derive(Debug, Clone)]
pub struct ChainLevel<T> {
    /// 1-based level number.
    pub index: usize,
    /// Global ids of `C_{i−1}`, ascending; local index `k` is `vertices[k]`.
    pub vertices: Vec<usize>,
    pub s: DirectedLaplacian<T>,
    /// `F_i` as local indices.
    pub part: Partition,
}

impl<T: Scalar> ChainLevel<T> {
    pub fn f_global(&self) -> Vec<usize> {
        self.part.f().iter().map(|&k| self.vertices[k]).collect()
    }

    pub fn c_global(&self) -> Vec<usize> {
        self.part.c().iter().map(|&k| self.vertices[k]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub index: usize,
    pub size: usize,
    pub nnz: usize,
    pub f_size: usize,
    pub rcdd_rounds: usize,
    pub build_ms: f64,
    pub schur: Option<SchurTrace>,
}

#[derive(Debug, Clone)]
pub struct SchurChain<T> {
    pub n: usize,
    pub config: ChainConfig,
    pub levels: Vec<ChainLevel<T>>,
    /// Pseudoinverse of the last level's Laplacian.
    pub final_pinv: DenseMatrix<T>,
    pub stats: Vec<LevelStats>,
}

impl<T: Scalar> SchurChain<T> {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    pub fn total_nnz(&self) -> usize {
        self.levels.iter().map(|l| l.s.nnz()).sum()
    }

    /// `|C_i|` for `i = 0..d`.
    pub fn c_sizes(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.levels.iter().map(|l| l.vertices.len()).collect();
        v.push(0);
        v
    }
}

/// `S + (δ'/(1−δ')) U(S)`.
fn boost<T: Scalar>(s: &DirectedLaplacian<T>, dp: f64) -> Result<DirectedLaplacian<T>> {
    let c = T::of(dp / (1.0 - dp));
    let m = s.matrix().add(&s.undirectify(), T::one(), c)?.compact();
    Ok(DirectedLaplacian::from_matrix_unchecked(m))
}

fn level_error(level: usize, e: Error) -> Error {
    match e {
        Error::ChainBuildError { .. } => e,
        other => Error::ChainBuildError { level, reason: other.to_string() },
    }
}

pub fn build_chain<T: Scalar>(l: &DirectedLaplacian<T>, cfg: &ChainConfig) -> Result<SchurChain<T>> {
    cfg.validate()?;
    let n = l.n();
    if n < 2 {
        return Err(Error::InvalidInput(format!("chain needs n >= 2, got {n}")));
    }
    l.require_eulerian(cfg.schur.tol.structural_tol)?;
    if !l.is_strongly_connected() {
        return Err(Error::PreconditionViolated("input graph is not strongly connected".into()));
    }
    let root = RngStream::new(cfg.seed);
    let t0 = Instant::now();
    let s1 = spar_e(l, cfg.level_delta(1), &cfg.schur.sparsifier, root.derive(0xC1, 0)).map_err(|e| level_error(1, e))?;
    let mut stt = boost(&s1, cfg.level_delta(1)).map_err(|e| level_error(1, e))?;
    let mut vertices: Vec<usize> = (0..n).collect();
    let mut levels = Vec::new();
    let mut stats = Vec::new();
    let mut t_level = t0.elapsed().as_secs_f64() * 1e3;
    let mut schur_trace = None;

    let mut i = 1;
    loop {
        if !stt.is_strongly_connected() {
            return Err(Error::ChainBuildError { level: i, reason: "level lost strong connectivity".into() });
        }
        if vertices.len() <= cfg.threshold {
            break;
        }
        let sel = find_rcdd(&stt, cfg.alpha, root.derive(0xC2, i as u64)).map_err(|e| level_error(i, e))?;
        let t = Instant::now();
        let out = sparse_schur_traced(&stt, &sel.part, cfg.level_delta(i + 1), &cfg.schur, root.derive(0xC3, i as u64))
            .map_err(|e| level_error(i + 1, e))?;
        let next = boost(&out.s, cfg.level_delta(i + 1)).map_err(|e| level_error(i + 1, e))?;
        let next_vertices: Vec<usize> = sel.part.c().iter().map(|&k| vertices[k]).collect();
        stats.push(LevelStats {
            index: i,
            size: vertices.len(),
            nnz: stt.nnz(),
            f_size: sel.part.f().len(),
            rcdd_rounds: sel.rounds,
            build_ms: t_level,
            schur: schur_trace.take(),
        });
        levels.push(ChainLevel { index: i, vertices, s: stt, part: sel.part });
        schur_trace = Some(out.trace);
        t_level = t.elapsed().as_secs_f64() * 1e3;
        vertices = next_vertices;
        stt = next;
        i += 1;
    }
    let nd = vertices.len();
    let final_pinv = pinv(&stt.to_dense()).map_err(|e| level_error(i, e))?;
    stats.push(LevelStats {
        index: i,
        size: nd,
        nnz: stt.nnz(),
        f_size: nd,
        rcdd_rounds: 0,
        build_ms: t_level,
        schur: schur_trace,
    });
    levels.push(ChainLevel {
        index: i,
        vertices,
        s: stt,
        part: Partition::from_c(&[], nd)?,
    });
    Ok(SchurChain { n, config: *cfg, levels, final_pinv, stats })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub index: usize,
    pub size: usize,
    pub nnz: usize,
    pub f_size: usize,
    pub eulerian_residual: f64,
    pub strongly_connected: bool,
    pub rcdd_margin: Option<RcddMargin>,
    pub declared_delta: f64,
    /// Measured asymmetric-approximation error against the previous level
    /// (against the input for level 1).
    pub measured_delta: Option<f64>,
    pub kernel_ok: Option<bool>,
    /// Smallest eigenvalue of `U(Stt^(i)) − U(previous)` over its norm.
    pub psd_margin: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub n: usize,
    pub depth: usize,
    pub total_nnz: usize,
    pub levels: Vec<LevelReport>,
    /// `{F_i}` partitions `[n]`, supports and sizes agree.
    pub partition_ok: bool,
    pub shrinkage_ok: bool,
    pub final_size_ok: bool,
    /// Every `F_i` block is α-RCDD.
    pub rcdd_ok: bool,
    /// Each level is within its declared δ of the exact Schur complement of
    /// the previous one; `None` when the spectral checks were skipped.
    pub approximation_ok: Option<bool>,
    /// `U(Stt^(i))` dominates the undirectification of that Schur complement;
    /// `None` when skipped.
    pub domination_ok: Option<bool>,
    pub eulerian_ok: bool,
    pub connected_ok: bool,
}

impl ChainReport {
    pub fn all_ok(&self) -> bool {
        self.partition_ok
            && self.shrinkage_ok
            && self.final_size_ok
            && self.rcdd_ok
            && self.eulerian_ok
            && self.connected_ok
            && self.approximation_ok.unwrap_or(true)
            && self.domination_ok.unwrap_or(true)
    }
}

/// Checks the chain conditions. Spectral checks run when `n ≤ oracle_cap`.
pub fn validate_chain<T: Scalar>(chain: &SchurChain<T>, l: &DirectedLaplacian<T>, oracle_cap: usize) -> ChainReport {
    let cfg = &chain.config;
    let tol = cfg.schur.tol;
    let n = chain.n;
    let d = chain.depth();
    let mut seen = vec![0usize; n];
    let mut partition_ok = l.n() == n && d >= 1 && chain.levels[0].vertices == (0..n).collect::<Vec<_>>();
    let mut shrinkage_ok = true;
    for (k, lvl) in chain.levels.iter().enumerate() {
        partition_ok &= lvl.s.n() == lvl.vertices.len() && lvl.part.n() == lvl.vertices.len();
        if k + 1 < d {
            partition_ok &= chain.levels[k + 1].vertices == lvl.c_global();
        }
        for v in lvl.f_global() {
            if v < n {
                seen[v] += 1;
            }
        }
        let bound = (1.0 - cfg.beta()).powi(k as i32) * n as f64;
        shrinkage_ok &= lvl.vertices.len() as f64 <= bound + 1e-9;
    }
    if d > 0 {
        let last = &chain.levels[d - 1];
        partition_ok &= last.part.c().is_empty();
    }
    partition_ok &= seen.iter().all(|&c| c == 1);
    let final_size_ok = d == 0 || chain.levels[d - 1].vertices.len() <= cfg.threshold.max(1);

    let spectral = n <= oracle_cap.min(ORACLE_CAP);
    let mut levels = Vec::with_capacity(d);
    let mut rcdd_ok = true;
    let mut approx_ok = true;
    let mut dom_ok = true;
    let mut eulerian_ok = true;
    let mut connected_ok = true;
    for (k, lvl) in chain.levels.iter().enumerate() {
        let res = lvl.s.relative_residual();
        eulerian_ok &= res <= tol.structural_tol;
        let sc = lvl.s.is_strongly_connected();
        connected_ok &= sc;
        let margin = if k + 1 < d {
            let m = lvl.s.matrix().restrict(lvl.part.f(), lvl.part.f()).map(|a| rcdd_margin(&a)).unwrap_or(RcddMargin::NotRcdd);
            rcdd_ok &= m.at_least(cfg.alpha);
            Some(m)
        } else {
            None
        };
        let mut rep = LevelReport {
            index: lvl.index,
            size: lvl.vertices.len(),
            nnz: lvl.s.nnz(),
            f_size: lvl.part.f().len(),
            eulerian_residual: res,
            strongly_connected: sc,
            rcdd_margin: margin,
            declared_delta: cfg.declared_delta(lvl.index),
            measured_delta: None,
            kernel_ok: None,
            psd_margin: None,
        };
        if spectral {
            let reference = if k == 0 {
                Ok(l.to_dense())
            } else {
                let prev = &chain.levels[k - 1];
                exact_schur(&prev.s.to_dense(), &prev.part)
            };
            match reference {
                Ok(r) => {
                    let s = lvl.s.to_dense();
                    let ur = r.symmetric_part();
                    match asym_measure(&s.add(&r, T::one(), -T::one()), &ur, tol.psd_tol) {
                        Ok(m) => {
                            approx_ok &= m.within(rep.declared_delta);
                            rep.measured_delta = Some(m.value);
                            rep.kernel_ok = Some(m.kernel_ok);
                        }
                        Err(_) => approx_ok = false,
                    }
                    match loewner_margin(&s.symmetric_part(), &ur) {
                        Ok(p) => {
                            dom_ok &= p >= -tol.psd_tol;
                            rep.psd_margin = Some(p);
                        }
                        Err(_) => dom_ok = false,
                    }
                }
                Err(_) => {
                    approx_ok = false;
                    dom_ok = false;
                }
            }
        }
        levels.push(rep);
    }
    ChainReport {
        n,
        depth: d,
        total_nnz: chain.total_nnz(),
        levels,
        partition_ok,
        shrinkage_ok,
        final_size_ok,
        rcdd_ok,
        approximation_ok: spectral.then_some(approx_ok),
        domination_ok: spectral.then_some(dom_ok),
        eulerian_ok,
        connected_ok,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LevelFile {
    index: usize,
    file: String,
    vertices: Vec<usize>,
    f_local: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ChainFile {
    version: u32,
    n: usize,
    config: ChainConfig,
    levels: Vec<LevelFile>,
    final_pinv: Vec<Vec<f64>>,
    stats: Vec<LevelStats>,
}

/// Writes `chain.json` and one `level_<i>.mtx` per level into `dir`.
pub fn save_chain<T: Scalar>(chain: &SchurChain<T>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut levels = Vec::with_capacity(chain.depth());
    for lvl in &chain.levels {
        let file = format!("level_{}.mtx", lvl.index);
        mtx::write_matrix(dir.join(&file), lvl.s.matrix())?;
        levels.push(LevelFile {
            index: lvl.index,
            file,
            vertices: lvl.vertices.clone(),
            f_local: lvl.part.f().to_vec(),
        });
    }
    let cf = ChainFile {
        version: CHAIN_FORMAT_VERSION,
        n: chain.n,
        config: chain.config,
        levels,
        final_pinv: chain.final_pinv.to_rows().into_iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect(),
        stats: chain.stats.clone(),
    };
    fs::write(dir.join("chain.json"), serde_json::to_string_pretty(&cf)?)?;
    Ok(())
}

pub fn load_chain<T: Scalar>(dir: impl AsRef<Path>) -> Result<SchurChain<T>> {
    let dir = dir.as_ref();
    let cf: ChainFile = serde_json::from_str(&fs::read_to_string(dir.join("chain.json"))?)?;
    if cf.version != CHAIN_FORMAT_VERSION {
        return Err(Error::ChainError(format!("unsupported chain format version {}", cf.version)));
    }
    let mut levels = Vec::with_capacity(cf.levels.len());
    for lf in cf.levels {
        if lf.file.contains('/') || lf.file.contains('\\') || lf.file.contains("..") {
            return Err(Error::ChainError(format!("level file name {:?} is not a plain name", lf.file)));
        }
        let m = mtx::read_matrix::<T>(dir.join(&lf.file))?;
        let s = DirectedLaplacian::from_matrix(m, &Tolerances::default())?;
        if s.n() != lf.vertices.len() {
            return Err(Error::ChainError(format!("level {} has {} rows for {} vertices", lf.index, s.n(), lf.vertices.len())));
        }
        if lf.vertices.iter().any(|&v| v >= cf.n) {
            return Err(Error::ChainError(format!("level {} lists a vertex outside 0..{}", lf.index, cf.n)));
        }
        let part = Partition::from_f(&lf.f_local, s.n())?;
        levels.push(ChainLevel { index: lf.index, vertices: lf.vertices, s, part });
    }
    if levels.is_empty() {
        return Err(Error::ChainError("chain has no levels".into()));
    }
    let rows: Vec<Vec<T>> = cf.final_pinv.iter().map(|r| r.iter().map(|&v| T::of(v)).collect()).collect();
    let final_pinv = DenseMatrix::from_rows(&rows)?;
    let last = levels.last().expect("nonempty").vertices.len();
    if final_pinv.n_rows() != last || final_pinv.n_cols() != last {
        return Err(Error::ChainError("final pseudoinverse has the wrong shape".into()));
    }
    Ok(SchurChain { n: cf.n, config: cf.config, levels, final_pinv, stats: cf.stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{cycle, random_eulerian};

    #[test]
    fn small_graph_is_one_level() {
        let l = random_eulerian::<f64>(60, 300, 1).unwrap();
        let chain = build_chain(&l, &ChainConfig::default()).unwrap();
        assert_eq!(chain.depth(), 1);
        assert_eq!(chain.levels[0].part.f().len(), 60);
        let rep = validate_chain(&chain, &l, 2000);
        assert!(rep.all_ok(), "{rep:?}");
    }

    #[test]
    fn exact_chain_on_sixty_vertices() {
        let l = random_eulerian::<f64>(60, 360, 4).unwrap();
        let cfg = ChainConfig { threshold: 20, schur: SchurConfig::exact(), ..ChainConfig::default() };
        let chain = build_chain(&l, &cfg).unwrap();
        assert!(chain.depth() >= 2);
        let rep = validate_chain(&chain, &l, 2000);
        assert!(rep.all_ok(), "{rep:#?}");
    }

    #[test]
    fn cycle_shrinks_geometrically() {
        let l = cycle::<f64>(400).unwrap();
        let chain = build_chain(&l, &ChainConfig::default()).unwrap();
        let beta = ChainConfig::default().beta();
        for (i, &c) in chain.c_sizes().iter().enumerate() {
            assert!(c as f64 <= (1.0 - beta).powi(i as i32) * 400.0);
        }
        assert!(chain.levels.last().unwrap().vertices.len() <= 100);
    }
}
