//! Benchmark suites: generate, build a chain, solve, and measure against the
//! dense oracle where it fits.

use std::time::Instant;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::chain::{build_chain, ChainConfig, SchurChain};
use crate::dense::{LaplacianOracle, ORACLE_CAP};
use crate::error::{Error, Result};
use crate::generators::{generate, Family};
use crate::laplacian::DirectedLaplacian;
use crate::rng::RngStream;
use crate::solver::{default_inner_n, l_norm, project_out_ones, solve, Preconditioner, SolveConfig, SolveReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchInstance {
    pub family: Family,
    pub n: usize,
    /// Edge target for `random_eulerian`; ignored elsewhere.
    pub m: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSuite {
    pub name: String,
    pub instances: Vec<BenchInstance>,
}

impl BenchSuite {
    /// Cycle, de Bruijn and random Eulerian graphs at 64, 128, 256 and 512
    /// vertices.
    pub fn smoke() -> Self {
        let mut instances = Vec::new();
        for family in [Family::Cycle, Family::Debruijn, Family::RandomEulerian] {
            for n in [64, 128, 256, 512] {
                instances.push(BenchInstance { family, n, m: 8 * n, seed: 1 });
            }
        }
        Self { name: "smoke".into(), instances }
    }

    /// All four families at roughly 100, 500 and 2000 vertices.
    pub fn standard() -> Self {
        let sizes: [(Family, [usize; 3]); 4] = [
            (Family::Cycle, [100, 500, 2000]),
            (Family::Debruijn, [128, 512, 1024]),
            (Family::RandomEulerian, [100, 500, 2000]),
            (Family::TorusFlow, [100, 484, 1936]),
        ];
        let instances = sizes
            .iter()
            .flat_map(|&(family, ns)| ns.map(|n| BenchInstance { family, n, m: 10 * n, seed: 2 }))
            .collect();
        Self { name: "standard".into(), instances }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "smoke" => Ok(Self::smoke()),
            "standard" => Ok(Self::standard()),
            other => Err(Error::InvalidInput(format!("unknown bench suite {other:?} (smoke, standard)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub chain: ChainConfig,
    pub solve: SolveConfig,
    /// Largest `n` for which the dense oracle measures the error.
    pub oracle_cap: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            chain: ChainConfig::practical(),
            solve: SolveConfig::default(),
            oracle_cap: ORACLE_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub family: Family,
    pub n: usize,
    pub nnz: usize,
    pub build_ms: f64,
    pub solve_ms: f64,
    pub iterations: usize,
    /// `‖x − L†b‖_{U(L)} / ‖L†b‖_{U(L)}`, when the oracle ran.
    pub measured_eps: Option<f64>,
    pub chain_nnz: usize,
    pub depth: usize,
    pub seed: u64,
}

/// Everything one instance produced, for callers that inspect the chain.
#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub row: BenchRow,
    pub laplacian: DirectedLaplacian<f64>,
    pub chain: SchurChain<f64>,
    pub report: SolveReport,
}

/// Zero-mean right-hand side with entries uniform in `[−1, 1]`.
pub fn random_rhs(n: usize, stream: RngStream) -> Vec<f64> {
    let mut rng = stream.rng();
    let mut b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    project_out_ones(&mut b);
    b
}

/// Relative error of `x` against `L†b` in the `U(L)` seminorm.
pub fn oracle_error(l: &DirectedLaplacian<f64>, b: &[f64], x: &[f64]) -> Result<f64> {
    let oracle = LaplacianOracle::new(&l.to_dense())?;
    let xs = oracle.solve(b);
    let diff: Vec<f64> = x.iter().zip(&xs).map(|(a, b)| a - b).collect();
    Ok(l_norm(l.matrix(), &diff)? / l_norm(l.matrix(), &xs)?)
}

pub fn run_instance(inst: &BenchInstance, cfg: &BenchConfig) -> Result<BenchOutcome> {
    let l = generate::<f64>(inst.family, inst.n, inst.m, inst.seed)?;
    let chain_cfg = ChainConfig { seed: inst.seed, ..cfg.chain };
    let t0 = Instant::now();
    let chain = build_chain(&l, &chain_cfg)?;
    let build_ms = t0.elapsed().as_secs_f64() * 1e3;
    let inner = cfg.solve.inner_n.unwrap_or_else(|| default_inner_n(l.n()));
    let pre = Preconditioner::new(&chain, inner)?;
    let b = random_rhs(l.n(), RngStream::new(inst.seed).derive(0xB0, inst.n as u64));
    let t1 = Instant::now();
    let (x, report) = solve(&l, &b, &pre, &cfg.solve)?;
    let solve_ms = t1.elapsed().as_secs_f64() * 1e3;
    let measured_eps = if l.n() <= cfg.oracle_cap { Some(oracle_error(&l, &b, &x)?) } else { None };
    let row = BenchRow {
        family: inst.family,
        n: l.n(),
        nnz: l.nnz(),
        build_ms,
        solve_ms,
        iterations: report.iterations,
        measured_eps,
        chain_nnz: chain.total_nnz(),
        depth: chain.depth(),
        seed: inst.seed,
    };
    Ok(BenchOutcome { row, laplacian: l, chain, report })
}

pub fn run_suite(suite: &BenchSuite, cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    suite.instances.iter().map(|inst| run_instance(inst, cfg).map(|o| o.row)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoke_has_twelve_instances() {
        assert_eq!(BenchSuite::smoke().instances.len(), 12);
        assert!(BenchSuite::by_name("huge").is_err());
    }

    #[test]
    fn small_instance_meets_tolerance() {
        let inst = BenchInstance { family: Family::RandomEulerian, n: 80, m: 600, seed: 5 };
        let out = run_instance(&inst, &BenchConfig::default()).unwrap();
        assert!(out.row.measured_eps.unwrap() <= 1e-8);
        assert!(out.row.iterations > 0);
    }
}
