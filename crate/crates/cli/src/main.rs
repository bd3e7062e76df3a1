use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use blockelim::bench::{random_rhs, run_suite, BenchConfig, BenchSuite};
use blockelim::chain::{build_chain, load_chain, save_chain, validate_chain, ChainConfig};
use blockelim::dense::ORACLE_CAP;
use blockelim::mtx::{read_laplacian, read_vector, write_laplacian, write_vector};
use blockelim::solver::{default_inner_n, Preconditioner, SolveConfig};
use blockelim::{generate, Backend, DirectedLaplacian, Error, Family, RngStream, SparsifierConfig, Tolerances};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

const EXIT_FAILURE: u8 = 1;
const EXIT_NOT_EULERIAN: u8 = 2;
const EXIT_STAGNATED: u8 = 3;
const EXIT_INVALID_CHAIN: u8 = 4;

#[derive(Parser)]
#[command(name = "blockelim", version, about = "Eulerian Laplacian solver by sparsified block elimination")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated Eulerian Laplacian as Matrix Market.
    Gen {
        #[arg(long, value_parser = parse_family)]
        family: Family,
        /// Vertex count (a power of two for debruijn, a square for torus_flow).
        #[arg(long)]
        n: usize,
        /// Edge target for random_eulerian; defaults to 10n.
        #[arg(long)]
        m: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Build a Schur complement chain and save it to a directory.
    Build {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        chain: ChainArgs,
        /// Where to write the JSON build report; stdout if absent.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Solve L x = b with a saved chain.
    Solve {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long)]
        chain: PathBuf,
        /// Right-hand side (Matrix Market or one float per line); a random
        /// zero-mean vector drawn from --seed if absent.
        #[arg(long)]
        rhs: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        solve: SolveArgs,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Check a saved chain against its Laplacian.
    Validate {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long)]
        chain: PathBuf,
        /// Largest size for the dense spectral checks.
        #[arg(long, default_value_t = ORACLE_CAP)]
        oracle_cap: usize,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run a benchmark suite and write CSV.
    Bench {
        #[arg(long, default_value = "smoke")]
        suite: String,
        #[command(flatten)]
        chain: ChainArgs,
        #[command(flatten)]
        solve: SolveArgs,
        #[arg(long, default_value_t = ORACLE_CAP)]
        oracle_cap: usize,
        /// CSV destination; stdout if absent.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    /// Documented constants (c_s = 16, sampling at the requested accuracy).
    Reference,
    /// Sampling accuracy floored at 0.5 and c_s = 1, for chains on thousands of vertices.
    Practical,
}

#[derive(Args)]
struct ChainArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.25)]
    alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 100)]
    threshold: usize,
    #[arg(long, value_enum, default_value_t = Profile::Practical)]
    profile: Profile,
    #[arg(long, value_parser = parse_backend)]
    backend: Option<Backend>,
    /// Overrides the profile's oversampling constant c_s.
    #[arg(long)]
    oversample: Option<f64>,
    /// Overrides the profile's sampling accuracy floor; 0 disables it.
    #[arg(long)]
    delta_floor: Option<f64>,
}

impl ChainArgs {
    fn config(&self) -> ChainConfig {
        let mut sparsifier = match self.profile {
            Profile::Reference => SparsifierConfig::default(),
            Profile::Practical => SparsifierConfig::practical(),
        };
        if let Some(b) = self.backend {
            sparsifier.backend = b;
        }
        if let Some(c) = self.oversample {
            sparsifier.oversample = c;
        }
        if let Some(f) = self.delta_floor {
            sparsifier.delta_floor = (f > 0.0).then_some(f);
        }
        let mut cfg = ChainConfig {
            alpha: self.alpha,
            delta: self.delta,
            threshold: self.threshold,
            seed: self.seed,
            ..ChainConfig::default()
        };
        cfg.schur.sparsifier = sparsifier;
        cfg
    }
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, default_value_t = 1e-8)]
    eps: f64,
    /// Inner Richardson steps per level; ⌈2 log₂ n⌉ if absent.
    #[arg(long)]
    inner_n: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
}

impl SolveArgs {
    fn config(&self) -> SolveConfig {
        SolveConfig {
            eps: self.eps,
            inner_n: self.inner_n,
            max_iters: self.max_iters,
            ..SolveConfig::default()
        }
    }
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_backend(s: &str) -> Result<Backend, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Serialize)]
struct BuildReport<'a> {
    input: &'a Path,
    seed: u64,
    config: ChainConfig,
    n: usize,
    depth: usize,
    total_nnz: usize,
    c_sizes: Vec<usize>,
    build_ms: f64,
    levels: &'a [blockelim::chain::LevelStats],
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    input: &'a Path,
    chain: &'a Path,
    rhs: Option<&'a Path>,
    seed: u64,
    config: SolveConfig,
    inner_n: usize,
    #[serde(flatten)]
    report: &'a blockelim::SolveReport,
}

#[derive(Serialize)]
struct FailureReport {
    error: String,
    iterations: Option<usize>,
    residual: Option<f64>,
}

fn emit(value: &impl Serialize, path: Option<&Path>) -> blockelim::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn load_input(path: &Path) -> blockelim::Result<DirectedLaplacian> {
    let tol = Tolerances::default();
    let l: DirectedLaplacian = read_laplacian(path, &tol)?;
    if !l.eulerian_flag() {
        return Err(Error::NotEulerian { residual: l.relative_residual(), allowed: tol.structural_tol });
    }
    Ok(l)
}

fn run(cli: Cli) -> blockelim::Result<ExitCode> {
    match cli.command {
        Command::Gen { family, n, m, seed, out } => {
            let l: DirectedLaplacian = generate(family, n, m.unwrap_or(10 * n), seed)?;
            write_laplacian(&out, &l)?;
            eprintln!("wrote {family} graph with n={} nnz={} to {}", l.n(), l.nnz(), out.display());
        }
        Command::Build { input, out, chain, report } => {
            let l = load_input(&input)?;
            let cfg = chain.config();
            let t0 = Instant::now();
            let built = build_chain(&l, &cfg)?;
            let build_ms = t0.elapsed().as_secs_f64() * 1e3;
            save_chain(&built, &out)?;
            let rep = BuildReport {
                input: &input,
                seed: cfg.seed,
                config: cfg,
                n: built.n,
                depth: built.depth(),
                total_nnz: built.total_nnz(),
                c_sizes: built.c_sizes(),
                build_ms,
                levels: &built.stats,
            };
            emit(&rep, report.as_deref())?;
        }
        Command::Solve { input, chain, rhs, seed, solve, out, report } => {
            let l = load_input(&input)?;
            let built: blockelim::SchurChain = load_chain(&chain)?;
            if built.n != l.n() {
                return Err(Error::SizeError(format!("chain is for n={}, input has n={}", built.n, l.n())));
            }
            let b = match &rhs {
                Some(p) => read_vector(p)?,
                None => random_rhs(l.n(), RngStream::new(seed).derive(0xB0, l.n() as u64)),
            };
            let cfg = solve.config();
            let inner = cfg.inner_n.unwrap_or_else(|| default_inner_n(l.n()));
            let pre = Preconditioner::new(&built, inner)?;
            let (x, rep) = blockelim::solve(&l, &b, &pre, &cfg)?;
            if rep.projected_b {
                eprintln!("warning: b was not orthogonal to the all-ones vector; its mean was removed");
            }
            write_vector(&out, &x)?;
            let full = SolveOutput {
                input: &input,
                chain: &chain,
                rhs: rhs.as_deref(),
                seed,
                config: cfg,
                inner_n: inner,
                report: &rep,
            };
            emit(&full, report.as_deref())?;
        }
        Command::Validate { input, chain, oracle_cap, report } => {
            let l = load_input(&input)?;
            let built: blockelim::SchurChain = load_chain(&chain)?;
            let rep = validate_chain(&built, &l, oracle_cap);
            emit(&rep, report.as_deref())?;
            if !rep.all_ok() {
                eprintln!("chain failed validation");
                return Ok(ExitCode::from(EXIT_INVALID_CHAIN));
            }
        }
        Command::Bench { suite, chain, solve, oracle_cap, out } => {
            let suite = BenchSuite::by_name(&suite)?;
            let cfg = BenchConfig { chain: chain.config(), solve: solve.config(), oracle_cap };
            let rows = run_suite(&suite, &cfg)?;
            let mut buf = Vec::new();
            {
                let mut w = csv::Writer::from_writer(&mut buf);
                for r in &rows {
                    w.serialize(r).map_err(|e| Error::InvalidInput(e.to_string()))?;
                }
                w.flush()?;
            }
            match out {
                Some(p) => fs::write(p, &buf)?,
                None => print!("{}", String::from_utf8_lossy(&buf)),
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NotEulerian { .. } => {
                    eprintln!("only Eulerian Laplacians (in-degree = out-degree) are supported");
                    ExitCode::from(EXIT_NOT_EULERIAN)
                }
                Error::Stagnated { iterations, residual } => {
                    let rep = FailureReport { error: e.to_string(), iterations: Some(iterations), residual: Some(residual) };
                    if let Ok(text) = serde_json::to_string_pretty(&rep) {
                        println!("{text}");
                    }
                    ExitCode::from(EXIT_STAGNATED)
                }
                _ => ExitCode::from(EXIT_FAILURE),
            }
        }
    }
}
