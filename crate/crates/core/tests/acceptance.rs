//! Acceptance suite. Runs every criterion, prints one line each, and exits
//! nonzero if any of them fails.

use std::process::ExitCode;
use std::time::Instant;

use blockelim::augmented::{build_augmented, lift, to_cf_order};
use blockelim::bench::{random_rhs, run_instance, BenchConfig, BenchInstance, BenchOutcome, BenchSuite};
use blockelim::chain::{build_chain, ChainConfig};
use blockelim::dense::{
    asym_measure, exact_pbe, exact_schur, lambda2, loewner_margin, spectral_norm, undirectify_dense, LaplacianOracle,
};
use blockelim::laplacian::rcdd_margin;
use blockelim::rcdd::min_size;
use blockelim::schur::{patch_bound, sparse_schur_traced};
use blockelim::solver::{
    assemble_bhat, assemble_lhat, b_norm, default_inner_n, l_norm, solve, solve_observed, Preconditioner,
};
use blockelim::{find_rcdd, generate, DenseMatrix, DirectedLaplacian, Family, Partition, RngStream, SchurConfig, SolveConfig};
use rand::seq::SliceRandom;
use rand::Rng;

const ALPHA: f64 = 0.25;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn graph(n: usize, m: usize, seed: u64) -> DirectedLaplacian {
    generate(Family::RandomEulerian, n, m, seed).unwrap()
}

fn rel_diff(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
    a.add(b, 1.0, -1.0).frobenius_norm() / b.frobenius_norm().max(f64::MIN_POSITIVE)
}

fn rcdd_part(l: &DirectedLaplacian, seed: u64) -> Partition {
    find_rcdd(l, ALPHA, RngStream::new(seed)).unwrap().part
}

fn random_split(n: usize, rng: &mut impl Rng) -> Partition {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let nf = rng.gen_range(1..n);
    Partition::from_f(&idx[..nf], n).unwrap()
}

/// `D^{-1/2} L D^{-1/2}`.
fn diag_scaled(l: &DenseMatrix) -> DenseMatrix {
    let d = l.diagonal();
    DenseMatrix::from_fn(l.n_rows(), l.n_cols(), |i, j| l[(i, j)] / (d[i] * d[j]).sqrt())
}

fn criterion_1() -> Outcome {
    let mut worst = 0.0f64;
    let mut count = 0;
    for (g, &n) in [10usize, 50, 200].iter().enumerate() {
        for s in 0..10u64 {
            let seed = 100 * g as u64 + s;
            let l = graph(n, 5 * n, seed);
            let part = rcdd_part(&l, seed);
            let base = exact_schur(&l.to_dense(), &part).unwrap();
            for k in 1..=5 {
                let (lk, _) = exact_pbe(&l, &part, k).unwrap();
                let sk = exact_schur(&lk, &part).unwrap();
                worst = worst.max(rel_diff(&sk, &base.scale(2f64.powi(k as i32))));
            }
            count += 1;
        }
    }
    outcome(worst <= 1e-9, format!("{count} graphs, k = 1..5, worst relative error {worst:.2e} (limit 1e-9)"))
}

/// Grows an α-RCDD set greedily in random order, keeping `|F| ≤ 6`.
fn small_rcdd(l: &DirectedLaplacian, rng: &mut impl Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..l.n()).collect();
    order.shuffle(rng);
    let mut f: Vec<usize> = Vec::new();
    for v in order {
        if f.len() == 6 || f.len() + 1 == l.n() {
            break;
        }
        let mut trial = f.clone();
        trial.push(v);
        trial.sort_unstable();
        if rcdd_margin(&l.matrix().restrict(&trial, &trial).unwrap()).at_least(ALPHA) {
            f = trial;
        }
    }
    f
}

fn criterion_2() -> Outcome {
    let mut chain_err = 0.0f64;
    let mut quad_err = 0.0f64;
    let mut margin = f64::INFINITY;
    let mut graphs = 0;
    let mut seed = 0u64;
    while graphs < 20 {
        seed += 1;
        let mut rng = RngStream::new(seed).derive(2, 0).rng();
        let n = rng.gen_range(4..=12);
        let l = graph(n, 2 * n, seed);
        let f = small_rcdd(&l, &mut rng);
        if f.is_empty() || n - f.len() > 6 {
            continue;
        }
        graphs += 1;
        let part = Partition::from_f(&f, n).unwrap();
        let u = l.to_dense().symmetric_part();
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lx = l.to_dense().quad_form(&x);
        for k in 1..=4 {
            let (lk, _) = exact_pbe(&l, &part, k).unwrap();
            let lk_cf = to_cf_order(&lk, &part);
            for i in 0..k {
                let m = build_augmented(&l, &part, i, k).unwrap();
                let next = build_augmented(&l, &part, i + 1, k).unwrap();
                let n_aug = m.mat.n_rows();
                let keep = |drop: &[usize]| {
                    let f = Partition::from_f(drop, n_aug).unwrap();
                    exact_schur(&m.mat, &f).unwrap()
                };
                chain_err = chain_err.max(rel_diff(&keep(&m.upper_half()), &next.mat));
                chain_err = chain_err.max(rel_diff(&keep(&m.beyond_original()), &lk_cf));
            }
            let m0 = build_augmented(&l, &part, 0, k).unwrap();
            let xt = lift(&x, &part, 1 << k);
            let q = m0.mat.quad_form(&xt);
            let want = 2f64.powi(k as i32) * lx;
            quad_err = quad_err.max((q - want).abs() / want.abs().max(f64::MIN_POSITIVE));
            let uk = undirectify_dense(&lk).scale(1.0 / 2f64.powi(k as i32));
            margin = margin.min(loewner_margin(&u.scale(3.0 + 2.0 / ALPHA), &uk).unwrap());
        }
    }
    let pass = chain_err <= 1e-9 && quad_err <= 1e-10 && margin >= -1e-8;
    outcome(
        pass,
        format!(
            "{graphs} graphs, k = 1..4: Schur chain error {chain_err:.2e}, quadratic form error {quad_err:.2e}, \
             robustness margin {margin:.2e}"
        ),
    )
}

fn criterion_3() -> Outcome {
    let instances = 100;
    let mut ldl = f64::INFINITY;
    let mut dld = f64::INFINITY;
    let mut sc_u = f64::INFINITY;
    let mut robust = f64::INFINITY;
    let mut tran = 0.0f64;
    let mut la2 = f64::INFINITY;
    let mut diag = f64::INFINITY;
    for t in 0..instances {
        let seed = 3000 + t as u64;
        let mut rng = RngStream::new(seed).derive(3, 0).rng();
        // Mostly small graphs, one in ten at the upper size.
        let n = if t % 10 == 9 { 200 } else { rng.gen_range(4..=60) };
        let l = graph(n, rng.gen_range(n..=6 * n), seed);
        let ld = l.to_dense();
        let u = ld.symmetric_part();

        let dinv = DenseMatrix::from_diagonal(&ld.diagonal().iter().map(|d| 1.0 / d).collect::<Vec<_>>());
        let ltdl = ld.transpose().matmul(&dinv.matmul(&ld));
        ldl = ldl.min(loewner_margin(&u.scale(2.0), &ltdl).unwrap());
        dld = dld.min(2.0 - spectral_norm(&diag_scaled(&ld)).unwrap());

        let part = random_split(n, &mut rng);
        let sc_l = exact_schur(&ld, &part).unwrap();
        let sc_uu = exact_schur(&u, &part).unwrap();
        sc_u = sc_u.min(loewner_margin(&undirectify_dense(&sc_l), &sc_uu).unwrap());

        let alpha = [0.1, 0.25, 0.5, 1.0][t % 4];
        let rp = find_rcdd(&l, alpha, RngStream::new(seed)).unwrap().part;
        if !rp.c().is_empty() {
            let sl = undirectify_dense(&exact_schur(&ld, &rp).unwrap());
            let su = exact_schur(&u, &rp).unwrap();
            robust = robust.min(loewner_margin(&su.scale(3.0 + 2.0 / alpha), &sl).unwrap());
        }

        // F = F1 ∪ F2 with |C| ≥ 2, so the result is not the zero 1x1 matrix.
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let nf = rng.gen_range(2..n - 1);
        let split = rng.gen_range(1..nf);
        let (f1, f2) = (&idx[..split], &idx[split..nf]);
        let p1 = Partition::from_f(f1, n).unwrap();
        let rest = exact_schur(&ld, &p1).unwrap();
        let local = p1.local_index();
        let f2_local: Vec<usize> = f2.iter().map(|&v| local[v]).collect();
        let two_step = exact_schur(&rest, &Partition::from_f(&f2_local, p1.c().len()).unwrap()).unwrap();
        let one_step = exact_schur(&ld, &Partition::from_f(&idx[..nf], n).unwrap()).unwrap();
        tran = tran.max(rel_diff(&two_step, &one_step));

        let l2 = lambda2(&u).unwrap();
        let norm = spectral_norm(&u).unwrap();
        if part.c().len() >= 2 {
            la2 = la2.min((lambda2(&sc_uu).unwrap() - l2) / norm);
        }
        let min_diag = u.diagonal().into_iter().fold(f64::INFINITY, f64::min);
        diag = diag.min((min_diag - 0.5 * l2) / norm);
    }
    let pass = [ldl, dld, sc_u, robust, la2, diag].iter().all(|&m| m >= -1e-8) && tran <= 1e-10;
    outcome(
        pass,
        format!(
            "{instances} instances per fact: margins LDL {ldl:.2e}, DLD {dld:.2e}, sc(U) vs U(sc) {sc_u:.2e}, \
             robustness {robust:.2e}, lambda2 {la2:.2e}, diagonal {diag:.2e}; transitivity error {tran:.2e}"
        ),
    )
}

fn criterion_4(runs: &[BenchOutcome]) -> Outcome {
    let mut worst = 0.0f64;
    let mut matrices = 0usize;
    for run in runs {
        for level in &run.chain.levels {
            worst = worst.max(level.s.relative_residual());
            matrices += 1;
        }
        for trace in run.chain.stats.iter().filter_map(|s| s.schur.as_ref()) {
            for r in &trace.per_round {
                worst = worst.max(r.assembled_residual).max(r.residual);
                matrices += 2;
            }
            worst = worst.max(trace.patched_residual).max(trace.output_residual);
            matrices += 2;
        }
    }
    outcome(
        worst <= 1e-9,
        format!("{} instances, {matrices} matrices, worst relative residual {worst:.2e} (limit 1e-9)", runs.len()),
    )
}

fn criterion_5() -> Outcome {
    let mut failures = 0;
    let mut runs = 0;
    let mut worst_ratio = f64::INFINITY;
    for family in [Family::Cycle, Family::Debruijn, Family::RandomEulerian] {
        for n in [64usize, 256, 1024] {
            for seed in 0..100u64 {
                let l: DirectedLaplacian = generate(family, n, 8 * n, seed).unwrap();
                let sel = find_rcdd(&l, ALPHA, RngStream::new(seed)).unwrap();
                let f = sel.part.f();
                let margin = rcdd_margin(&l.matrix().restrict(f, f).unwrap());
                worst_ratio = worst_ratio.min(f.len() as f64 / min_size(n, ALPHA) as f64);
                if f.len() < min_size(n, ALPHA) || !margin.at_least(ALPHA) {
                    failures += 1;
                }
                runs += 1;
            }
        }
    }
    outcome(
        failures == 0,
        format!("{runs} runs, {failures} failures, smallest |F| / bound {worst_ratio:.2}"),
    )
}

struct SchurQuality {
    within: usize,
    worst: f64,
    patch_ok: bool,
}

fn schur_quality(delta: f64, cfg: &SchurConfig, n: usize) -> SchurQuality {
    let mut q = SchurQuality { within: 0, worst: 0.0, patch_ok: true };
    for seed in 0..100u64 {
        let l = graph(n, 6 * n, 6000 + seed);
        let part = rcdd_part(&l, seed);
        let out = sparse_schur_traced(&l, &part, delta, cfg, RngStream::new(seed).derive(6, 0)).unwrap();
        let sc = exact_schur(&l.to_dense(), &part).unwrap();
        let err = out.s.to_dense().add(&sc, 1.0, -1.0);
        let rep = asym_measure(&err, &undirectify_dense(&sc), 1e-9).unwrap();
        if rep.kernel_ok && rep.value <= delta {
            q.within += 1;
        }
        q.worst = q.worst.max(rep.value);
        let t = &out.trace;
        if t.patch_frobenius > patch_bound(n, t.d_ff_max, t.rounds, ALPHA) {
            q.patch_ok = false;
        }
    }
    q
}

fn criterion_6() -> Outcome {
    let n = 120;
    let mut pass = true;
    let mut parts = Vec::new();
    for delta in [0.25, 0.5] {
        let sampled = schur_quality(delta, &SchurConfig::default(), n);
        let exact = schur_quality(delta, &SchurConfig::exact(), n);
        pass &= sampled.within >= 90 && exact.within == 100 && exact.patch_ok;
        parts.push(format!(
            "delta {delta}: sample_patch {}/100 (worst {:.3}), exact {}/100 (worst {:.2e}, patch bound {})",
            sampled.within,
            sampled.worst,
            exact.within,
            exact.worst,
            if exact.patch_ok { "held" } else { "violated" }
        ));
    }
    let practical = SchurConfig {
        sparsifier: blockelim::SparsifierConfig::practical(),
        ..SchurConfig::default()
    };
    let p = schur_quality(0.5, &practical, n);
    parts.push(format!("[info] practical preset at delta 0.5: {}/100 (worst {:.3})", p.within, p.worst));
    outcome(pass, format!("n = {n}; {}", parts.join("; ")))
}

fn criterion_7(runs: &[BenchOutcome]) -> Outcome {
    let q = 1.0 / (1.0 + ALPHA);
    let mut checks = 0usize;
    let mut worst = 0.0f64;
    let mut violations = 0usize;
    for run in runs {
        for trace in run.chain.stats.iter().filter_map(|s| s.schur.as_ref()) {
            if trace.n_f == 0 || trace.n_c <= 1 {
                continue;
            }
            let mut seq = vec![(0usize, trace.att_ff_norm0)];
            seq.extend(trace.per_round.iter().map(|r| (r.round, r.att_ff_norm)));
            for (k, v) in seq {
                let bound = q.powf(2f64.powi(k as i32));
                worst = worst.max(v / bound);
                if v > bound {
                    violations += 1;
                }
                checks += 1;
            }
        }
    }
    outcome(
        violations == 0,
        format!("{checks} rounds checked, {violations} above the bound, largest norm / bound {worst:.3}"),
    )
}

fn criterion_8() -> (Outcome, Vec<BenchOutcome>) {
    let cfg = BenchConfig::default();
    let mut runs = Vec::new();
    let mut ok = 0;
    let mut worst = 0.0f64;
    for n in [100usize, 500, 2000] {
        for seed in 0..10u64 {
            let inst = BenchInstance { family: Family::RandomEulerian, n, m: 10 * n, seed: 8000 + seed };
            let run = run_instance(&inst, &cfg).unwrap();
            let e = run.row.measured_eps.unwrap();
            worst = worst.max(e);
            if e <= cfg.solve.eps {
                ok += 1;
            }
            runs.push(run);
        }
    }
    let total = runs.len();
    (
        outcome(ok == total, format!("{ok}/{total} instances within 1e-8, worst relative U-error {worst:.2e}")),
        runs,
    )
}

fn criterion_9(runs: &[BenchOutcome]) -> Outcome {
    let mut worst_step = 0.0f64;
    let mut worst_mean = 0.0f64;
    let mut worst_name = String::new();
    for run in runs {
        let l = &run.laplacian;
        let n = l.n();
        let pre = Preconditioner::new(&run.chain, default_inner_n(n)).unwrap();
        let b = random_rhs(n, RngStream::new(run.row.seed).derive(0xB0, n as u64));
        let xs = LaplacianOracle::new(&l.to_dense()).unwrap().solve(&b);
        let mut errs = Vec::new();
        solve_observed(l, &b, &pre, &SolveConfig::default(), |_, x| {
            let d: Vec<f64> = x.iter().zip(&xs).map(|(a, b)| a - b).collect();
            errs.push(l_norm(l.matrix(), &d).unwrap());
        })
        .unwrap();
        // Steps below 1e-9 of the start are dominated by the oracle's own error.
        let floor = 1e-9 * errs[0];
        let steps: Vec<f64> = errs.windows(2).filter(|w| w[0] > floor).map(|w| w[1] / w[0]).collect();
        let step = steps.iter().copied().fold(0.0, f64::max);
        let mean = (steps.iter().map(|s| s.ln()).sum::<f64>() / steps.len() as f64).exp();
        if step > worst_step {
            worst_name = format!("{} n={}", run.row.family, n);
        }
        worst_step = worst_step.max(step);
        worst_mean = worst_mean.max(mean);
    }

    let mut worst_b = 0.0f64;
    let mut chains = 0;
    for n in [60usize, 90, 120] {
        for seed in 0..3u64 {
            let l = graph(n, 6 * n, 9000 + seed);
            let cfg = ChainConfig { threshold: 30, seed, ..ChainConfig::default() };
            let chain = build_chain(&l, &cfg).unwrap();
            let lhat = assemble_lhat(&chain).unwrap();
            let bhat = assemble_bhat(&chain, &lhat).unwrap();
            let z = Preconditioner::new(&chain, default_inner_n(n)).unwrap().to_dense().unwrap();
            let pi = DenseMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64);
            let m = pi.add(&pi.matmul(&z.matmul(&l.to_dense())), 1.0, -1.0);
            worst_b = worst_b.max(b_norm(&m, &bhat).unwrap());
            chains += 1;
        }
    }
    outcome(
        worst_step <= 0.9 && worst_b <= 0.5,
        format!(
            "{} standard instances: worst per-step U-error factor {worst_step:.3} ({worst_name}), worst geometric mean \
             {worst_mean:.3}; {chains} dense chains: worst B-hat factor {worst_b:.3}",
            runs.len()
        ),
    )
}

fn criterion_10(all: &[&BenchOutcome]) -> Outcome {
    let beta = 1.0 / (16.0 * (1.0 + ALPHA));
    let mut shrink_ok = true;
    for run in all {
        for (i, &c) in run.chain.c_sizes().iter().enumerate() {
            if c as f64 > (1.0 - beta).powi(i as i32) * run.chain.n as f64 {
                shrink_ok = false;
            }
        }
    }

    let n = 2000;
    let l = graph(n, 10 * n, 10_000);
    let cfg = ChainConfig { seed: 10, ..ChainConfig::practical() };
    let t0 = Instant::now();
    let chain = build_chain(&l, &cfg).unwrap();
    let pre = Preconditioner::new(&chain, default_inner_n(n)).unwrap();
    let build_s = t0.elapsed().as_secs_f64();
    let mut worst_query = 0.0f64;
    for q in 0..10u64 {
        let b = random_rhs(n, RngStream::new(q).derive(0x10, 0));
        let t = Instant::now();
        solve(&l, &b, &pre, &SolveConfig::default()).unwrap();
        worst_query = worst_query.max(t.elapsed().as_secs_f64());
    }
    let ratio = worst_query / build_s;
    outcome(
        shrink_ok && ratio < 0.1,
        format!(
            "shrinkage {} on {} chains; n = {n}: build {build_s:.2} s, slowest of 10 queries {worst_query:.3} s \
             (ratio {ratio:.3}, limit 0.1)",
            if shrink_ok { "held" } else { "violated" },
            all.len()
        ),
    )
}

fn report(id: usize, name: &str, t: Instant, o: &Outcome, failed: &mut usize) {
    let verdict = if o.pass { "PASS" } else { "FAIL" };
    println!("criterion {id:>2} ({name}): {verdict} [{:.1} s] {}", t.elapsed().as_secs_f64(), o.detail);
    if !o.pass {
        *failed += 1;
    }
}

fn main() -> ExitCode {
    let mut failed = 0;

    let t = Instant::now();
    report(1, "Schur doubling", t, &criterion_1(), &mut failed);
    let t = Instant::now();
    report(2, "augmented identities", t, &criterion_2(), &mut failed);
    let t = Instant::now();
    report(3, "fact suite", t, &criterion_3(), &mut failed);

    let t = Instant::now();
    let cfg = BenchConfig::default();
    let suite: Vec<BenchOutcome> = BenchSuite::smoke()
        .instances
        .iter()
        .chain(&BenchSuite::standard().instances)
        .map(|inst| run_instance(inst, &cfg).unwrap())
        .collect();
    let standard = &suite[BenchSuite::smoke().instances.len()..];
    let suite_s = t.elapsed().as_secs_f64();
    report(4, "Eulerianness conservation", t, &criterion_4(&suite), &mut failed);
    let t = Instant::now();
    report(5, "FindRCDD guarantee", t, &criterion_5(), &mut failed);
    let t = Instant::now();
    report(6, "SparseSchur quality", t, &criterion_6(), &mut failed);
    let t = Instant::now();
    report(7, "quadratic Att decay", t, &criterion_7(&suite), &mut failed);
    let t = Instant::now();
    let (c8, accuracy_runs) = criterion_8();
    report(8, "end-to-end accuracy", t, &c8, &mut failed);
    let t = Instant::now();
    report(9, "outer contraction", t, &criterion_9(standard), &mut failed);
    let t = Instant::now();
    let all: Vec<&BenchOutcome> = suite.iter().chain(&accuracy_runs).collect();
    report(10, "chain shrinkage and reuse", t, &criterion_10(&all), &mut failed);
    println!("bench suites (smoke + standard) built and solved in {suite_s:.1} s");

    if failed == 0 {
        println!("acceptance: all 10 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of 10 criteria failed");
        ExitCode::FAILURE
    }
}
