//! Worked examples checked against the dense oracle.

use blockelim::augmented::repetition;
use blockelim::chain::{build_chain, validate_chain, ChainConfig};
use blockelim::dense::{asym_measure, exact_schur, laplacian_pinv, min_eig, pinv, undirectify_dense, DenseMatrix};
use blockelim::schur::{patch_matrix, sparse_schur_traced};
use blockelim::solver::{assemble_lhat, l_norm, prec_apply, project_out_ones, solve, Preconditioner};
use blockelim::sparse::SparseMatrix;
use blockelim::sparsify::{se, spar_p};
use blockelim::{
    find_rcdd, generate, spar_e, DirectedLaplacian, Family, Partition, RngStream, SchurConfig, SolveConfig,
    SparsifierConfig, Tolerances,
};
use rand::Rng;

fn random_graph(n: usize, m: usize, seed: u64) -> DirectedLaplacian {
    generate(Family::RandomEulerian, n, m, seed).unwrap()
}

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = RngStream::new(seed).rng();
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn sampled_product_quality_on_uniform_vectors() {
    let n = 50;
    let x = vec![1.0 / (n as f64).sqrt(); n];
    let sx: f64 = x.iter().sum();
    let g = DenseMatrix::from_fn(n, n, |i, j| if i == j { sx * x[j] } else { 0.0 } - x[i] * x[j]);
    let ug = undirectify_dense(&g);
    let outer = DenseMatrix::from_fn(n, n, |i, j| x[i] * x[j]);
    // At the default oversampling the exact product is smaller than a sample.
    let cfg = SparsifierConfig { product_oversample: 0.2, ..SparsifierConfig::default() };
    let mut good = 0;
    let mut sampled = 0;
    for seed in 0..100 {
        let a = spar_p(&x, &x, 0.5, &cfg, RngStream::new(seed)).unwrap();
        if a.nnz() < n * n {
            sampled += 1;
        }
        let rep = asym_measure(&a.to_dense().add(&outer, 1.0, -1.0), &ug, 1e-9).unwrap();
        if rep.kernel_ok && rep.value <= 0.5 {
            good += 1;
        }
    }
    assert_eq!(sampled, 100);
    assert!(good >= 95, "{good}/100");
}

#[test]
fn sp_keeps_ff_block_row_sums() {
    let n = 40;
    let mut rng = RngStream::new(11).rng();
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let part = Partition::from_f(&(0..20).collect::<Vec<_>>(), n).unwrap();
    let cfg = SparsifierConfig { product_oversample: 0.05, ..SparsifierConfig::default() };
    let b = blockelim::sparsify::sp(&x, &y, 0.5, &part, &cfg, RngStream::new(3)).unwrap();
    let f = part.f();
    let bff = b.restrict(f, f).unwrap();
    let yf: f64 = f.iter().map(|&j| y[j]).sum();
    for (k, r) in bff.row_sums().iter().enumerate() {
        assert!((r - yf * x[f[k]]).abs() <= 1e-12, "row {k}");
    }
}

#[test]
fn spar_e_quality_at_three_hundred() {
    let n = 300;
    let cfg = SparsifierConfig { oversample: 0.25, ..SparsifierConfig::default() };
    let mut good = 0;
    for seed in 0..100 {
        let l = random_graph(n, 5700, seed);
        let s = spar_e(&l, 0.5, &cfg, RngStream::new(seed)).unwrap();
        assert!(s.nnz() < l.nnz(), "seed {seed}: {} vs {}", s.nnz(), l.nnz());
        assert_eq!(s.diag(), l.diag());
        let err = s.to_dense().add(&l.to_dense(), 1.0, -1.0);
        let rep = asym_measure(&err, &l.to_dense().symmetric_part(), 1e-9).unwrap();
        if rep.kernel_ok && rep.value <= 0.5 {
            good += 1;
        }
    }
    assert!(good >= 90, "{good}/100");
}

#[test]
fn se_keeps_ff_degrees_exactly() {
    let n = 200;
    let l = random_graph(n, 6000, 5);
    let part = Partition::from_f(&(0..100).collect::<Vec<_>>(), n).unwrap();
    let cfg = SparsifierConfig { oversample: 0.05, ..SparsifierConfig::default() };
    let s = se(&l, 0.5, &part, &cfg, RngStream::new(6)).unwrap();
    assert!(s.nnz() < l.nnz());
    let f = part.f();
    let (a, b) = (l.matrix().restrict(f, f).unwrap(), s.matrix().restrict(f, f).unwrap());
    let diff = max_abs_diff(&a.row_sums(), &b.row_sums()).max(max_abs_diff(&a.col_sums(), &b.col_sums()));
    assert!(diff <= 1e-12 * l.max_diag(), "{diff}");
}

#[test]
fn sparse_schur_quality_at_three_hundred() {
    let n = 300;
    let mut good = 0;
    for seed in 0..100 {
        let l = random_graph(n, 1800, 100 + seed);
        let part = find_rcdd(&l, 0.25, RngStream::new(seed)).unwrap().part;
        let out = sparse_schur_traced(&l, &part, 0.5, &SchurConfig::default(), RngStream::new(seed)).unwrap();
        let sc = exact_schur(&l.to_dense(), &part).unwrap();
        let rep = asym_measure(&out.s.to_dense().add(&sc, 1.0, -1.0), &undirectify_dense(&sc), 1e-9).unwrap();
        if rep.kernel_ok && rep.value <= 0.5 {
            good += 1;
        }
    }
    assert!(good >= 90, "{good}/100");
}

#[test]
fn patch_fixes_random_surplus() {
    let n = 20;
    let mut rng = RngStream::new(8).rng();
    // Nonpositive off-diagonals with a diagonal large enough for nonnegative sums.
    let mut trip = Vec::new();
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            if i != j && rng.gen_bool(0.3) {
                let w = rng.gen_range(0.1..1.0);
                trip.push((i, j, -w));
                row += w;
            }
        }
        trip.push((i, i, row + 2.0 * n as f64));
    }
    let s0 = SparseMatrix::from_triplets(n, n, trip).unwrap();
    let r = patch_matrix(&s0, &Tolerances::default()).unwrap();
    let fixed = s0.add(&r, 1.0, 1.0).unwrap();
    let scale = fixed.to_dense().max_abs();
    assert!(fixed.row_sums().iter().all(|v| v.abs() <= 1e-12 * scale));
    assert!(fixed.col_sums().iter().all(|v| v.abs() <= 1e-12 * scale));
}

#[test]
fn repetition_preserves_psd() {
    let n = 6;
    let mut rng = RngStream::new(2).rng();
    let b = DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let a = b.matmul(&b.transpose());
    let part = Partition::from_f(&[1, 3, 4], n).unwrap();
    let r = repetition(3, &part, &a).unwrap();
    assert!(min_eig(&r).unwrap() >= -1e-10 * a.max_abs());
}

#[test]
fn one_level_preconditioner_is_projected_pinv() {
    let l = random_graph(40, 200, 3);
    let chain = build_chain(&l, &ChainConfig::default()).unwrap();
    assert_eq!(chain.depth(), 1);
    let p = pinv(&chain.levels[0].s.to_dense()).unwrap();
    let x = random_vec(40, 1);
    let mut want = p.matvec(&x);
    let mean = want.iter().sum::<f64>() / 40.0;
    want.iter_mut().for_each(|v| *v -= mean);
    let got = prec_apply(&chain, &x, 5).unwrap();
    assert!(max_abs_diff(&got, &want) <= 1e-10 * want.iter().fold(0.0f64, |m, v| m.max(v.abs())));
}

#[test]
fn preconditioner_is_linear_and_mean_free() {
    let n = 150;
    let l = random_graph(n, 900, 4);
    let cfg = ChainConfig { threshold: 40, seed: 2, ..ChainConfig::practical() };
    let chain = build_chain(&l, &cfg).unwrap();
    assert!(chain.depth() >= 2);
    let pre = Preconditioner::new(&chain, 8).unwrap();
    let (a, b) = (random_vec(n, 10), random_vec(n, 11));
    let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - 3.0 * y).collect();
    let (za, zb, zs) = (pre.apply(&a).unwrap(), pre.apply(&b).unwrap(), pre.apply(&sum).unwrap());
    let comb: Vec<f64> = za.iter().zip(&zb).map(|(x, y)| 2.0 * x - 3.0 * y).collect();
    let scale = zs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(max_abs_diff(&zs, &comb) <= 1e-12 * scale);
    assert!(zs.iter().sum::<f64>().abs() <= 1e-12 * scale * n as f64);
}

#[test]
fn exact_chain_preconditioner_approaches_lhat_pinv() {
    let n = 60;
    let l = random_graph(n, 300, 12);
    let mut cfg = ChainConfig { threshold: 20, seed: 3, ..ChainConfig::default() };
    cfg.schur = SchurConfig::exact();
    let chain = build_chain(&l, &cfg).unwrap();
    assert!(chain.depth() >= 2);
    let lhat = assemble_lhat(&chain).unwrap();
    let mut x = random_vec(n, 13);
    project_out_ones(&mut x);
    let want = laplacian_pinv(&lhat).unwrap().matvec(&x);
    let got = prec_apply(&chain, &x, 200).unwrap();
    assert!(max_abs_diff(&got, &want) <= 1e-6, "{}", max_abs_diff(&got, &want));
}

#[test]
fn exact_chain_passes_validation() {
    let n = 120;
    let l = random_graph(n, 720, 21);
    let mut cfg = ChainConfig { threshold: 40, seed: 4, ..ChainConfig::default() };
    cfg.schur = SchurConfig::exact();
    let chain = build_chain(&l, &cfg).unwrap();
    let rep = validate_chain(&chain, &l, 2000);
    assert!(rep.all_ok());
    for level in &rep.levels {
        if let Some(d) = level.measured_delta {
            assert!(d <= level.declared_delta, "level {}: {d} > {}", level.index, level.declared_delta);
        }
    }
}

#[test]
fn zeroed_level_fails_validation() {
    let n = 120;
    let l = random_graph(n, 720, 21);
    let cfg = ChainConfig { threshold: 40, seed: 4, ..ChainConfig::default() };
    let mut chain = build_chain(&l, &cfg).unwrap();
    assert!(chain.depth() >= 2);
    let m = chain.levels[1].s.n();
    chain.levels[1].s = DirectedLaplacian::from_edges(m, &[]).unwrap();
    assert!(!validate_chain(&chain, &l, 2000).all_ok());
}

#[test]
fn generator_postconditions() {
    let l = random_graph(500, 5000, 7);
    assert!(l.eulerian_flag());
    assert!(l.is_strongly_connected());
}

#[test]
fn solve_five_hundred_to_tolerance() {
    let n = 500;
    let l = random_graph(n, 5000, 17);
    let chain = build_chain(&l, &ChainConfig { seed: 1, ..ChainConfig::practical() }).unwrap();
    let pre = Preconditioner::new(&chain, blockelim::solver::default_inner_n(n)).unwrap();
    let b = blockelim::bench::random_rhs(n, RngStream::new(5));
    let (x, rep) = solve(&l, &b, &pre, &SolveConfig::default()).unwrap();
    assert!(rep.converged);
    let xs = laplacian_pinv(&l.to_dense()).unwrap().matvec(&b);
    let d: Vec<f64> = x.iter().zip(&xs).map(|(a, b)| a - b).collect();
    assert!(l_norm(l.matrix(), &d).unwrap() <= 1e-8 * l_norm(l.matrix(), &xs).unwrap());
}

#[test]
fn sampled_product_is_unbiased() {
    let x = [0.5, 1.0, 0.25, 2.0, 0.75, 1.5];
    let y = [1.0, 0.2, 0.6, 0.9, 1.4, 0.3];
    let cfg = SparsifierConfig { product_oversample: 0.02, ..SparsifierConfig::default() };
    let runs = 10_000;
    let (mut s1, mut s2) = (DenseMatrix::zeros(6, 6), DenseMatrix::zeros(6, 6));
    for seed in 0..runs {
        let a = spar_p(&x, &y, 0.5, &cfg, RngStream::new(seed)).unwrap().to_dense();
        assert!(a.data().iter().filter(|&&v| v != 0.0).count() < 36);
        s1 = s1.add(&a, 1.0, 1.0);
        s2 = s2.add(&DenseMatrix::from_fn(6, 6, |i, j| a[(i, j)] * a[(i, j)]), 1.0, 1.0);
    }
    let r = runs as f64;
    for i in 0..6 {
        for j in 0..6 {
            let mean = s1[(i, j)] / r;
            let var = s2[(i, j)] / r - mean * mean;
            let z = (mean - x[i] * y[j]) / (var / r).sqrt();
            assert!(z.abs() <= 4.5, "({i},{j}): mean {mean}, z = {z}");
        }
    }
}

#[test]
fn thousand_cycle_chain_shrinks() {
    let l: DirectedLaplacian = generate(Family::Cycle, 1000, 0, 0).unwrap();
    let cfg = ChainConfig::default();
    let chain = build_chain(&l, &cfg).unwrap();
    let beta = cfg.beta();
    assert!((beta - 1.0 / 20.0).abs() < 1e-15);
    for (i, &c) in chain.c_sizes().iter().enumerate() {
        assert!(c as f64 <= (1.0 - beta).powi(i as i32) * 1000.0, "level {i}: {c}");
    }
    let bound = (10f64.ln() / -(1.0 - beta).ln()).ceil() as usize + 1;
    assert!(chain.depth() <= bound, "{} > {bound}", chain.depth());
}
