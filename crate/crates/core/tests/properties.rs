use blockelim::rcdd::min_size;
use blockelim::solver::pri;
use blockelim::sparse::SparseMatrix;
use blockelim::sparsify::sp;
use blockelim::{find_rcdd, generate, spar_e, Family, Partition, RngStream, SparsifierConfig};
use proptest::prelude::*;

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    let scale = a.iter().chain(b).fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * scale)
}

fn triplets(n: usize) -> impl Strategy<Value = Vec<(usize, usize, f64)>> {
    prop::collection::vec((0..n, 0..n, -5.0..5.0f64), 0..4 * n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn spmv_is_linear(
        trip in triplets(12),
        x in prop::collection::vec(-1.0..1.0f64, 12),
        y in prop::collection::vec(-1.0..1.0f64, 12),
        a in -3.0..3.0f64,
    ) {
        let m = SparseMatrix::from_triplets(12, 12, trip).unwrap();
        let comb: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + q).collect();
        let lhs = m.spmv(&comb).unwrap();
        let (mx, my) = (m.spmv(&x).unwrap(), m.spmv(&y).unwrap());
        let rhs: Vec<f64> = mx.iter().zip(&my).map(|(p, q)| a * p + q).collect();
        prop_assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn spar_e_keeps_degrees(seed in 0u64..1000, n in 20usize..120) {
        let l = generate::<f64>(Family::RandomEulerian, n, 12 * n, seed).unwrap();
        let cfg = SparsifierConfig { oversample: 0.05, ..SparsifierConfig::default() };
        let s = spar_e(&l, 0.5, &cfg, RngStream::new(seed)).unwrap();
        prop_assert_eq!(s.diag(), l.diag());
        let tol = 1e-12 * l.max_diag();
        prop_assert!(s.row_sums().iter().all(|v| v.abs() <= tol));
        prop_assert!(s.col_sums().iter().all(|v| v.abs() <= tol));
        prop_assert!(s.matrix().triplets().all(|(i, j, v)| i == j || v <= 0.0));
    }

    #[test]
    fn pri_is_linear(
        b1 in prop::collection::vec(-1.0..1.0f64, 6),
        b2 in prop::collection::vec(-1.0..1.0f64, 6),
        iters in 1usize..20,
    ) {
        let a = |v: &[f64]| -> Vec<f64> {
            (0..6).map(|i| 3.0 * v[i] - 0.5 * v[(i + 1) % 6] - v[(i + 5) % 6]).collect()
        };
        let z = |v: &[f64]| -> Vec<f64> { v.iter().map(|x| x / 3.0).collect() };
        let sum: Vec<f64> = b1.iter().zip(&b2).map(|(p, q)| p + q).collect();
        let x1 = pri(a, &b1, z, 0.5, iters).unwrap();
        let x2 = pri(a, &b2, z, 0.5, iters).unwrap();
        let xs = pri(a, &sum, z, 0.5, iters).unwrap();
        let comb: Vec<f64> = x1.iter().zip(&x2).map(|(p, q)| p + q).collect();
        prop_assert!(close(&xs, &comb, 1e-12));
    }

    #[test]
    fn sp_blocks_keep_their_sums(
        x in prop::collection::vec(0.0..1.0f64, 16),
        y in prop::collection::vec(0.0..1.0f64, 16),
        nf in 1usize..15,
        seed in 0u64..1000,
    ) {
        let part = Partition::from_f(&(0..nf).collect::<Vec<_>>(), 16).unwrap();
        let cfg = SparsifierConfig { product_oversample: 0.05, ..SparsifierConfig::default() };
        let b = sp(&x, &y, 0.5, &part, &cfg, RngStream::new(seed)).unwrap();
        for rows in [part.f(), part.c()] {
            for cols in [part.f(), part.c()] {
                let blk = b.restrict(rows, cols).unwrap();
                let ysum: f64 = cols.iter().map(|&j| y[j]).sum();
                let want: Vec<f64> = rows.iter().map(|&i| x[i] * ysum).collect();
                prop_assert!(close(&blk.row_sums(), &want, 1e-12));
            }
        }
    }

    #[test]
    fn find_rcdd_postconditions(seed in 0u64..10_000, n in 8usize..300, alpha in 0.05..2.0f64) {
        let l = generate::<f64>(Family::RandomEulerian, n, 6 * n, seed).unwrap();
        let sel = find_rcdd(&l, alpha, RngStream::new(seed)).unwrap();
        let f = sel.part.f();
        prop_assert!(f.len() >= min_size(n, alpha));
        let margin = blockelim::laplacian::rcdd_margin(&l.matrix().restrict(f, f).unwrap());
        prop_assert!(margin.at_least(alpha));
    }
}
