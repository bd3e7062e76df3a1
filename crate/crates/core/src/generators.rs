//! Strongly connected Eulerian test graphs. Every family is a sum of weighted
//! directed cycles with a constant weight along each cycle, so in-degree equals
//! out-degree exactly.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplacian::{build_laplacian, DirectedLaplacian};
use crate::rng::RngStream;
use crate::scalar::Scalar;

/// Longest extra cycle in `random_eulerian`.
pub const MAX_CYCLE_LEN: usize = 20;
const WEIGHT_RANGE: (f64, f64) = (1.0, 4.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Cycle,
    Debruijn,
    RandomEulerian,
    TorusFlow,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Cycle, Family::Debruijn, Family::RandomEulerian, Family::TorusFlow];

    pub fn name(self) -> &'static str {
        match self {
            Family::Cycle => "cycle",
            Family::Debruijn => "debruijn",
            Family::RandomEulerian => "random_eulerian",
            Family::TorusFlow => "torus_flow",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s || f.name().replace('_', "-") == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown graph family {s:?}")))
    }
}

/// `m` is only used by `random_eulerian` (target edge count, at least `n`).
pub fn generate<T: Scalar>(family: Family, n: usize, m: usize, seed: u64) -> Result<DirectedLaplacian<T>> {
    match family {
        Family::Cycle => cycle(n),
        Family::Debruijn => {
            if !n.is_power_of_two() || n < 2 {
                return Err(Error::InvalidInput(format!("debruijn needs n = 2^k >= 2, got {n}")));
            }
            debruijn(n.trailing_zeros() as usize)
        }
        Family::RandomEulerian => random_eulerian(n, m, seed),
        Family::TorusFlow => torus_flow(n, seed),
    }
}

/// Unit-weight directed cycle `0 → 1 → … → n−1 → 0`.
pub fn cycle<T: Scalar>(n: usize) -> Result<DirectedLaplacian<T>> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("cycle needs n >= 2, got {n}")));
    }
    let edges: Vec<_> = (0..n).map(|v| (v, (v + 1) % n, T::one())).collect();
    build_laplacian(&edges, n)
}

/// Binary de Bruijn graph on `2^k` vertices: `v → 2v mod n` and
/// `v → 2v+1 mod n`. The two self-loops at `0` and `n−1` carry no Laplacian
/// mass and are dropped.
pub fn debruijn<T: Scalar>(k: usize) -> Result<DirectedLaplacian<T>> {
    if k == 0 || k > 30 {
        return Err(Error::InvalidInput(format!("debruijn needs 1 <= k <= 30, got {k}")));
    }
    let n = 1usize << k;
    let edges: Vec<_> = (0..n)
        .flat_map(|v| [(v, (2 * v) % n), (v, (2 * v + 1) % n)])
        .filter(|&(u, w)| u != w)
        .map(|(u, w)| (u, w, T::one()))
        .collect();
    build_laplacian(&edges, n)
}

fn weight(rng: &mut impl rand::Rng) -> f64 {
    rng.gen_range(WEIGHT_RANGE.0..WEIGHT_RANGE.1)
}

/// `s × s` torus with `n = s²`: every row and every column is a directed
/// cycle with its own random weight.
pub fn torus_flow<T: Scalar>(n: usize, seed: u64) -> Result<DirectedLaplacian<T>> {
    let s = (n as f64).sqrt().round() as usize;
    if s * s != n || s < 2 {
        return Err(Error::InvalidInput(format!("torus_flow needs n = s^2 with s >= 2, got {n}")));
    }
    let mut rng = RngStream::new(seed).derive(0x70, 0).rng();
    let at = |r: usize, c: usize| r * s + c;
    let mut edges = Vec::with_capacity(2 * n);
    for r in 0..s {
        let w = T::of(weight(&mut rng));
        edges.extend((0..s).map(|c| (at(r, c), at(r, (c + 1) % s), w)));
    }
    for c in 0..s {
        let w = T::of(weight(&mut rng));
        edges.extend((0..s).map(|r| (at(r, c), at((r + 1) % s, c), w)));
    }
    build_laplacian(&edges, n)
}

/// A random Hamiltonian cycle plus random cycles of length `ℓ ∈ [3, 20]` on
/// distinct vertices until at least `m` edges are placed. Parallel edges merge.
pub fn random_eulerian<T: Scalar>(n: usize, m: usize, seed: u64) -> Result<DirectedLaplacian<T>> {
    if n < 3 {
        return Err(Error::InvalidInput(format!("random_eulerian needs n >= 3, got {n}")));
    }
    if m < n {
        return Err(Error::InvalidInput(format!("random_eulerian needs m >= n, got m={m}, n={n}")));
    }
    let mut rng = RngStream::new(seed).derive(0x7E, 0).rng();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let mut edges = Vec::with_capacity(m + MAX_CYCLE_LEN);
    let push_cycle = |verts: &[usize], w: f64, edges: &mut Vec<(usize, usize, T)>| {
        let len = verts.len();
        edges.extend((0..len).map(|i| (verts[i], verts[(i + 1) % len], T::of(w))));
    };
    let w = weight(&mut rng);
    push_cycle(&perm, w, &mut edges);
    let max_len = MAX_CYCLE_LEN.min(n);
    while edges.len() < m {
        let len = rng.gen_range(3..=max_len);
        let verts: Vec<usize> = rand::seq::index::sample(&mut rng, n, len).into_vec();
        let w = weight(&mut rng);
        push_cycle(&verts, w, &mut edges);
    }
    build_laplacian(&edges, n)
}
