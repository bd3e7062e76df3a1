//! Large α-RCDD vertex subsets by sample-then-discard.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::laplacian::{rcdd_margin, DirectedLaplacian, Partition, RcddMargin};
use crate::rng::RngStream;
use crate::scalar::Scalar;

pub const MAX_ROUNDS: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcddSelection {
    pub part: Partition,
    /// Rounds used, starting at 1.
    pub rounds: usize,
    pub margin: RcddMargin,
}

/// Smallest admissible `|F|`: `⌈n / (16(1+α))⌉`.
pub fn min_size(n: usize, alpha: f64) -> usize {
    (n as f64 / (16.0 * (1.0 + alpha))).ceil() as usize
}

pub fn find_rcdd<T: Scalar>(l: &DirectedLaplacian<T>, alpha: f64, stream: RngStream) -> Result<RcddSelection> {
    find_rcdd_with(l, alpha, stream, MAX_ROUNDS)
}

/// Each round samples every vertex with probability `1/(4(1+α))`, then drops,
/// in one pass over the sample, each vertex whose off-diagonal row or column
/// mass inside the sample exceeds `L_ii/(1+α)`. Survivors form an α-RCDD set
/// because dropping vertices only shrinks the remaining sums.
pub fn find_rcdd_with<T: Scalar>(
    l: &DirectedLaplacian<T>,
    alpha: f64,
    stream: RngStream,
    max_rounds: usize,
) -> Result<RcddSelection> {
    let n = l.n();
    if n < 2 {
        return Err(Error::InvalidInput(format!("find_rcdd needs n >= 2, got {n}")));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidInput(format!("alpha must be positive, got {alpha}")));
    }
    if !l.eulerian_flag() {
        return Err(Error::PreconditionViolated(format!(
            "find_rcdd needs an Eulerian Laplacian (relative residual {:e})",
            l.relative_residual()
        )));
    }
    let p = 1.0 / (4.0 * (1.0 + alpha));
    let need = min_size(n, alpha);
    let a = l.matrix();
    let diag = l.diag();
    let mut in_s = vec![false; n];
    for round in 1..=max_rounds {
        let mut rng = stream.derive(0xF1, round as u64).rng();
        for s in in_s.iter_mut() {
            *s = rng.gen_bool(p);
        }
        let keep: Vec<usize> = (0..n)
            .filter(|&i| in_s[i])
            .filter(|&i| {
                let cap = diag[i].as_f64() / (1.0 + alpha);
                let row: f64 = a.row(i).filter(|&(j, _)| j != i && in_s[j]).map(|(_, v)| v.as_f64().abs()).sum();
                let col: f64 = a.col(i).filter(|&(j, _)| j != i && in_s[j]).map(|(_, v)| v.as_f64().abs()).sum();
                row <= cap && col <= cap
            })
            .collect();
        if keep.len() < need || keep.len() == n {
            continue;
        }
        let margin = rcdd_margin(&a.restrict(&keep, &keep)?);
        if !margin.at_least(alpha) {
            continue;
        }
        return Ok(RcddSelection {
            part: Partition::from_f(&keep, n)?,
            rounds: round,
            margin,
        });
    }
    Err(Error::RetryExhausted { rounds: max_rounds })
}
