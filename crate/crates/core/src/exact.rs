//! Exact Kemeny-optimal rankings for small instances.
//!
//! Two independent routes: exhaustive enumeration of `S_n` (n <= 10) and a
//! Held–Karp style dynamic program over item subsets (n <= 20). Both return
//! the lexicographically smallest optimal order.

use std::time::{Duration, Instant};

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::ranking::{KemenyCost, PrecedenceMatrix, Profile, Ranking};

pub const BRUTE_FORCE_MAX_N: usize = 10;
pub const SUBSET_DP_MAX_N: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactResult {
    pub ranking: Ranking,
    /// Total disagreements `sum over voters of K(ranking, voter)`.
    pub cost_numerator: u64,
    pub cost: KemenyCost,
    pub nodes_explored: u64,
    pub elapsed: Duration,
}

/// Rearranges `order` into the next permutation in lexicographic order.
fn next_permutation(order: &mut [usize]) -> bool {
    let n = order.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && order[i - 1] >= order[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while order[j] <= order[i - 1] {
        j -= 1;
    }
    order.swap(i - 1, j);
    order[i..].reverse();
    true
}

/// Enumerates all `n!` orders.
pub fn solve_brute_force(profile: &Profile) -> Result<ExactResult> {
    let n = profile.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(Error::Capacity {
            solver: "brute force",
            n,
            max: BRUTE_FORCE_MAX_N,
        });
    }
    let start = Instant::now();
    let w = PrecedenceMatrix::from_profile(profile);
    let mut order: Vec<usize> = (0..n).collect();
    let mut best = order.clone();
    let mut best_cost = w.disagreements(&order);
    let mut nodes = 1u64;
    while next_permutation(&mut order) {
        nodes += 1;
        let cost = w.disagreements(&order);
        // Strict improvement keeps the lexicographically first minimizer.
        if cost < best_cost {
            best_cost = cost;
            best.copy_from_slice(&order);
        }
    }
    Ok(ExactResult {
        ranking: Ranking::new(best)?,
        cost_numerator: best_cost,
        cost: Ratio::new(best_cost, profile.m() as u64),
        nodes_explored: nodes,
        elapsed: start.elapsed(),
    })
}

/// Column sums `sum_{y in S} w[y][x]` tabulated per 10-bit chunk of `S`.
struct ColumnSums {
    n: usize,
    chunks: usize,
    table: Vec<u64>,
}

const CHUNK_BITS: usize = 10;

impl ColumnSums {
    fn new(w: &PrecedenceMatrix) -> Self {
        let n = w.n();
        let chunks = n.div_ceil(CHUNK_BITS).max(1);
        let size = 1usize << CHUNK_BITS;
        let mut table = vec![0u64; n * chunks * size];
        for x in 0..n {
            for c in 0..chunks {
                let base = (x * chunks + c) * size;
                for mask in 1..size {
                    let low = mask.trailing_zeros() as usize;
                    let y = c * CHUNK_BITS + low;
                    let add = if y < n { w.get(y, x) } else { 0 };
                    table[base + mask] = table[base + (mask & (mask - 1))] + add;
                }
            }
        }
        Self { n, chunks, table }
    }

    #[inline]
    fn sum(&self, x: usize, set: usize) -> u64 {
        let size = 1usize << CHUNK_BITS;
        let mut total = 0;
        for c in 0..self.chunks {
            let part = (set >> (c * CHUNK_BITS)) & (size - 1);
            total += self.table[(x * self.chunks + c) * size + part];
        }
        debug_assert!(x < self.n);
        total
    }
}

/// Dynamic program over subsets on the precedence matrix.
///
/// `rest(S)` is the cheapest cost of ordering the items outside the placed
/// set `S` after it: `rest(full) = 0` and
/// `rest(S) = min_{x not in S} [ sum_{y not in S, y != x} w[y][x] + rest(S + x) ]`.
/// The optimal order is read forward from `S = {}` taking the lowest-index
/// minimizer at each step, which yields the lexicographically smallest optimum.
pub fn solve_subset_dp(profile: &Profile) -> Result<ExactResult> {
    let w = PrecedenceMatrix::from_profile(profile);
    solve_subset_dp_matrix(&w)
}

/// [`solve_subset_dp`] on a precomputed precedence matrix.
pub fn solve_subset_dp_matrix(w: &PrecedenceMatrix) -> Result<ExactResult> {
    let n = w.n();
    if n > SUBSET_DP_MAX_N {
        return Err(Error::Capacity {
            solver: "subset DP",
            n,
            max: SUBSET_DP_MAX_N,
        });
    }
    if n == 0 {
        return Err(Error::InvalidProfile("empty instance".into()));
    }
    let start = Instant::now();
    let sums = ColumnSums::new(w);
    let full = (1usize << n) - 1;
    let mut rest = vec![u64::MAX; full + 1];
    let mut choice = vec![0u8; full + 1];
    rest[full] = 0;
    let mut nodes = 0u64;
    // rest(S) depends only on supersets of S, which are numerically larger.
    for placed in (0..full).rev() {
        let remaining = full & !placed;
        let mut best = u64::MAX;
        let mut best_x = 0u8;
        let mut bits = remaining;
        while bits != 0 {
            let x = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            nodes += 1;
            let step = sums.sum(x, remaining & !(1 << x));
            let total = step + rest[placed | (1 << x)];
            if total < best {
                best = total;
                best_x = x as u8;
            }
        }
        rest[placed] = best;
        choice[placed] = best_x;
    }
    let mut order = Vec::with_capacity(n);
    let mut placed = 0usize;
    while placed != full {
        let x = choice[placed] as usize;
        order.push(x);
        placed |= 1 << x;
    }
    let numerator = rest[0];
    Ok(ExactResult {
        ranking: Ranking::new(order)?,
        cost_numerator: numerator,
        cost: Ratio::new(numerator, w.voters()),
        nodes_explored: nodes,
        elapsed: start.elapsed(),
    })
}

/// `sum_{i<j} min(w[i][j], w[j][i])`, a floor on the disagreements of any ranking.
pub fn lower_bound(w: &PrecedenceMatrix) -> u64 {
    let n = w.n();
    let mut total = 0;
    for i in 0..n {
        for j in i + 1..n {
            total += w.get(i, j).min(w.get(j, i));
        }
    }
    total
}
