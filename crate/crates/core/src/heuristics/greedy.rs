use std::time::Instant;

use super::{finish, HeuristicResult, Method};
use crate::ranking::{PrecedenceMatrix, Profile};

/// `agreement(x) = sum_{y in unplaced, y != x} w[x][y]` for every `x` in `unplaced`.
pub fn agreement_scores(w: &PrecedenceMatrix, unplaced: &[usize]) -> Vec<u64> {
    unplaced
        .iter()
        .map(|&x| unplaced.iter().map(|&y| w.get(x, y)).sum())
        .collect()
}

/// `regret(x) = sum_{y in unplaced, y != x} w[y][x]` for every `x` in `unplaced`.
pub fn regret_scores(w: &PrecedenceMatrix, unplaced: &[usize]) -> Vec<u64> {
    unplaced
        .iter()
        .map(|&x| unplaced.iter().map(|&y| w.get(y, x)).sum())
        .collect()
}

/// Front-to-back construction picking, at each step, the unplaced item with
/// the best score; `better(a, b)` says score `a` strictly beats `b`.
/// Ties go to the lowest index.
fn greedy_front_to_back(
    w: &PrecedenceMatrix,
    score: fn(&PrecedenceMatrix, usize, usize) -> u64,
    better: fn(u64, u64) -> bool,
) -> Vec<usize> {
    let n = w.n();
    let mut placed = vec![false; n];
    // Running sums over unplaced y of score(x, y).
    let mut totals: Vec<u64> = (0..n).map(|x| (0..n).map(|y| score(w, x, y)).sum()).collect();
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best: Option<usize> = None;
        for x in (0..n).filter(|&x| !placed[x]) {
            if best.is_none_or(|b| better(totals[x], totals[b])) {
                best = Some(x);
            }
        }
        let pick = best.expect("an unplaced item remains");
        placed[pick] = true;
        order.push(pick);
        for x in 0..n {
            totals[x] -= score(w, x, pick);
        }
    }
    order
}

/// Greedily place the item agreeing most with the remaining items.
pub fn greedy_max_agreement(profile: &Profile) -> HeuristicResult {
    let start = Instant::now();
    let w = PrecedenceMatrix::from_profile(profile);
    let order = greedy_front_to_back(&w, |w, x, y| w.get(x, y), |a, b| a > b);
    finish(profile, order, start.elapsed(), Method::MaxAgreement)
}

/// Greedily place the item with the least regret toward the remaining items.
pub fn greedy_min_regret(profile: &Profile) -> HeuristicResult {
    let start = Instant::now();
    let w = PrecedenceMatrix::from_profile(profile);
    let order = greedy_front_to_back(&w, |w, x, y| w.get(y, x), |a, b| a < b);
    finish(profile, order, start.elapsed(), Method::MinRegret)
}
