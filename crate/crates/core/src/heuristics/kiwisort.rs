use std::time::Instant;

use rand::Rng;

use super::{finish, HeuristicResult, Method};
use crate::ranking::{PrecedenceMatrix, Profile};
use crate::rng::{rng_from_seed, DetRng};

/// Randomized pivot partitioning on pairwise majorities.
///
/// Items a strict majority ranks above the pivot go left; the rest, including
/// pairwise ties, go right.
pub fn kiwisort(profile: &Profile, seed: u64) -> HeuristicResult {
    let start = Instant::now();
    let w = PrecedenceMatrix::from_profile(profile);
    let mut rng = rng_from_seed(seed);
    let mut order = Vec::with_capacity(profile.n());
    partition(&w, (0..profile.n()).collect(), &mut rng, &mut order);
    finish(profile, order, start.elapsed(), Method::Kiwisort)
}

fn partition(w: &PrecedenceMatrix, items: Vec<usize>, rng: &mut DetRng, out: &mut Vec<usize>) {
    match items.len() {
        0 => {}
        1 => out.push(items[0]),
        len => {
            let pivot = items[rng.random_range(0..len)];
            let (left, right): (Vec<usize>, Vec<usize>) = items
                .into_iter()
                .filter(|&y| y != pivot)
                .partition(|&y| w.majority_prefers(y, pivot));
            partition(w, left, rng, out);
            out.push(pivot);
            partition(w, right, rng, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_random, GeneratorKind, GeneratorSpec};
    use crate::ranking::validate_ranking;

    #[test]
    fn unanimous_any_seed() {
        let p = Profile::from_orders(vec![vec![3, 1, 4, 0, 2]; 3]).unwrap();
        for seed in 0..20 {
            let res = kiwisort(&p, seed);
            assert_eq!(res.ranking.order(), [3, 1, 4, 0, 2]);
            assert_eq!(res.cost, 0.into());
        }
    }

    #[test]
    fn single_item() {
        let p = Profile::from_orders([vec![0]]).unwrap();
        assert_eq!(kiwisort(&p, 1).ranking.order(), [0]);
    }

    #[test]
    fn deterministic_and_valid() {
        let p = gen_random(&GeneratorSpec::new(GeneratorKind::Random, 30, 7, 4)).unwrap();
        let a = kiwisort(&p, 9);
        assert_eq!(a.ranking, kiwisort(&p, 9).ranking);
        assert!(validate_ranking(a.ranking.order(), 30));
    }
}
