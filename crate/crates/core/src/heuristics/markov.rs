use std::time::Instant;

use num_traits::Float;

use super::{finish, HeuristicResult, Method};
use crate::error::{Error, Result};
use crate::ranking::{PrecedenceMatrix, Profile};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mc4Config<S> {
    /// Weight of the uniform matrix mixed into the majority chain.
    pub teleport: S,
    /// Stop once the L1 change between iterates drops below this.
    pub tol: S,
    pub max_iters: usize,
}

impl<S: Float> Default for Mc4Config<S> {
    fn default() -> Self {
        Self {
            teleport: S::from(0.05).unwrap(),
            tol: S::from(1e-10).unwrap(),
            max_iters: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mc4Result<S> {
    pub result: HeuristicResult,
    pub stationary: Vec<S>,
    pub iterations: usize,
}

/// Row-stochastic MC4 matrix mixed with teleportation, row-major `n x n`.
///
/// From state `i` a uniformly random `j` is proposed and accepted iff a
/// strict majority ranks `j` above `i`.
pub fn mc4_transition_matrix<S: Float>(w: &PrecedenceMatrix, teleport: S) -> Vec<S> {
    let n = w.n();
    let nf = S::from(n).unwrap();
    let uniform = teleport / nf;
    let keep = S::one() - teleport;
    let mut p = vec![S::zero(); n * n];
    for i in 0..n {
        let mut stay = S::one();
        for j in 0..n {
            if j != i && w.majority_prefers(j, i) {
                let move_prob = S::one() / nf;
                p[i * n + j] = move_prob;
                stay = stay - move_prob;
            }
        }
        p[i * n + i] = stay;
        for j in 0..n {
            p[i * n + j] = keep * p[i * n + j] + uniform;
        }
    }
    p
}

/// MC4 aggregation: items ordered by descending stationary probability,
/// ties by ascending index.
pub fn markov_chain<S: Float>(profile: &Profile, config: &Mc4Config<S>) -> Result<Mc4Result<S>> {
    if !(config.teleport > S::zero() && config.teleport < S::one()) {
        return Err(Error::InvalidConfig("teleport must lie in (0, 1)".into()));
    }
    let start = Instant::now();
    let n = profile.n();
    let w = PrecedenceMatrix::from_profile(profile);
    let p = mc4_transition_matrix(&w, config.teleport);
    let mut pi = vec![S::one() / S::from(n).unwrap(); n];
    let mut next = vec![S::zero(); n];
    let mut change = S::infinity();
    let mut iterations = 0;
    while iterations < config.max_iters {
        iterations += 1;
        next.iter_mut().for_each(|v| *v = S::zero());
        for i in 0..n {
            let mass = pi[i];
            for (j, v) in next.iter_mut().enumerate() {
                *v = *v + mass * p[i * n + j];
            }
        }
        let total = next.iter().fold(S::zero(), |a, &b| a + b);
        change = S::zero();
        for (old, new) in pi.iter_mut().zip(next.iter()) {
            let v = *new / total;
            change = change + (v - *old).abs();
            *old = v;
        }
        if change < config.tol {
            break;
        }
    }
    if change >= config.tol {
        return Err(Error::Convergence {
            iterations,
            last_change: change.to_f64().unwrap_or(f64::NAN),
            last_iterate: pi.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pi[b].partial_cmp(&pi[a]).unwrap().then(a.cmp(&b)));
    Ok(Mc4Result {
        result: finish(profile, order, start.elapsed(), Method::Mc4),
        stationary: pi,
        iterations,
    })
}

/// MC4 in double precision with default settings.
pub fn markov_chain_default(profile: &Profile) -> Result<HeuristicResult> {
    markov_chain::<f64>(profile, &Mc4Config::default()).map(|r| r.result)
}
