use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{finish, HeuristicResult, Method};
use crate::error::{Error, Result};
use crate::ranking::{PrecedenceMatrix, Profile};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecorConfig {
    pub population_size: usize,
    /// Generations without improvement of the best cost before stopping.
    pub stall_limit: usize,
    pub crossover_rate: f64,
    pub differential_weight: f64,
    pub max_generations: usize,
    pub seed: u64,
}

impl Default for DecorConfig {
    fn default() -> Self {
        Self {
            population_size: 15,
            stall_limit: 100,
            crossover_rate: 0.9,
            differential_weight: 0.8,
            max_generations: 5000,
            seed: crate::rng::DEFAULT_SEED,
        }
    }
}

impl DecorConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 {
            return Err(Error::InvalidConfig(format!(
                "population_size must be at least 4 for differential mutation, got {}",
                self.population_size
            )));
        }
        if self.stall_limit == 0 || self.max_generations == 0 {
            return Err(Error::InvalidConfig(
                "stall_limit and max_generations must be positive".into(),
            ));
        }
        if !(self.crossover_rate > 0.0 && self.crossover_rate < 1.0) {
            return Err(Error::InvalidConfig("crossover_rate must lie in (0, 1)".into()));
        }
        if !(self.differential_weight > 0.0 && self.differential_weight < 2.0) {
            return Err(Error::InvalidConfig("differential_weight must lie in (0, 2)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecorRun {
    pub result: HeuristicResult,
    /// Best-ever total disagreements after initialization and after each generation.
    pub best_history: Vec<u64>,
    pub generations: usize,
}

/// Scores to order: ascending score first, ties by item index.
fn decode(scores: &[f64], order: &mut Vec<usize>) {
    order.clear();
    order.extend(0..scores.len());
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
}

/// Differential evolution over real score vectors decoded by argsort.
pub fn decor(profile: &Profile, config: &DecorConfig) -> Result<HeuristicResult> {
    decor_with_history(profile, config).map(|run| run.result)
}

pub fn decor_with_history(profile: &Profile, config: &DecorConfig) -> Result<DecorRun> {
    config.validate()?;
    let start = Instant::now();
    let n = profile.n();
    let w = PrecedenceMatrix::from_profile(profile);
    let mut rng = rng_from_seed(config.seed);
    let pop_size = config.population_size;

    // Seed with the cheapest base rankings (jitter below 0.5 keeps their
    // decoded order), then fill with uniform random score vectors.
    let mut bases: Vec<(u64, &[usize])> = profile
        .rankings()
        .iter()
        .map(|r| (w.disagreements(r.order()), r.positions()))
        .collect();
    bases.sort_by_key(|&(cost, _)| cost);
    let mut population: Vec<Vec<f64>> = bases
        .iter()
        .take(pop_size)
        .map(|(_, pos)| {
            pos.iter()
                .map(|&p| p as f64 + rng.random_range(-0.25..0.25))
                .collect()
        })
        .collect();
    while population.len() < pop_size {
        population.push((0..n).map(|_| rng.random_range(0.0..n as f64)).collect());
    }

    let mut order = Vec::with_capacity(n);
    let mut costs: Vec<u64> = population
        .iter()
        .map(|s| {
            decode(s, &mut order);
            w.disagreements(&order)
        })
        .collect();
    let mut best_idx = (0..pop_size).min_by_key(|&i| (costs[i], i)).unwrap();
    let mut best_cost = costs[best_idx];
    decode(&population[best_idx], &mut order);
    let mut best_order = order.clone();
    let mut history = vec![best_cost];

    let mut trial = vec![0.0; n];
    let mut stall = 0;
    let mut generations = 0;
    while stall < config.stall_limit && generations < config.max_generations && n > 1 {
        generations += 1;
        for i in 0..pop_size {
            let (a, b, c) = distinct_others(&mut rng, pop_size, i);
            let forced = rng.random_range(0..n);
            for k in 0..n {
                trial[k] = if k == forced || rng.random::<f64>() < config.crossover_rate {
                    population[a][k]
                        + config.differential_weight * (population[b][k] - population[c][k])
                } else {
                    population[i][k]
                };
            }
            decode(&trial, &mut order);
            let cost = w.disagreements(&order);
            if cost < costs[i] {
                costs[i] = cost;
                population[i].copy_from_slice(&trial);
            }
        }
        best_idx = (0..pop_size).min_by_key(|&i| (costs[i], i)).unwrap();
        if costs[best_idx] < best_cost {
            best_cost = costs[best_idx];
            decode(&population[best_idx], &mut best_order);
            stall = 0;
        } else {
            stall += 1;
        }
        history.push(best_cost);
    }
    Ok(DecorRun {
        result: finish(profile, best_order, start.elapsed(), Method::Decor),
        best_history: history,
        generations,
    })
}

fn distinct_others<R: Rng>(rng: &mut R, size: usize, exclude: usize) -> (usize, usize, usize) {
    let mut pick = |taken: &[usize]| loop {
        let c = rng.random_range(0..size);
        if c != exclude && !taken.contains(&c) {
            return c;
        }
    };
    let a = pick(&[]);
    let b = pick(&[a]);
    let c = pick(&[a, b]);
    (a, b, c)
}
