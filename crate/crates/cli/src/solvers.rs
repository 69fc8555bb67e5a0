//! Uniform dispatch over every aggregation method.

use std::time::{Duration, Instant};

use kemeny_core::heuristics::{
    decor, greedy_max_agreement, greedy_min_regret, kiwisort, markov_chain_default, DecorConfig,
};
use kemeny_core::{solve_subset_dp, Method, Profile, Ranking};
use kemeny_nn::{KemenyTransformer, RolloutMode};

use crate::error::{CliError, CliResult};

/// Shared inputs for the seeded and learned methods.
#[derive(Debug, Clone)]
pub struct SolverContext {
    pub seed: u64,
    pub decor: DecorConfig,
    pub transformer: Option<KemenyTransformer<f32>>,
}

impl SolverContext {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            decor: DecorConfig::default().with_seed(seed),
            transformer: None,
        }
    }
}

/// Runs `method` and times only the solver call.
pub fn run_method(method: Method, profile: &Profile, ctx: &SolverContext) -> CliResult<(Ranking, Duration)> {
    let start = Instant::now();
    let ranking = match method {
        Method::Exact => solve_subset_dp(profile)?.ranking,
        Method::Kiwisort => kiwisort(profile, ctx.seed).ranking,
        Method::Mc4 => markov_chain_default(profile)?.ranking,
        Method::MaxAgreement => greedy_max_agreement(profile).ranking,
        Method::MinRegret => greedy_min_regret(profile).ranking,
        Method::Decor => decor(profile, &ctx.decor)?.ranking,
        Method::Transformer => {
            let model = ctx.transformer.as_ref().ok_or_else(|| {
                CliError::Usage("method transformer requires --checkpoint".into())
            })?;
            let max_m = model.config().max_m;
            if profile.m() > max_m {
                return Err(CliError::ConfigMismatch(format!(
                    "instance has {} voters but the checkpoint supports at most {max_m}",
                    profile.m()
                )));
            }
            let start = Instant::now();
            let r = model.rollout(profile, RolloutMode::Greedy, ctx.seed)?.ranking;
            return Ok((r, start.elapsed()));
        }
    };
    Ok((ranking, start.elapsed()))
}

pub fn parse_methods(list: &str) -> CliResult<Vec<Method>> {
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m: Method = name.parse().map_err(|e: kemeny_core::Error| CliError::Usage(e.to_string()))?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("no methods given".into()));
    }
    Ok(out)
}
