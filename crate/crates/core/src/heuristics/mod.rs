//! Approximate aggregation baselines.

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::ranking::{KemenyCost, Profile, Ranking};

mod decor;
mod greedy;
mod kiwisort;
mod markov;

pub use decor::{decor, decor_with_history, DecorConfig, DecorRun};
pub use greedy::{agreement_scores, greedy_max_agreement, greedy_min_regret, regret_scores};
pub use kiwisort::kiwisort;
pub use markov::{markov_chain, markov_chain_default, mc4_transition_matrix, Mc4Config, Mc4Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicResult {
    pub ranking: Ranking,
    pub cost: KemenyCost,
    pub elapsed: Duration,
    pub method: Method,
}

/// Every aggregation method the toolkit can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    Kiwisort,
    Mc4,
    MaxAgreement,
    MinRegret,
    Decor,
    Transformer,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Exact,
        Method::Kiwisort,
        Method::Mc4,
        Method::MaxAgreement,
        Method::MinRegret,
        Method::Decor,
        Method::Transformer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Kiwisort => "kiwisort",
            Method::Mc4 => "mc4",
            Method::MaxAgreement => "max-agreement",
            Method::MinRegret => "min-regret",
            Method::Decor => "decor",
            Method::Transformer => "transformer",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown method `{s}` (expected one of exact, kiwisort, mc4, max-agreement, min-regret, decor, transformer)"
                ))
            })
    }
}

pub(crate) fn finish(
    profile: &Profile,
    order: Vec<usize>,
    elapsed: Duration,
    method: Method,
) -> HeuristicResult {
    let ranking = Ranking::new(order).expect("heuristics emit permutations");
    let cost = crate::ranking::kemeny_distance(&ranking, profile).expect("dimensions agree");
    HeuristicResult {
        ranking,
        cost,
        elapsed,
        method,
    }
}
