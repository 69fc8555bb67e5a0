//! Consensus rank aggregation under the Kemeny objective.
//!
//! - [`ranking`]: permutations, profiles, Kendall-tau and Kemeny kernels.
//! - [`generators`]: seeded random / repeat / jiggling profiles and metric-table ingestion.
//! - [`exact`]: brute-force and subset-DP optimal solvers.
//! - [`heuristics`]: KiwiSort, MC4, greedy max-agreement / min-regret and DECoR.

pub mod error;
pub mod exact;
pub mod generators;
pub mod heuristics;
pub mod ranking;
pub mod rng;

pub use error::{Error, Result};
pub use exact::{lower_bound, solve_brute_force, solve_subset_dp, ExactResult};
pub use generators::{generate, GeneratorKind, GeneratorSpec};
pub use heuristics::{HeuristicResult, Method};
pub use ranking::{
    kemeny_cost_via_precedence, kemeny_distance, kendall_tau, precedence_matrix, validate_ranking,
    KemenyCost, PrecedenceMatrix, Profile, Ranking,
};

/// MC4 result in double precision.
pub type Mc4Result64 = heuristics::Mc4Result<f64>;
/// MC4 result in single precision.
pub type Mc4Result32 = heuristics::Mc4Result<f32>;
