//! Seeded synthetic profiles (random, repeat, jiggling) and conversion of
//! metric tables into ranking profiles.

use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ranking::{Profile, Ranking};
use crate::rng::{rng_from_seed, DetRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Random,
    Repeat,
    Jiggling,
}

impl GeneratorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Repeat => "repeat",
            Self::Jiggling => "jiggling",
        }
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "repeat" => Ok(Self::Repeat),
            "jiggling" => Ok(Self::Jiggling),
            other => Err(Error::InvalidSpec(format!(
                "unknown generator kind `{other}` (expected random, repeat or jiggling)"
            ))),
        }
    }
}

fn default_scale() -> f64 {
    1.0
}

fn default_passes() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    /// Number of exact copies of the reference (repeat kind); drawn from `1..=m` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeat_count: Option<usize>,
    /// Constant offset `M` in the jiggling swap weights.
    #[serde(default = "default_scale")]
    pub scale_m: f64,
    #[serde(default = "default_passes")]
    pub swap_passes: usize,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, n: usize, m: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            m,
            seed,
            repeat_count: None,
            scale_m: default_scale(),
            swap_passes: default_passes(),
        }
    }

    pub fn with_repeat_count(mut self, count: usize) -> Self {
        self.repeat_count = Some(count);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidSpec(format!("n must be at least 2, got {}", self.n)));
        }
        if self.m < 1 {
            return Err(Error::InvalidSpec("m must be at least 1".into()));
        }
        if let Some(k) = self.repeat_count {
            if k < 1 || k > self.m {
                return Err(Error::InvalidSpec(format!(
                    "repeat_count must lie in [1, m = {}], got {k}",
                    self.m
                )));
            }
        }
        if self.swap_passes < 1 {
            return Err(Error::InvalidSpec("swap_passes must be positive".into()));
        }
        if !self.scale_m.is_finite() {
            return Err(Error::InvalidSpec("scale_m must be finite".into()));
        }
        Ok(())
    }

    fn expect_kind(&self, kind: GeneratorKind) -> Result<()> {
        self.validate()?;
        if self.kind != kind {
            return Err(Error::InvalidSpec(format!(
                "expected a {} spec, got {}",
                kind.as_str(),
                self.kind.as_str()
            )));
        }
        Ok(())
    }
}

/// Generates a profile of the configured kind.
pub fn generate(spec: &GeneratorSpec) -> Result<Profile> {
    match spec.kind {
        GeneratorKind::Random => gen_random(spec),
        GeneratorKind::Repeat => gen_repeat(spec),
        GeneratorKind::Jiggling => gen_jiggling(spec),
    }
}

fn uniform_permutation(n: usize, rng: &mut DetRng) -> Ranking {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    Ranking::new(order).expect("shuffled identity is a permutation")
}

/// `m` independent uniform permutations.
pub fn gen_random(spec: &GeneratorSpec) -> Result<Profile> {
    spec.expect_kind(GeneratorKind::Random)?;
    let mut rng = rng_from_seed(spec.seed);
    Profile::new((0..spec.m).map(|_| uniform_permutation(spec.n, &mut rng)).collect())
}

/// The first `repeat_count` rankings copy a uniform reference; the rest are uniform.
pub fn gen_repeat(spec: &GeneratorSpec) -> Result<Profile> {
    Ok(gen_repeat_with_reference(spec)?.0)
}

/// Like [`gen_repeat`], also returning the reference ranking.
pub fn gen_repeat_with_reference(spec: &GeneratorSpec) -> Result<(Profile, Ranking)> {
    spec.expect_kind(GeneratorKind::Repeat)?;
    let mut rng = rng_from_seed(spec.seed);
    let reference = uniform_permutation(spec.n, &mut rng);
    let copies = match spec.repeat_count {
        Some(k) => k,
        None => rng.random_range(1..=spec.m),
    };
    let mut rankings = vec![reference.clone(); copies];
    rankings.extend((copies..spec.m).map(|_| uniform_permutation(spec.n, &mut rng)));
    Ok((Profile::new(rankings)?, reference))
}

/// Normalized swap-target distribution for an item at position `current`.
///
/// `P(j) = exp(M - |j - current|) / sum_{k != current} exp(M - |k - current|)`,
/// with `P(current) = 0`. Exponents are shifted by their maximum `M - 1`
/// before exponentiating, which leaves the ratios unchanged.
pub fn jiggle_weights(n: usize, current: usize, scale_m: f64) -> Vec<f64> {
    let shift = scale_m - 1.0;
    let mut weights: Vec<f64> = (0..n)
        .map(|k| {
            if k == current {
                0.0
            } else {
                let exponent = scale_m - current.abs_diff(k) as f64;
                (exponent - shift).exp()
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    weights
}

fn sample_index(weights: &[f64], rng: &mut DetRng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = k;
            if u < acc {
                return k;
            }
        }
    }
    last
}

/// Perturbs a copy of `reference` by distance-penalized swaps.
///
/// Each pass visits every item once in random order; the visited item's
/// position is read from the ranking as it stands at that moment.
pub fn jiggle(reference: &Ranking, scale_m: f64, passes: usize, rng: &mut DetRng) -> Ranking {
    let n = reference.len();
    let mut order = reference.order().to_vec();
    let mut position = reference.positions().to_vec();
    let mut visit: Vec<usize> = (0..n).collect();
    for _ in 0..passes {
        visit.shuffle(rng);
        for &item in &visit {
            let p_i = position[item];
            let p_j = sample_index(&jiggle_weights(n, p_i, scale_m), rng);
            let other = order[p_j];
            order.swap(p_i, p_j);
            position[item] = p_j;
            position[other] = p_i;
        }
    }
    Ranking::new(order).expect("swaps preserve permutations")
}

pub fn gen_jiggling(spec: &GeneratorSpec) -> Result<Profile> {
    Ok(gen_jiggling_with_reference(spec)?.0)
}

/// Like [`gen_jiggling`], also returning the reference ranking.
pub fn gen_jiggling_with_reference(spec: &GeneratorSpec) -> Result<(Profile, Ranking)> {
    spec.expect_kind(GeneratorKind::Jiggling)?;
    let mut rng = rng_from_seed(spec.seed);
    let reference = uniform_permutation(spec.n, &mut rng);
    let rankings = (0..spec.m)
        .map(|_| jiggle(&reference, spec.scale_m, spec.swap_passes, &mut rng))
        .collect();
    Ok((Profile::new(rankings)?, reference))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Smallest value ranked first.
    Ascending,
    /// Largest value ranked first.
    Descending,
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "asc" | "ascending" => Ok(Self::Ascending),
            "desc" | "descending" => Ok(Self::Descending),
            other => Err(Error::InvalidSpec(format!(
                "unknown direction `{other}` (expected asc or desc)"
            ))),
        }
    }
}

/// Items as rows, metrics as columns, cells as raw text.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    pub item_labels: Vec<String>,
    pub column_names: Vec<String>,
    pub cells: Vec<Vec<String>>,
}

/// One ranking per metric column, sorted in the given direction with ties
/// broken by ascending row index.
///
/// Errors report 1-based data rows and 1-based metric columns.
pub fn rankings_from_metric_table(table: &MetricTable, directions: &[Direction]) -> Result<Profile> {
    let n = table.cells.len();
    let m = table.column_names.len();
    if directions.len() != m {
        return Err(Error::LengthMismatch {
            expected: m,
            found: directions.len(),
        });
    }
    if n == 0 || m == 0 {
        return Err(Error::InvalidProfile(
            "metric table needs at least one row and one metric column".into(),
        ));
    }
    let mut values = vec![vec![0.0f64; n]; m];
    for (row, cells) in table.cells.iter().enumerate() {
        if cells.len() != m {
            return Err(Error::Ingestion {
                row: row + 1,
                column: cells.len().min(m) + 1,
                message: format!("expected {m} metric cells, found {}", cells.len()),
            });
        }
        for (col, cell) in cells.iter().enumerate() {
            let text = cell.trim();
            if text.is_empty() || text.eq_ignore_ascii_case("na") || text.eq_ignore_ascii_case("nan")
            {
                return Err(Error::Ingestion {
                    row: row + 1,
                    column: col + 1,
                    message: format!("missing value for `{}`", table.column_names[col]),
                });
            }
            let v: f64 = text.parse().map_err(|_| Error::Ingestion {
                row: row + 1,
                column: col + 1,
                message: format!("non-numeric cell `{text}` in `{}`", table.column_names[col]),
            })?;
            if !v.is_finite() {
                return Err(Error::Ingestion {
                    row: row + 1,
                    column: col + 1,
                    message: format!("non-finite value `{text}`"),
                });
            }
            values[col][row] = v;
        }
    }
    let rankings = values
        .iter()
        .zip(directions)
        .map(|(column, &dir)| {
            let mut order: Vec<usize> = (0..n).collect();
            // sort_by is stable, so equal values keep ascending row order.
            order.sort_by(|&a, &b| match dir {
                Direction::Ascending => column[a].total_cmp(&column[b]),
                Direction::Descending => column[b].total_cmp(&column[a]),
            });
            Ranking::new(order)
        })
        .collect::<Result<Vec<_>>>()?;
    Profile::new(rankings)?.with_labels(table.item_labels.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranking::{kemeny_distance, kendall_tau, validate_ranking};

    fn spec(kind: GeneratorKind, n: usize, m: usize, seed: u64) -> GeneratorSpec {
        GeneratorSpec::new(kind, n, m, seed)
    }

    #[test]
    fn random_is_deterministic() {
        let s = spec(GeneratorKind::Random, 3, 2, 99);
        assert_eq!(gen_random(&s).unwrap(), gen_random(&s).unwrap());
        assert_ne!(
            gen_random(&s).unwrap(),
            gen_random(&s.clone().with_seed(100)).unwrap()
        );
    }

    #[test]
    fn random_two_items_is_fair() {
        let mut forward = 0;
        for seed in 0..10_000 {
            let p = gen_random(&spec(GeneratorKind::Random, 2, 1, seed)).unwrap();
            if p.rankings()[0].order() == [0, 1] {
                forward += 1;
            }
        }
        let freq = forward as f64 / 10_000.0;
        assert!((freq - 0.5).abs() < 0.05, "frequency {freq}");
    }

    #[test]
    fn repeat_all_copies_has_zero_cost() {
        let s = spec(GeneratorKind::Repeat, 10, 8, 5).with_repeat_count(8);
        let (p, reference) = gen_repeat_with_reference(&s).unwrap();
        assert_eq!(kemeny_distance(&reference, &p).unwrap(), 0.into());
    }

    #[test]
    fn repeat_counts_copies() {
        for seed in 0..20 {
            let s = spec(GeneratorKind::Repeat, 10, 8, seed).with_repeat_count(3);
            let (p, reference) = gen_repeat_with_reference(&s).unwrap();
            let copies = p
                .rankings()
                .iter()
                .filter(|r| kendall_tau(r, &reference).unwrap() == 0)
                .count();
            assert!(copies >= 3);
            assert!(p.rankings()[..3].iter().all(|r| *r == reference));
        }
        let single = spec(GeneratorKind::Repeat, 5, 1, 3).with_repeat_count(1);
        assert_eq!(gen_repeat(&single).unwrap().m(), 1);
    }

    #[test]
    fn repeat_count_above_m_rejected() {
        let s = spec(GeneratorKind::Repeat, 5, 3, 0).with_repeat_count(4);
        assert!(matches!(gen_repeat(&s), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(gen_random(&spec(GeneratorKind::Random, 1, 3, 0)).is_err());
        assert!(gen_random(&spec(GeneratorKind::Random, 3, 0, 0)).is_err());
        assert!(gen_random(&spec(GeneratorKind::Jiggling, 3, 2, 0)).is_err());
    }

    #[test]
    fn jiggle_weight_ratios() {
        let w = jiggle_weights(10, 5, 1.0);
        assert_eq!(w[5], 0.0);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((w[4] / w[3] - std::f64::consts::E).abs() < 1e-12);
        assert!((w[6] / w[7] - std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn jiggle_weights_independent_of_scale() {
        for n in [2, 7, 100] {
            for p in [0, n / 2, n - 1] {
                let a = jiggle_weights(n, p, 1.0);
                let b = jiggle_weights(n, p, 10.0);
                let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                assert!(diff <= 1e-12);
            }
        }
    }

    #[test]
    fn jiggling_is_seed_deterministic_across_scale() {
        let base = spec(GeneratorKind::Jiggling, 30, 4, 11);
        let mut other = base.clone();
        other.scale_m = 10.0;
        assert_eq!(gen_jiggling(&base).unwrap(), gen_jiggling(&other).unwrap());
    }

    #[test]
    fn generated_rankings_validate() {
        for kind in [GeneratorKind::Random, GeneratorKind::Repeat, GeneratorKind::Jiggling] {
            let p = generate(&spec(kind, 17, 6, 1)).unwrap();
            assert!(p.rankings().iter().all(|r| validate_ranking(r.order(), 17)));
        }
    }

    fn table(col: &[&str]) -> MetricTable {
        MetricTable {
            item_labels: (0..col.len()).map(|i| format!("item{i}")).collect(),
            column_names: vec!["metric".into()],
            cells: col.iter().map(|c| vec![c.to_string()]).collect(),
        }
    }

    #[test]
    fn metric_table_sorting() {
        let t = table(&["3.0", "1.0", "2.0"]);
        let desc = rankings_from_metric_table(&t, &[Direction::Descending]).unwrap();
        assert_eq!(desc.rankings()[0].order(), [0, 2, 1]);
        let asc = rankings_from_metric_table(&t, &[Direction::Ascending]).unwrap();
        assert_eq!(asc.rankings()[0].order(), [1, 2, 0]);
        let ties = rankings_from_metric_table(&table(&["5", "5", "5", "5"]), &[Direction::Descending])
            .unwrap();
        assert_eq!(ties.rankings()[0].order(), [0, 1, 2, 3]);
        assert_eq!(desc.labels().unwrap()[2], "item2");
    }

    #[test]
    fn metric_table_errors_name_location() {
        let err = rankings_from_metric_table(&table(&["1", "x", "2"]), &[Direction::Ascending]);
        assert!(matches!(err, Err(Error::Ingestion { row: 2, column: 1, .. })));
        let err = rankings_from_metric_table(&table(&["1", "", "2"]), &[Direction::Ascending]);
        assert!(matches!(err, Err(Error::Ingestion { row: 2, column: 1, .. })));
        let err = rankings_from_metric_table(&table(&["1"]), &[]);
        assert!(matches!(err, Err(Error::LengthMismatch { .. })));
    }
}
