//! Permutations, profiles and the pairwise-disagreement kernels everything
//! else is built on.
//!
//! Items are dense `0..n` indices. A [`Ranking`] lists them from most to
//! least preferred; a [`Profile`] is the multiset of base rankings being
//! aggregated. Kemeny costs are exact rationals (`total disagreements / m`).

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact Kemeny distance: total Kendall-tau disagreements over the voter count.
pub type KemenyCost = Ratio<u64>;

/// True iff `order` is a permutation of `0..n`.
pub fn validate_ranking(order: &[usize], n: usize) -> bool {
    if order.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &item in order {
        if item >= n || seen[item] {
            return false;
        }
        seen[item] = true;
    }
    true
}

/// A strict total order over `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Ranking {
    order: Vec<usize>,
    position: Vec<usize>,
}

impl Ranking {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let n = order.len();
        if !validate_ranking(&order, n) {
            return Err(Error::InvalidRanking(format!(
                "{order:?} is not a permutation of 0..{n}"
            )));
        }
        let mut position = vec![0; n];
        for (k, &item) in order.iter().enumerate() {
            position[item] = k;
        }
        Ok(Self { order, position })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
            position: (0..n).collect(),
        }
    }

    /// Builds a ranking from per-item positions (`positions[item] = k`).
    pub fn from_positions(positions: Vec<usize>) -> Result<Self> {
        let n = positions.len();
        if !validate_ranking(&positions, n) {
            return Err(Error::InvalidRanking(format!(
                "positions {positions:?} are not a permutation of 0..{n}"
            )));
        }
        let mut order = vec![0; n];
        for (item, &k) in positions.iter().enumerate() {
            order[k] = item;
        }
        Ok(Self {
            order,
            position: positions,
        })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Items from most to least preferred.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// 0-based position of `item`.
    pub fn position(&self, item: usize) -> usize {
        self.position[item]
    }

    pub fn positions(&self) -> &[usize] {
        &self.position
    }

    pub fn reversed(&self) -> Self {
        let mut order = self.order.clone();
        order.reverse();
        Self::new(order).expect("reversal of a permutation is a permutation")
    }

    /// True iff `a` is ranked above `b`.
    pub fn prefers(&self, a: usize, b: usize) -> bool {
        self.position[a] < self.position[b]
    }
}

impl TryFrom<Vec<usize>> for Ranking {
    type Error = Error;

    fn try_from(order: Vec<usize>) -> Result<Self> {
        Self::new(order)
    }
}

impl From<Ranking> for Vec<usize> {
    fn from(r: Ranking) -> Self {
        r.order
    }
}

/// `m >= 1` base rankings over a shared set of `n >= 1` items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Profile {
    n: usize,
    rankings: Vec<Ranking>,
    labels: Option<Vec<String>>,
}

impl Profile {
    pub fn new(rankings: Vec<Ranking>) -> Result<Self> {
        let first = rankings
            .first()
            .ok_or_else(|| Error::InvalidProfile("a profile needs at least one ranking".into()))?;
        let n = first.len();
        if n == 0 {
            return Err(Error::InvalidProfile("a profile needs at least one item".into()));
        }
        if let Some(bad) = rankings.iter().find(|r| r.len() != n) {
            return Err(Error::LengthMismatch {
                expected: n,
                found: bad.len(),
            });
        }
        Ok(Self {
            n,
            rankings,
            labels: None,
        })
    }

    /// Convenience constructor from raw orders.
    pub fn from_orders<I>(orders: I) -> Result<Self>
    where
        I: IntoIterator<Item = Vec<usize>>,
    {
        let rankings = orders
            .into_iter()
            .map(Ranking::new)
            .collect::<Result<Vec<_>>>()?;
        Self::new(rankings)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                found: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.rankings.len()
    }

    pub fn rankings(&self) -> &[Ranking] {
        &self.rankings
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }
}

/// `w[i][j]` = number of base rankings placing `i` before `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrecedenceMatrix {
    n: usize,
    m: u64,
    w: Vec<u64>,
}

impl PrecedenceMatrix {
    pub fn from_profile(profile: &Profile) -> Self {
        let n = profile.n();
        let mut w = vec![0u64; n * n];
        for ranking in profile.rankings() {
            let order = ranking.order();
            for (k, &a) in order.iter().enumerate() {
                let row = &mut w[a * n..(a + 1) * n];
                for &b in &order[k + 1..] {
                    row[b] += 1;
                }
            }
        }
        Self {
            n,
            m: profile.m() as u64,
            w,
        }
    }

    /// Builds a matrix from raw counts, checking `w[i][j] + w[j][i] = m` and a zero diagonal.
    pub fn from_counts(n: usize, m: u64, w: Vec<u64>) -> Result<Self> {
        if w.len() != n * n {
            return Err(Error::LengthMismatch {
                expected: n * n,
                found: w.len(),
            });
        }
        for i in 0..n {
            if w[i * n + i] != 0 {
                return Err(Error::InvalidProfile(format!("w[{i}][{i}] must be 0")));
            }
            for j in i + 1..n {
                if w[i * n + j] + w[j * n + i] != m {
                    return Err(Error::InvalidProfile(format!(
                        "w[{i}][{j}] + w[{j}][{i}] must equal m = {m}"
                    )));
                }
            }
        }
        Ok(Self { n, m, w })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of voters the counts were taken over.
    pub fn voters(&self) -> u64 {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.w[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.w[i * self.n..(i + 1) * self.n]
    }

    /// True iff a strict majority places `a` before `b`.
    #[inline]
    pub fn majority_prefers(&self, a: usize, b: usize) -> bool {
        self.get(a, b) > self.get(b, a)
    }

    /// Total disagreements `sum over i before j in order of w[j][i]`.
    pub fn disagreements(&self, order: &[usize]) -> u64 {
        let mut total = 0;
        for (k, &a) in order.iter().enumerate() {
            for &b in &order[k + 1..] {
                total += self.get(b, a);
            }
        }
        total
    }
}

/// Builds the precedence matrix of a profile.
pub fn precedence_matrix(profile: &Profile) -> PrecedenceMatrix {
    PrecedenceMatrix::from_profile(profile)
}

/// Kendall-tau distance: number of item pairs ordered oppositely by `rho` and `sigma`.
///
/// Relabels `sigma` into `rho`'s positions and counts inversions with a
/// bottom-up merge sort, O(n log n).
pub fn kendall_tau(rho: &Ranking, sigma: &Ranking) -> Result<u64> {
    if rho.len() != sigma.len() {
        return Err(Error::LengthMismatch {
            expected: rho.len(),
            found: sigma.len(),
        });
    }
    let mut seq: Vec<usize> = sigma.order().iter().map(|&x| rho.position(x)).collect();
    Ok(count_inversions(&mut seq))
}

/// Counts pairs `i < j` with `seq[i] > seq[j]`, sorting `seq` in the process.
pub(crate) fn count_inversions(seq: &mut [usize]) -> u64 {
    let n = seq.len();
    let mut buf = vec![0usize; n];
    let mut inversions = 0u64;
    let mut width = 1;
    while width < n {
        let mut lo = 0;
        while lo < n {
            let mid = (lo + width).min(n);
            let hi = (lo + 2 * width).min(n);
            if mid < hi {
                let (mut i, mut j, mut k) = (lo, mid, lo);
                while i < mid && j < hi {
                    if seq[i] <= seq[j] {
                        buf[k] = seq[i];
                        i += 1;
                    } else {
                        buf[k] = seq[j];
                        inversions += (mid - i) as u64;
                        j += 1;
                    }
                    k += 1;
                }
                buf[k..k + mid - i].copy_from_slice(&seq[i..mid]);
                k += mid - i;
                buf[k..k + hi - j].copy_from_slice(&seq[j..hi]);
                seq[lo..hi].copy_from_slice(&buf[lo..hi]);
            }
            lo += 2 * width;
        }
        width *= 2;
    }
    inversions
}

/// Sum of Kendall-tau distances from `rho` to every base ranking.
pub fn total_disagreements(rho: &Ranking, profile: &Profile) -> Result<u64> {
    if rho.len() != profile.n() {
        return Err(Error::LengthMismatch {
            expected: profile.n(),
            found: rho.len(),
        });
    }
    profile
        .rankings()
        .iter()
        .map(|sigma| kendall_tau(rho, sigma))
        .sum()
}

/// Mean Kendall-tau distance from `rho` to the profile, as an exact rational.
pub fn kemeny_distance(rho: &Ranking, profile: &Profile) -> Result<KemenyCost> {
    let total = total_disagreements(rho, profile)?;
    Ok(Ratio::new(total, profile.m() as u64))
}

/// Kemeny distance computed from pairwise counts; equals [`kemeny_distance`]
/// for the profile that produced `w`.
pub fn kemeny_cost_via_precedence(
    rho: &Ranking,
    w: &PrecedenceMatrix,
    m: u64,
) -> Result<KemenyCost> {
    if rho.len() != w.n() {
        return Err(Error::LengthMismatch {
            expected: w.n(),
            found: rho.len(),
        });
    }
    if m == 0 {
        return Err(Error::InvalidProfile("voter count must be positive".into()));
    }
    Ok(Ratio::new(w.disagreements(rho.order()), m))
}

/// Mean pairwise Kendall-tau distance between distinct voters of a profile.
pub fn mean_inter_voter_distance(profile: &Profile) -> f64 {
    let r = profile.rankings();
    let mut total = 0u64;
    let mut pairs = 0u64;
    for a in 0..r.len() {
        for b in a + 1..r.len() {
            total += kendall_tau(&r[a], &r[b]).expect("profile rankings share n");
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        total as f64 / pairs as f64
    }
}

/// Converts an exact cost to `f64`.
pub fn cost_to_f64(cost: &KemenyCost) -> f64 {
    *cost.numer() as f64 / *cost.denom() as f64
}
