//! One-sided paired Student t-test used to decide baseline replacement.

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    /// `P(T <= t)`: small when `a` is clearly below `b`.
    pub p: f64,
}

/// CDF of Student's t with `df` degrees of freedom via the incomplete beta
/// identity `P(T <= t) = 1 - I_x(df/2, 1/2) / 2` for `t > 0`, `x = df / (df + t^2)`.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 0.5;
    }
    let x = df / (df + t * t);
    let tail = 0.5 * beta_reg(df / 2.0, 0.5, x);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Tests whether `a` has lower mean than `b` on paired samples.
pub fn paired_t_test_one_sided(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::DegenerateTest(format!(
            "sample lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let k = a.len();
    if k < 2 {
        return Err(Error::DegenerateTest(format!("need at least 2 pairs, got {k}")));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let kf = k as f64;
    let mean = d.iter().sum::<f64>() / kf;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (kf - 1.0);
    if var == 0.0 {
        return Err(Error::DegenerateTest(if mean == 0.0 {
            "all differences are zero".into()
        } else {
            "differences have zero variance".into()
        }));
    }
    let t = mean / (var.sqrt() / kf.sqrt());
    let df = kf - 1.0;
    Ok(TTest {
        t,
        df,
        p: student_t_cdf(t, df),
    })
}

/// Outcome of comparing a candidate with the current baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineDecision {
    pub replace: bool,
    pub test: Option<TTest>,
}

/// Replace when the one-sided p-value is below `alpha`. When the test is
/// undefined (zero variance), replace only if the candidate is strictly
/// cheaper on every instance.
pub fn baseline_decision(candidate: &[f64], baseline: &[f64], alpha: f64) -> BaselineDecision {
    match paired_t_test_one_sided(candidate, baseline) {
        Ok(test) => BaselineDecision {
            replace: test.p < alpha,
            test: Some(test),
        },
        Err(_) => BaselineDecision {
            replace: !candidate.is_empty()
                && candidate.len() == baseline.len()
                && candidate.iter().zip(baseline).all(|(c, b)| c < b),
            test: None,
        },
    }
}
