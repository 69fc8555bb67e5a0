//! Runs every method on every instance and emits Obj / Gap / Time tables.
//!
//! The main report and its summary hold only deterministic columns, so two
//! runs with the same inputs are byte-identical. Wall times go to a separate
//! timing file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use kemeny_core::exact::SUBSET_DP_MAX_N;
use kemeny_core::{lower_bound, precedence_matrix, solve_subset_dp, Method, Profile};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::solvers::{run_method, SolverContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(CliError::Usage(format!("unknown report format `{other}` (csv or json)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleChoice {
    /// Subset DP up to its capacity, the pairwise lower bound beyond it.
    Exact,
    None,
}

impl std::str::FromStr for OracleChoice {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "none" => Ok(Self::None),
            other => Err(CliError::Usage(format!("unknown oracle `{other}` (exact or none)"))),
        }
    }
}

/// One (instance, method) result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub instance: String,
    pub n: usize,
    pub m: usize,
    pub method: String,
    pub cost: Option<f64>,
    pub oracle_cost: Option<f64>,
    /// `cost - oracle_cost`.
    pub gap: Option<f64>,
    pub relative_gap: Option<f64>,
    /// False when the oracle is only a lower bound.
    pub gap_exact: Option<bool>,
    /// Space-separated item order.
    pub ranking: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub instances: usize,
    pub failures: usize,
    pub mean_obj: Option<f64>,
    pub mean_gap: Option<f64>,
    pub mean_relative_gap: Option<f64>,
    pub gap_exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub instance: String,
    pub n: usize,
    pub method: String,
    pub seconds: f64,
}

/// Mean and total time per method and size; `n` empty means all sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummaryRow {
    pub method: String,
    pub n: Option<usize>,
    pub instances: usize,
    pub mean_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub summary: Vec<SummaryRow>,
    #[serde(skip)]
    pub timing: Vec<TimingRow>,
    #[serde(skip)]
    pub timing_summary: Vec<TimingSummaryRow>,
}

impl BenchReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

struct Oracle {
    numerator: u64,
    exact: bool,
}

fn oracle_for(profile: &Profile, choice: OracleChoice) -> Option<Oracle> {
    match choice {
        OracleChoice::None => None,
        OracleChoice::Exact if profile.n() <= SUBSET_DP_MAX_N => {
            solve_subset_dp(profile).ok().map(|r| Oracle {
                numerator: r.cost_numerator,
                exact: true,
            })
        }
        OracleChoice::Exact => Some(Oracle {
            numerator: lower_bound(&precedence_matrix(profile)),
            exact: false,
        }),
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Runs the full grid. Instances should already be sorted by id.
pub fn run_bench(
    instances: &[(String, Profile)],
    methods: &[Method],
    oracle: OracleChoice,
    ctx: &SolverContext,
) -> BenchReport {
    let oracles: Vec<Option<Oracle>> = instances.par_iter().map(|(_, p)| oracle_for(p, oracle)).collect();
    let jobs: Vec<(usize, usize)> = (0..instances.len())
        .flat_map(|i| (0..methods.len()).map(move |k| (i, k)))
        .collect();
    let mut results: Vec<(usize, usize, BenchRow, Option<TimingRow>)> = jobs
        .par_iter()
        .map(|&(i, k)| {
            let (id, profile) = &instances[i];
            let method = methods[k];
            let (n, m) = (profile.n(), profile.m());
            let mut row = BenchRow {
                instance: id.clone(),
                n,
                m,
                method: method.as_str().to_string(),
                cost: None,
                oracle_cost: None,
                gap: None,
                relative_gap: None,
                gap_exact: None,
                ranking: None,
                error: None,
            };
            let mf = m as f64;
            if let Some(o) = &oracles[i] {
                row.oracle_cost = Some(o.numerator as f64 / mf);
            }
            let timing = match run_method(method, profile, ctx) {
                Ok((ranking, elapsed)) => {
                    let num = precedence_matrix(profile).disagreements(ranking.order());
                    row.cost = Some(num as f64 / mf);
                    if let Some(o) = &oracles[i] {
                        let diff = num as f64 - o.numerator as f64;
                        row.gap = Some(diff / mf);
                        row.relative_gap = match (o.numerator, num) {
                            (0, 0) => Some(0.0),
                            (0, _) => None,
                            (den, _) => Some(diff / den as f64),
                        };
                        row.gap_exact = Some(o.exact);
                    }
                    let order: Vec<String> = ranking.order().iter().map(usize::to_string).collect();
                    row.ranking = Some(order.join(" "));
                    Some(TimingRow {
                        instance: id.clone(),
                        n,
                        method: method.as_str().to_string(),
                        seconds: elapsed.as_secs_f64(),
                    })
                }
                Err(e) => {
                    row.error = Some(e.to_string());
                    None
                }
            };
            (i, k, row, timing)
        })
        .collect();
    results.sort_by_key(|(i, k, _, _)| (*i, *k));

    let mut summary = Vec::new();
    for (k, method) in methods.iter().enumerate() {
        let rows: Vec<&BenchRow> = results.iter().filter(|r| r.1 == k).map(|r| &r.2).collect();
        summary.push(SummaryRow {
            method: method.as_str().to_string(),
            instances: rows.len(),
            failures: rows.iter().filter(|r| r.error.is_some()).count(),
            mean_obj: mean(rows.iter().filter_map(|r| r.cost)),
            mean_gap: mean(rows.iter().filter_map(|r| r.gap)),
            mean_relative_gap: mean(rows.iter().filter_map(|r| r.relative_gap)),
            gap_exact: rows.iter().all(|r| r.gap_exact != Some(false)),
        });
    }

    let timing: Vec<TimingRow> = results.iter().filter_map(|r| r.3.clone()).collect();
    let mut timing_summary = Vec::new();
    for method in methods {
        let name = method.as_str();
        let mine: Vec<&TimingRow> = timing.iter().filter(|t| t.method == name).collect();
        let mut by_n: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for t in &mine {
            by_n.entry(t.n).or_default().push(t.seconds);
        }
        let push = |out: &mut Vec<TimingSummaryRow>, n: Option<usize>, secs: &[f64]| {
            let total: f64 = secs.iter().sum();
            out.push(TimingSummaryRow {
                method: name.to_string(),
                n,
                instances: secs.len(),
                mean_seconds: if secs.is_empty() { 0.0 } else { total / secs.len() as f64 },
                total_seconds: total,
            });
        };
        for (n, secs) in &by_n {
            push(&mut timing_summary, Some(*n), secs);
        }
        let all: Vec<f64> = mine.iter().map(|t| t.seconds).collect();
        push(&mut timing_summary, None, &all);
    }

    BenchReport {
        rows: results.into_iter().map(|r| r.2).collect(),
        summary,
        timing,
        timing_summary,
    }
}

/// `dir/stem.extra.ext` next to `path`.
pub fn sibling(path: &Path, extra: &str, format: ReportFormat) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    path.with_file_name(format!("{stem}.{extra}.{}", format.extension()))
}

fn csv_string<T: Serialize>(rows: &[T], header: &[&str]) -> CliResult<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).map_err(|e| CliError::Failed(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Failed(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Failed(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

const ROW_HEADER: [&str; 11] = [
    "instance",
    "n",
    "m",
    "method",
    "cost",
    "oracle_cost",
    "gap",
    "relative_gap",
    "gap_exact",
    "ranking",
    "error",
];
const SUMMARY_HEADER: [&str; 7] = [
    "method",
    "instances",
    "failures",
    "mean_obj",
    "mean_gap",
    "mean_relative_gap",
    "gap_exact",
];
const TIMING_HEADER: [&str; 4] = ["instance", "n", "method", "seconds"];
const TIMING_SUMMARY_HEADER: [&str; 5] = ["method", "n", "instances", "mean_seconds", "total_seconds"];

/// Writes the report, its summary and the timing files; returns every path written.
pub fn write_report(report: &BenchReport, path: &Path, format: ReportFormat) -> CliResult<Vec<PathBuf>> {
    let summary_path = sibling(path, "summary", format);
    let timing_path = sibling(path, "timing", format);
    let timing_summary_path = sibling(path, "timing_summary", format);
    let files: Vec<(PathBuf, String)> = match format {
        ReportFormat::Csv => vec![
            (path.to_path_buf(), csv_string(&report.rows, &ROW_HEADER)?),
            (summary_path, csv_string(&report.summary, &SUMMARY_HEADER)?),
            (timing_path, csv_string(&report.timing, &TIMING_HEADER)?),
            (
                timing_summary_path,
                csv_string(&report.timing_summary, &TIMING_SUMMARY_HEADER)?,
            ),
        ],
        ReportFormat::Json => vec![
            (path.to_path_buf(), json_string(&report.rows)),
            (summary_path, json_string(&report.summary)),
            (timing_path, json_string(&report.timing)),
            (timing_summary_path, json_string(&report.timing_summary)),
        ],
    };
    let mut written = Vec::new();
    for (p, text) in files {
        fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
        written.push(p);
    }
    Ok(written)
}
