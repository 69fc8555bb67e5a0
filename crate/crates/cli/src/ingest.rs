//! Reading real-world rankings: metric tables and PrefLib strict orders.

use std::io::Read;

use kemeny_core::generators::{rankings_from_metric_table, Direction, MetricTable};
use kemeny_core::Profile;
use thiserror::Error;

use crate::error::CliError;

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("unsupported format at line {line}: {message}")]
    Unsupported { line: usize, message: String },
    #[error(transparent)]
    Core(#[from] kemeny_core::Error),
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Core(inner) => inner.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

/// Parses a header row plus one row per item; the first column holds item labels.
pub fn read_metric_table<R: Read>(reader: R) -> Result<MetricTable, IngestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| IngestError::Malformed {
        line: 1,
        message: e.to_string(),
    })?;
    if header.len() < 2 {
        return Err(IngestError::Malformed {
            line: 1,
            message: "need a label column and at least one metric column".into(),
        });
    }
    let column_names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut item_labels = Vec::new();
    let mut cells = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| IngestError::Malformed {
            line: i + 2,
            message: e.to_string(),
        })?;
        let mut fields = record.iter();
        item_labels.push(fields.next().unwrap_or_default().to_string());
        cells.push(fields.map(str::to_string).collect());
    }
    Ok(MetricTable {
        item_labels,
        column_names,
        cells,
    })
}

/// One ranking per metric column.
pub fn ingest_features_csv<R: Read>(reader: R, directions: &[Direction]) -> Result<Profile, IngestError> {
    let table = read_metric_table(reader)?;
    let profile = rankings_from_metric_table(&table, directions)?;
    Ok(profile.with_labels(table.item_labels)?)
}

/// PrefLib strict-order-complete data: `# KEY: value` metadata lines and
/// `count: a,b,c` vote lines over 1-based alternatives.
pub fn parse_soc(text: &str) -> Result<Profile, IngestError> {
    let mut declared: Option<usize> = None;
    let mut names: Vec<(usize, String)> = Vec::new();
    let mut votes: Vec<(usize, usize, Vec<usize>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let Some((key, value)) = meta.split_once(':') else { continue };
            let key = key.trim().to_ascii_uppercase();
            let value = value.trim();
            if key == "NUMBER ALTERNATIVES" {
                declared = Some(value.parse().map_err(|_| IngestError::Malformed {
                    line: line_no,
                    message: format!("bad alternative count `{value}`"),
                })?);
            } else if let Some(idx) = key.strip_prefix("ALTERNATIVE NAME ") {
                if let Ok(idx) = idx.trim().parse::<usize>() {
                    names.push((idx, value.to_string()));
                }
            }
            continue;
        }
        let (count, order) = line.split_once(':').ok_or_else(|| IngestError::Malformed {
            line: line_no,
            message: "expected `count: a,b,c`".into(),
        })?;
        let count: usize = count.trim().parse().map_err(|_| IngestError::Malformed {
            line: line_no,
            message: format!("bad count `{}`", count.trim()),
        })?;
        if order.contains('{') || order.contains('}') {
            return Err(IngestError::Unsupported {
                line: line_no,
                message: "ties are not strict orders".into(),
            });
        }
        let mut items = Vec::new();
        for tok in order.split(',') {
            let tok = tok.trim();
            let a: usize = tok.parse().map_err(|_| IngestError::Malformed {
                line: line_no,
                message: format!("bad alternative `{tok}`"),
            })?;
            if a == 0 {
                return Err(IngestError::Malformed {
                    line: line_no,
                    message: "alternatives are numbered from 1".into(),
                });
            }
            items.push(a - 1);
        }
        votes.push((line_no, count, items));
    }
    let n = declared
        .or_else(|| votes.iter().flat_map(|(_, _, v)| v.iter()).max().map(|&a| a + 1))
        .ok_or_else(|| IngestError::Malformed {
            line: 0,
            message: "no votes".into(),
        })?;
    let mut orders = Vec::new();
    for (line, count, items) in votes {
        if let Some(&a) = items.iter().find(|&&a| a >= n) {
            return Err(IngestError::Malformed {
                line,
                message: format!("alternative {} exceeds the declared {n}", a + 1),
            });
        }
        let mut seen = vec![false; n];
        for &a in &items {
            if std::mem::replace(&mut seen[a], true) {
                return Err(IngestError::Malformed {
                    line,
                    message: format!("alternative {} repeated", a + 1),
                });
            }
        }
        if items.len() != n {
            return Err(IngestError::Unsupported {
                line,
                message: format!("incomplete order ranks {} of {n} alternatives", items.len()),
            });
        }
        orders.extend(std::iter::repeat_n(items, count));
    }
    if orders.is_empty() {
        return Err(IngestError::Malformed {
            line: 0,
            message: "no voters".into(),
        });
    }
    let profile = Profile::from_orders(orders)?;
    if names.len() == n {
        names.sort();
        if names.iter().enumerate().all(|(i, (idx, _))| *idx == i + 1) {
            return Ok(profile.with_labels(names.into_iter().map(|(_, s)| s).collect())?);
        }
    }
    Ok(profile)
}
