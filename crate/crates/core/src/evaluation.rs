//! Metrics over dating outputs: MAE, stratified tables, bias distribution,
//! per-year and worst-case error.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRecord {
    pub image_id: String,
    pub predicted_year: i32,
    pub truth_year: i32,
    pub n_known: u32,
    pub n_unknown: u32,
    pub model: String,
    pub prior: String,
}

impl EvalRecord {
    pub fn error(&self) -> i64 {
        i64::from(self.predicted_year) - i64::from(self.truth_year)
    }

    pub fn abs_error(&self) -> u64 {
        self.error().unsigned_abs()
    }
}

pub const CSV_HEADER: [&str; 7] = [
    "image_id",
    "predicted_year",
    "truth_year",
    "n_known",
    "n_unknown",
    "model",
    "prior",
];

pub fn write_records_csv<W: Write>(w: W, records: &[EvalRecord]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(r: R) -> Result<Vec<EvalRecord>> {
    let mut input = csv::Reader::from_reader(r);
    let header: Vec<String> = input.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::InvalidParameter(format!(
            "unexpected CSV header {header:?}, expected {CSV_HEADER:?}"
        )));
    }
    input
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn mae(records: &[EvalRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let total: u64 = records.iter().map(EvalRecord::abs_error).sum();
    Ok(total as f64 / records.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumRow<K> {
    pub key: K,
    pub mae: f64,
    pub count: usize,
}

/// Per-group MAE, sorted by key; empty groups never appear.
pub fn stratify<K, F>(records: &[EvalRecord], key: F) -> Vec<StratumRow<K>>
where
    K: Ord + Clone,
    F: Fn(&EvalRecord) -> K,
{
    let mut groups: BTreeMap<K, (u64, usize)> = BTreeMap::new();
    for r in records {
        let e = groups.entry(key(r)).or_default();
        e.0 += r.abs_error();
        e.1 += 1;
    }
    groups
        .into_iter()
        .map(|(key, (sum, count))| StratumRow {
            key,
            mae: sum as f64 / count as f64,
            count,
        })
        .collect()
}

/// Strata over (known faces, unknown faces).
pub fn stratify_by_faces(records: &[EvalRecord]) -> Vec<StratumRow<(u32, u32)>> {
    stratify(records, |r| (r.n_known, r.n_unknown))
}

pub fn per_year_error(records: &[EvalRecord]) -> Vec<StratumRow<i32>> {
    stratify(records, |r| r.truth_year)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseRow {
    pub n_known: u32,
    pub max_abs_error: u64,
    pub count: usize,
}

pub fn worst_case_error(records: &[EvalRecord]) -> Vec<WorstCaseRow> {
    let mut groups: BTreeMap<u32, (u64, usize)> = BTreeMap::new();
    for r in records {
        let e = groups.entry(r.n_known).or_default();
        e.0 = e.0.max(r.abs_error());
        e.1 += 1;
    }
    groups
        .into_iter()
        .map(|(n_known, (max_abs_error, count))| WorstCaseRow {
            n_known,
            max_abs_error,
            count,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    /// Mean signed error, predicted minus truth.
    pub mean_bias: f64,
    /// Count of records per signed error value.
    pub histogram: BTreeMap<i64, usize>,
    /// 5th and 95th nearest-rank percentiles of the signed error.
    pub band: (i64, i64),
    pub count: usize,
}

/// Nearest-rank percentile of sorted values: the value at rank
/// `ceil(p / 100 * n)`, ranks starting at one.
pub fn nearest_rank(sorted: &[i64], p: f64) -> Option<i64> {
    if sorted.is_empty() || !(0.0..=100.0).contains(&p) {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

pub fn bias_distribution(records: &[EvalRecord]) -> Result<BiasReport> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut errors: Vec<i64> = records.iter().map(EvalRecord::error).collect();
    errors.sort_unstable();
    let mut histogram = BTreeMap::new();
    for &e in &errors {
        *histogram.entry(e).or_insert(0) += 1;
    }
    let sum: i64 = errors.iter().sum();
    Ok(BiasReport {
        mean_bias: sum as f64 / errors.len() as f64,
        histogram,
        band: (
            nearest_rank(&errors, 5.0).unwrap(),
            nearest_rank(&errors, 95.0).unwrap(),
        ),
        count: errors.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub model: String,
    pub prior: String,
    pub mae: f64,
    pub count: usize,
    pub by_faces: Vec<StratumRow<(u32, u32)>>,
    pub by_year: Vec<StratumRow<i32>>,
    pub worst_case: Vec<WorstCaseRow>,
    pub bias: BiasReport,
}

/// Full report, one group per (model, prior) pair present in the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub groups: Vec<GroupReport>,
}

pub fn evaluate(records: &[EvalRecord]) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut by_group: BTreeMap<(&str, &str), Vec<EvalRecord>> = BTreeMap::new();
    for r in records {
        by_group
            .entry((r.model.as_str(), r.prior.as_str()))
            .or_default()
            .push(r.clone());
    }
    let groups = by_group
        .into_iter()
        .map(|((model, prior), rs)| {
            Ok(GroupReport {
                model: model.to_string(),
                prior: prior.to_string(),
                mae: mae(&rs)?,
                count: rs.len(),
                by_faces: stratify_by_faces(&rs),
                by_year: per_year_error(&rs),
                worst_case: worst_case_error(&rs),
                bias: bias_distribution(&rs)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport { groups })
}

impl EvalReport {
    /// Flat plot-ready table with one row per group and stratum.
    pub fn write_strata_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["model", "prior", "table", "key", "mae", "count"])?;
        for g in &self.groups {
            let mut row = |table: &str, key: String, value: String, count: usize| {
                out.write_record([
                    g.model.as_str(),
                    g.prior.as_str(),
                    table,
                    &key,
                    &value,
                    &count.to_string(),
                ])
            };
            row("global", String::new(), g.mae.to_string(), g.count)?;
            for s in &g.by_faces {
                row(
                    "faces",
                    format!("{}x{}", s.key.0, s.key.1),
                    s.mae.to_string(),
                    s.count,
                )?;
            }
            for s in &g.by_year {
                row("year", s.key.to_string(), s.mae.to_string(), s.count)?;
            }
            for s in &g.worst_case {
                row(
                    "worst",
                    s.n_known.to_string(),
                    s.max_abs_error.to_string(),
                    s.count,
                )?;
            }
            for (e, c) in &g.bias.histogram {
                row("bias", e.to_string(), String::new(), *c)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}
