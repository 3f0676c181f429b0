//! Metrics rows, expected-versus-actual comparison and the aggregate
//! makespan/throughput tables keyed by level of parallelism.
//!
//! Time units are milliseconds; throughput is transactions per second.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{ReportError, SimError};
use crate::scheduling::Algorithm;
use crate::simulator::{run, RunMetrics};
use crate::workload::{BuiltinWorkload, Workload};

/// Transactions per second for `txn_count` transactions over `ms` milliseconds.
pub fn throughput(txn_count: u64, ms: f64) -> Result<f64, ReportError> {
    if ms.is_nan() || ms <= 0.0 {
        return Err(ReportError::NonPositiveMakespan(ms));
    }
    Ok(1000.0 * txn_count as f64 / ms)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ConfigKey {
    pub workload: String,
    pub algorithm: Algorithm,
    pub workers: usize,
}

impl ConfigKey {
    pub fn new(workload: impl Into<String>, algorithm: Algorithm, workers: usize) -> Self {
        ConfigKey {
            workload: workload.into(),
            algorithm,
            workers,
        }
    }
}

impl fmt::Display for ConfigKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/n={}", self.workload, self.algorithm, self.workers)
    }
}

/// One line of metrics output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub workload: String,
    pub algorithm: Algorithm,
    pub workers: usize,
    pub ms: u64,
    pub na: u64,
    pub snum: u64,
    pub iterations: usize,
    pub throughput: f64,
}

impl MetricsRow {
    pub fn from_metrics(key: &ConfigKey, txn_count: usize, m: &RunMetrics) -> Self {
        MetricsRow {
            workload: key.workload.clone(),
            algorithm: key.algorithm,
            workers: key.workers,
            ms: m.ms,
            na: m.na,
            snum: m.snum,
            iterations: m.iterations,
            throughput: throughput(txn_count as u64, m.ms as f64).unwrap_or(0.0),
        }
    }

    pub fn key(&self) -> ConfigKey {
        ConfigKey::new(self.workload.clone(), self.algorithm, self.workers)
    }
}

pub fn rows_to_csv(rows: &[MetricsRow]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| ReportError::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| ReportError::Format(e.to_string()))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<MetricsRow>, ReportError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize()
        .map(|row| row.map_err(ReportError::from))
        .collect()
}

pub fn rows_to_json(rows: &[MetricsRow]) -> Result<String, ReportError> {
    Ok(serde_json::to_string_pretty(rows)?)
}

pub fn rows_from_json(text: &str) -> Result<Vec<MetricsRow>, ReportError> {
    Ok(serde_json::from_str(text)?)
}

/// Runs every (workload, algorithm, worker count) configuration, one thread
/// each. Output order follows the input order, not completion order.
pub fn sweep(
    workloads: &[(String, Workload)],
    algorithms: &[Algorithm],
    workers: &[usize],
) -> Result<Vec<MetricsRow>, SimError> {
    let configs: Vec<(ConfigKey, &Workload)> = workloads
        .iter()
        .flat_map(|(name, w)| {
            algorithms.iter().flat_map(move |&alg| {
                workers
                    .iter()
                    .map(move |&n| (ConfigKey::new(name.clone(), alg, n), w))
            })
        })
        .collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|(key, w)| {
                scope.spawn(move || {
                    run(w, key.algorithm, key.workers)
                        .map(|m| MetricsRow::from_metrics(key, w.len(), &m))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    })
}

/// The three built-in workloads by name.
pub fn builtin_workloads() -> Vec<(String, Workload)> {
    BuiltinWorkload::ALL
        .iter()
        .map(|b| (b.name().to_string(), b.workload()))
        .collect()
}

/// Sweep over the built-in workloads and all algorithms.
pub fn builtin_sweep(workers: &[usize]) -> Result<Vec<MetricsRow>, SimError> {
    sweep(&builtin_workloads(), &Algorithm::ALL, workers)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedCell {
    pub workload: String,
    pub algorithm: Algorithm,
    pub workers: usize,
    pub ms: u64,
    pub na: u64,
    /// Set on cells known to diverge from the derived schedule; a mismatch
    /// there is reported but does not fail the comparison.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ExpectedCell {
    pub fn key(&self) -> ConfigKey {
        ConfigKey::new(self.workload.clone(), self.algorithm, self.workers)
    }
}

/// One row of an aggregate table: per-algorithm values for a workload with
/// the given level of parallelism. Values are in [`Algorithm::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub nit: usize,
    pub workload: String,
    pub values: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedTable {
    pub cells: Vec<ExpectedCell>,
    #[serde(default)]
    pub makespan_by_nit: Vec<AggregateRow>,
    #[serde(default)]
    pub throughput_by_nit: Vec<AggregateRow>,
}

/// (workload, algorithm, (ms, na) for two, three and four workers)
type ReferenceRow = (&'static str, Algorithm, [(u64, u64); 3]);

pub const AC_CW1_NOTE: &str = "first-conflict co-location yields 60/0, the schedule AAC also finds";

impl ExpectedTable {
    /// The reference results for two, three and four workers, and the
    /// aggregate makespan and throughput rows derived from them.
    pub fn builtin() -> Self {
        use Algorithm::*;
        let reference: [ReferenceRow; 12] = [
            ("CFW", Rr, [(70, 0), (60, 0), (60, 0)]),
            ("CFW", Etlb, [(50, 0), (50, 0), (50, 0)]),
            ("CFW", Ac, [(50, 0), (50, 0), (50, 0)]),
            ("CFW", Aac, [(50, 0), (50, 0), (50, 0)]),
            ("CW1", Rr, [(120, 1), (110, 1), (110, 2)]),
            ("CW1", Etlb, [(100, 1), (100, 1), (100, 2)]),
            ("CW1", Ac, [(60, 0), (70, 0), (70, 0)]),
            ("CW1", Aac, [(60, 0), (60, 0), (60, 0)]),
            ("CW2", Rr, [(120, 1), (160, 3), (210, 6)]),
            ("CW2", Etlb, [(100, 1), (200, 6), (200, 6)]),
            ("CW2", Ac, [(90, 0), (90, 0), (90, 0)]),
            ("CW2", Aac, [(90, 0), (90, 0), (90, 0)]),
        ];
        let mut cells = Vec::new();
        for (workload, algorithm, values) in reference {
            for (i, (ms, na)) in values.into_iter().enumerate() {
                let workers = i + 2;
                let note = (workload == "CW1" && algorithm == Ac && workers >= 3)
                    .then(|| AC_CW1_NOTE.to_string());
                cells.push(ExpectedCell {
                    workload: workload.into(),
                    algorithm,
                    workers,
                    ms,
                    na,
                    note,
                });
            }
        }
        let row = |nit, workload: &str, values| AggregateRow {
            nit,
            workload: workload.into(),
            values,
        };
        ExpectedTable {
            cells,
            makespan_by_nit: vec![
                row(1, "CW2", [163.33, 166.66, 90.0, 90.0]),
                row(3, "CW1", [113.33, 100.0, 66.66, 60.0]),
                row(5, "CFW", [63.33, 50.0, 50.0, 50.0]),
            ],
            throughput_by_nit: vec![
                row(1, "CW2", [32.33, 33.33, 55.0, 55.0]),
                row(3, "CW1", [44.0, 50.0, 75.0, 83.0]),
                row(5, "CFW", [79.0, 100.0, 100.0, 100.0]),
            ],
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ReportError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String, ReportError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn cell(&self, key: &ConfigKey) -> Option<&ExpectedCell> {
        self.cells.iter().find(|c| &c.key() == key)
    }

    /// Aggregate cells fed by an annotated cell, as (nit, algorithm).
    pub fn annotated_aggregates(&self, nits: &BTreeMap<String, usize>) -> Vec<(usize, Algorithm)> {
        let mut out: Vec<(usize, Algorithm)> = self
            .cells
            .iter()
            .filter(|c| c.note.is_some())
            .filter_map(|c| nits.get(&c.workload).map(|&nit| (nit, c.algorithm)))
            .collect();
        out.sort();
        out.dedup();
        out
    }
}

/// Average makespan and average throughput per (workload, algorithm) over
/// the given worker counts. Throughput is averaged per configuration, not
/// computed from the averaged makespan.
pub fn parallelism_tables(
    rows: &[MetricsRow],
    workloads: &[(String, usize, usize)],
    workers: &[usize],
) -> Result<(Vec<AggregateRow>, Vec<AggregateRow>), ReportError> {
    let by_key: BTreeMap<ConfigKey, &MetricsRow> = rows.iter().map(|r| (r.key(), r)).collect();
    let mut missing = Vec::new();
    let mut ms_rows = Vec::new();
    let mut th_rows = Vec::new();
    // workloads: (name, nit, transaction count)
    for (name, nit, txns) in workloads {
        let mut ms_vals = [0.0; 4];
        let mut th_vals = [0.0; 4];
        for (i, &alg) in Algorithm::ALL.iter().enumerate() {
            let mut ms_sum = 0.0;
            let mut th_sum = 0.0;
            for &n in workers {
                let key = ConfigKey::new(name.clone(), alg, n);
                match by_key.get(&key) {
                    Some(r) => {
                        ms_sum += r.ms as f64;
                        th_sum += throughput(*txns as u64, r.ms as f64)?;
                    }
                    None => missing.push(key.to_string()),
                }
            }
            ms_vals[i] = ms_sum / workers.len() as f64;
            th_vals[i] = th_sum / workers.len() as f64;
        }
        ms_rows.push(AggregateRow {
            nit: *nit,
            workload: name.clone(),
            values: ms_vals,
        });
        th_rows.push(AggregateRow {
            nit: *nit,
            workload: name.clone(),
            values: th_vals,
        });
    }
    if !missing.is_empty() {
        return Err(ReportError::MissingConfigs(missing));
    }
    ms_rows.sort_by_key(|r| r.nit);
    th_rows.sort_by_key(|r| r.nit);
    Ok((ms_rows, th_rows))
}

/// Rows built from the reference per-configuration values instead of
/// simulator output.
pub fn expected_rows(expected: &ExpectedTable) -> Vec<MetricsRow> {
    expected
        .cells
        .iter()
        .map(|c| MetricsRow {
            workload: c.workload.clone(),
            algorithm: c.algorithm,
            workers: c.workers,
            ms: c.ms,
            na: c.na,
            snum: 5,
            iterations: 0,
            throughput: throughput(5, c.ms as f64).unwrap_or(0.0),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellStatus {
    Match,
    Mismatch,
    /// Differs from an annotated expected value; reported, not failed.
    AnnotatedDivergence {
        note: String,
    },
    /// Annotated cell whose value happens to match.
    AnnotatedMatch {
        note: String,
    },
    MissingActual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellDiff {
    pub key: ConfigKey,
    pub expected: (u64, u64),
    pub actual: Option<(u64, u64)>,
    #[serde(flatten)]
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffReport {
    pub cells: Vec<CellDiff>,
}

impl DiffReport {
    /// True unless some cell mismatched without an annotation.
    pub fn ok(&self) -> bool {
        !self
            .cells
            .iter()
            .any(|c| matches!(c.status, CellStatus::Mismatch | CellStatus::MissingActual))
    }

    pub fn get(&self, key: &ConfigKey) -> Option<&CellDiff> {
        self.cells.iter().find(|c| &c.key == key)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.cells {
            let actual = c
                .actual
                .map_or("-".to_string(), |(ms, na)| format!("{ms}/{na}"));
            let status = match &c.status {
                CellStatus::Match => "match".to_string(),
                CellStatus::Mismatch => "MISMATCH".to_string(),
                CellStatus::AnnotatedDivergence { note } => {
                    format!("divergence (annotated: {note})")
                }
                CellStatus::AnnotatedMatch { .. } => "match (annotated)".to_string(),
                CellStatus::MissingActual => "MISSING".to_string(),
            };
            let _ = writeln!(
                out,
                "{:<18} expected {:>3}/{:<2} actual {:>7}  {}",
                c.key.to_string(),
                c.expected.0,
                c.expected.1,
                actual,
                status
            );
        }
        out
    }
}

pub fn compare_expected(actual: &[MetricsRow], expected: &ExpectedTable) -> DiffReport {
    let by_key: BTreeMap<ConfigKey, &MetricsRow> = actual.iter().map(|r| (r.key(), r)).collect();
    let cells = expected
        .cells
        .iter()
        .map(|cell| {
            let key = cell.key();
            let exp = (cell.ms, cell.na);
            let got = by_key.get(&key).map(|r| (r.ms, r.na));
            let status = match (got, &cell.note) {
                (None, _) => CellStatus::MissingActual,
                (Some(g), None) if g == exp => CellStatus::Match,
                (Some(_), None) => CellStatus::Mismatch,
                (Some(g), Some(note)) if g == exp => {
                    CellStatus::AnnotatedMatch { note: note.clone() }
                }
                (Some(_), Some(note)) => CellStatus::AnnotatedDivergence { note: note.clone() },
            };
            CellDiff {
                key,
                expected: exp,
                actual: got,
                status,
            }
        })
        .collect();
    DiffReport { cells }
}

/// Per-cell comparison of aggregate tables: (nit, algorithm, ours, reference, within tolerance).
pub fn compare_aggregates(
    ours: &[AggregateRow],
    reference: &[AggregateRow],
    tolerance: f64,
) -> Vec<(usize, Algorithm, f64, f64, bool)> {
    let mut out = Vec::new();
    for p in reference {
        let Some(o) = ours.iter().find(|o| o.nit == p.nit) else {
            continue;
        };
        for (i, &alg) in Algorithm::ALL.iter().enumerate() {
            let (a, b) = (o.values[i], p.values[i]);
            out.push((p.nit, alg, a, b, (a - b).abs() <= tolerance));
        }
    }
    out
}

/// Text rendering of the (ms, na) table for the given worker counts.
pub fn render_results_table(
    rows: &[MetricsRow],
    workers: &[usize],
    expected: Option<&ExpectedTable>,
) -> String {
    let by_key: BTreeMap<ConfigKey, &MetricsRow> = rows.iter().map(|r| (r.key(), r)).collect();
    let mut out = String::new();
    let _ = write!(out, "{:<6}{:<6}", "Load", "Alg.");
    for n in workers {
        let _ = write!(out, " | n={n:<2} {:>5} {:>3}", "ms", "na");
    }
    out.push('\n');
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.workload.as_str()) {
            names.push(&r.workload);
        }
    }
    for name in names {
        for alg in Algorithm::ALL {
            let _ = write!(out, "{name:<6}{:<6}", alg.name());
            for &n in workers {
                let key = ConfigKey::new(name, alg, n);
                match by_key.get(&key) {
                    Some(r) => {
                        let mark = expected.and_then(|e| e.cell(&key)).map_or(" ", |c| {
                            if (c.ms, c.na) == (r.ms, r.na) {
                                " "
                            } else if c.note.is_some() {
                                "*"
                            } else {
                                "!"
                            }
                        });
                        let _ = write!(out, " |      {:>5} {:>3}{mark}", r.ms, r.na);
                    }
                    None => {
                        let _ = write!(out, " |      {:>5} {:>3} ", "-", "-");
                    }
                }
            }
            out.push('\n');
        }
    }
    if let Some(e) = expected {
        let notes: Vec<String> = e
            .cells
            .iter()
            .filter(|c| c.note.is_some() && workers.contains(&c.workers))
            .map(|c| {
                format!(
                    "  * {}: reference {}/{}, {}",
                    c.key(),
                    c.ms,
                    c.na,
                    c.note.as_deref().unwrap_or("")
                )
            })
            .collect();
        for n in notes {
            out.push_str(&n);
            out.push('\n');
        }
    }
    out
}

/// Text rendering of an aggregate table next to the reference values.
pub fn render_aggregate(
    title: &str,
    prefix: &str,
    ours: &[AggregateRow],
    reference: &[AggregateRow],
) -> String {
    let mut out = format!("{title}\n{:<5}", "nit");
    for alg in Algorithm::ALL {
        let _ = write!(
            out,
            " {:>20}",
            format!("{prefix}-{}", alg.name().to_lowercase())
        );
    }
    out.push('\n');
    for row in ours {
        let _ = write!(out, "{:<5}", row.nit);
        let printed = reference.iter().find(|p| p.nit == row.nit);
        for (i, v) in row.values.iter().enumerate() {
            let cell = match printed {
                Some(p) => format!("{v:.2} ({:.2})", p.values[i]),
                None => format!("{v:.2}"),
            };
            let _ = write!(out, " {cell:>20}");
        }
        out.push('\n');
    }
    out.push_str("  values are exact averages; reference values in parentheses\n");
    out
}
