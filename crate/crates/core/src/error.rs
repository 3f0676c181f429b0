use thiserror::Error;

use crate::workload::{TVarId, Violation};

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("unknown built-in workload {0:?} (expected CFW, CW1 or CW2)")]
    UnknownBuiltin(String),
    #[error("invalid workload: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("{message} at record {record}")]
    Record { record: usize, message: String },
    #[error("malformed workload document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("reading workload: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StmError {
    #[error("unknown t-variable {}", .0 .0)]
    UnknownKey(TVarId),
    #[error("t-variable {} named twice in one request", .0 .0)]
    DuplicateKey(TVarId),
    #[error("request names no t-variables")]
    EmptyRequest,
    #[error("worker {0} issued more than one request in the same tick")]
    DuplicateWorker(usize),
    #[error("service order is not a permutation of {0} requests")]
    BadOrder(usize),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("at least one worker is required")]
    NoWorkers,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Stm(#[from] StmError),
    #[error("no completion after {0} scheduling iterations")]
    IterationLimit(usize),
    #[error("scripted service order exhausted at tick {tick} of iteration {iteration}")]
    ScriptExhausted { iteration: usize, tick: u64 },
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("workload has {found} transactions; the explorer bound is {bound}")]
    WorkloadTooLarge { found: usize, bound: usize },
    #[error("state budget of {0} states exceeded")]
    StateBudgetExceeded(usize),
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("throughput needs a positive makespan, got {0}")]
    NonPositiveMakespan(f64),
    #[error("missing configurations: {}", .0.join(", "))]
    MissingConfigs(Vec<String>),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Format(String),
}
