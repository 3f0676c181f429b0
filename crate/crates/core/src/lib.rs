//! Scheduling of transaction batches onto worker threads backed by a
//! parallel software transactional memory.
//!
//! A [`Workload`] is split into per-worker queues by one of four
//! [`Algorithm`]s, executed tick by tick against a shared [`VersionDict`],
//! and measured as makespan plus abort count. The [`verifier`] module
//! explores every interleaving of same-tick requests to check safety and
//! liveness properties and to find worst-case executions.

pub mod error;
pub mod report;
pub mod scheduling;
pub mod simulator;
pub mod stm;
pub mod verifier;
pub mod workload;
pub mod workload_file;

pub use error::{ReportError, ScheduleError, SimError, StmError, VerifyError, WorkloadError};
pub use scheduling::{assign, Algorithm, Assignment, IterationPlan, ScheduledEntry};
pub use simulator::{run, run_with, RunMetrics, SimConfig};
pub use stm::{CommitRule, VersionDict, VersionMode};
pub use workload::{BuiltinWorkload, TVarId, TransactionSpec, TxnId, Workload};
pub use workload_file::{emit_workload, load_workload, parse_workload};
