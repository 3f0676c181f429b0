//! Tick-synchronous execution of scheduling iterations.
//!
//! Every worker takes part in every global tick. A transaction of duration
//! `d` occupies `d + 1` ticks on its worker: GetVars on the first, CommitVars
//! on the last. A worker that runs out of work pads with idle ticks so that
//! all workers finish the iteration on the same tick `nt`. Makespan only
//! counts load (sum of durations), never start or idle ticks.
//!
//! A run repeats schedule → execute → re-queue aborted (in id order) until
//! every transaction has committed.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::scheduling::{assign, Algorithm, IterationPlan, ScheduledEntry};
use crate::stm::{
    CommitRule, Reply, Request, ServiceOrder, StmRequest, Version, VersionDict, VersionMode,
};
use crate::workload::{TVarId, TransactionSpec, TxnId, Workload};

/// Makespan of parts run one after another.
pub fn seq_makespan(parts: &[u64]) -> u64 {
    parts.iter().sum()
}

/// Makespan of parts run side by side.
pub fn par_makespan(parts: &[u64]) -> u64 {
    parts.iter().copied().max().unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineSlot {
    pub txn: TxnId,
    pub worker: usize,
    pub get_tick: u64,
    pub commit_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timeline {
    pub nt: u64,
    pub slots: Vec<TimelineSlot>,
    /// Busy ticks per worker; the rest of `nt` is idle padding.
    pub busy_ticks: Vec<u64>,
    pub idle_ticks: Vec<u64>,
}

/// Closed-form tick schedule of a plan.
pub fn tick_timeline(plan: &IterationPlan) -> Timeline {
    let slots = plan
        .assignment
        .entries()
        .map(|e: &ScheduledEntry| TimelineSlot {
            txn: e.txn.id,
            worker: e.worker,
            get_tick: e.get_tick(),
            commit_tick: e.commit_tick(),
        })
        .collect();
    Timeline {
        nt: plan.nt,
        slots,
        busy_ticks: plan.nt_per_worker.clone(),
        idle_ticks: plan.idle_ticks.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Get,
    Commit,
}

/// One served STM request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub iteration: usize,
    pub tick: u64,
    pub worker: usize,
    pub event: EventKind,
    pub txn: TxnId,
    pub vars: Vec<TVarId>,
    /// Versions read (get) or presented (commit).
    pub versions: Vec<Version>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub committed: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Running {
    slot: usize,
    workertime: u64,
    read: Vec<Version>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WorkerState {
    pub worker: usize,
    next_slot: usize,
    current: Option<Running>,
    idle_left: u64,
    /// Ticks this worker has taken part in during the iteration.
    pub ticks: u64,
    pub last_committed: Option<bool>,
}

impl WorkerState {
    pub fn workertime(&self) -> u64 {
        self.current.as_ref().map_or(0, |r| r.workertime)
    }

    pub fn is_idle(&self) -> bool {
        self.current.is_none()
    }
}

/// Step-wise execution of one iteration. Cloneable so a verifier can branch
/// on the service order of each tick.
#[derive(Debug, Clone)]
pub struct IterationExec {
    plan: Arc<IterationPlan>,
    iteration: usize,
    tick: u64,
    workers: Vec<WorkerState>,
    /// (worker, slot) of each request issued on the current tick.
    in_flight: Vec<(usize, usize)>,
    aborted: Vec<TxnId>,
    committed: Vec<TxnId>,
}

/// The parts of an [`IterationExec`] that change while it runs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExecKey {
    tick: u64,
    workers: Vec<WorkerState>,
    aborted: Vec<TxnId>,
    committed: Vec<TxnId>,
}

impl IterationExec {
    pub fn new(plan: Arc<IterationPlan>, iteration: usize) -> Self {
        let workers = (0..plan.assignment.n_workers())
            .map(|w| WorkerState {
                worker: w,
                next_slot: 0,
                current: None,
                idle_left: plan.idle_ticks[w],
                ticks: 0,
                last_committed: None,
            })
            .collect();
        IterationExec {
            plan,
            iteration,
            tick: 0,
            workers,
            in_flight: Vec::new(),
            aborted: Vec::new(),
            committed: Vec::new(),
        }
    }

    pub fn plan(&self) -> &IterationPlan {
        &self.plan
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn workers(&self) -> &[WorkerState] {
        &self.workers
    }

    pub fn key(&self) -> ExecKey {
        ExecKey {
            tick: self.tick,
            workers: self.workers.clone(),
            aborted: self.aborted.clone(),
            committed: self.committed.clone(),
        }
    }

    fn entry(&self, worker: usize, slot: usize) -> &ScheduledEntry {
        &self.plan.assignment.queue(worker)[slot]
    }

    pub fn is_finished(&self) -> bool {
        self.tick >= self.plan.nt
    }

    /// Runs ticks until one of them issues at least one request, and returns
    /// those requests; they must be answered with [`IterationExec::complete_tick`]
    /// before advancing again. Returns `None` once tick `nt` has passed.
    pub fn advance(&mut self) -> Option<Vec<StmRequest>> {
        assert!(self.in_flight.is_empty(), "previous tick not completed");
        while !self.is_finished() {
            self.tick += 1;
            let mut requests = Vec::new();
            for w in 0..self.workers.len() {
                let queue_len = self.plan.assignment.queue(w).len();
                let state = &mut self.workers[w];
                state.ticks += 1;
                match &mut state.current {
                    Some(run) => {
                        let entry = &self.plan.assignment.queue(w)[run.slot];
                        if run.workertime < entry.txn.duration {
                            run.workertime += 1;
                        } else {
                            let pairs =
                                entry.txn.vars.iter().copied().zip(run.read.iter().copied());
                            requests.push(StmRequest {
                                worker: w,
                                request: Request::CommitVars(pairs.collect()),
                            });
                            self.in_flight.push((w, run.slot));
                        }
                    }
                    None if state.next_slot < queue_len => {
                        let slot = state.next_slot;
                        state.next_slot += 1;
                        state.current = Some(Running {
                            slot,
                            workertime: 0,
                            read: Vec::new(),
                        });
                        let entry = &self.plan.assignment.queue(w)[slot];
                        requests.push(StmRequest {
                            worker: w,
                            request: Request::GetVars(entry.txn.vars.clone()),
                        });
                        self.in_flight.push((w, slot));
                    }
                    None if state.idle_left > 0 => state.idle_left -= 1,
                    None => {
                        // out of work and padding: not in lock-step
                        state.ticks -= 1;
                    }
                }
            }
            if !requests.is_empty() {
                return Some(requests);
            }
        }
        None
    }

    /// Applies the replies for the requests returned by the last
    /// [`IterationExec::advance`], in the same order.
    pub fn complete_tick(&mut self, replies: &[Reply], mut trace: Option<&mut Vec<TraceEvent>>) {
        let in_flight = std::mem::take(&mut self.in_flight);
        assert_eq!(in_flight.len(), replies.len(), "one reply per request");
        for (&(w, slot), reply) in in_flight.iter().zip(replies) {
            let txn = self.entry(w, slot).txn.clone();
            let state = &mut self.workers[w];
            let run = state
                .current
                .as_mut()
                .expect("worker has a running transaction");
            let event = match reply {
                Reply::Versions(versions) => {
                    run.read = versions.clone();
                    run.workertime = 1;
                    TraceEvent {
                        iteration: self.iteration,
                        tick: self.tick,
                        worker: w,
                        event: EventKind::Get,
                        txn: txn.id,
                        vars: txn.vars.clone(),
                        versions: versions.clone(),
                        committed: None,
                    }
                }
                Reply::Commit(outcome) => {
                    let presented = std::mem::take(&mut run.read);
                    state.current = None;
                    state.last_committed = Some(outcome.committed);
                    if outcome.committed {
                        self.committed.push(txn.id);
                    } else {
                        self.aborted.push(txn.id);
                    }
                    TraceEvent {
                        iteration: self.iteration,
                        tick: self.tick,
                        worker: w,
                        event: EventKind::Commit,
                        txn: txn.id,
                        vars: txn.vars.clone(),
                        versions: presented,
                        committed: Some(outcome.committed),
                    }
                }
            };
            if let Some(t) = trace.as_deref_mut() {
                t.push(event);
            }
        }
    }

    /// Result of a finished iteration.
    pub fn result(&self) -> IterationResult {
        assert!(self.is_finished() && self.in_flight.is_empty());
        let mut aborted = self.aborted.clone();
        aborted.sort();
        let mut committed = self.committed.clone();
        committed.sort();
        IterationResult {
            contribution: self.plan.makespan(),
            aborted,
            committed,
            nt: self.plan.nt,
            worker_ticks: self.workers.iter().map(|w| w.ticks).collect(),
        }
    }

    /// Aborted so far, in abort order.
    pub fn aborted(&self) -> &[TxnId] {
        &self.aborted
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationResult {
    pub contribution: u64,
    pub aborted: Vec<TxnId>,
    pub committed: Vec<TxnId>,
    pub nt: u64,
    pub worker_ticks: Vec<u64>,
}

impl IterationResult {
    pub fn lock_step(&self) -> bool {
        self.worker_ticks.iter().all(|&t| t == self.nt)
    }
}

/// Chooses the service order of a tick's requests.
pub trait OrderPolicy {
    fn order(
        &mut self,
        iteration: usize,
        tick: u64,
        requests: &[StmRequest],
    ) -> Result<ServiceOrder, SimError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DeterministicPolicy;

impl OrderPolicy for DeterministicPolicy {
    fn order(&mut self, _: usize, _: u64, _: &[StmRequest]) -> Result<ServiceOrder, SimError> {
        Ok(ServiceOrder::Deterministic)
    }
}

/// Replays recorded orders. Only ticks with two or more requests consume a
/// choice; single requests need none.
#[derive(Debug, Clone, Default)]
pub struct ScriptedPolicy {
    choices: VecDeque<Vec<usize>>,
}

impl ScriptedPolicy {
    pub fn new(choices: impl IntoIterator<Item = Vec<usize>>) -> Self {
        ScriptedPolicy {
            choices: choices.into_iter().collect(),
        }
    }

    pub fn remaining(&self) -> usize {
        self.choices.len()
    }
}

impl OrderPolicy for ScriptedPolicy {
    fn order(
        &mut self,
        iteration: usize,
        tick: u64,
        requests: &[StmRequest],
    ) -> Result<ServiceOrder, SimError> {
        if requests.len() < 2 {
            return Ok(ServiceOrder::Explicit((0..requests.len()).collect()));
        }
        self.choices
            .pop_front()
            .map(ServiceOrder::Explicit)
            .ok_or(SimError::ScriptExhausted { iteration, tick })
    }
}

/// Executes one planned iteration against the dictionary.
pub fn run_iteration(
    plan: Arc<IterationPlan>,
    iteration: usize,
    dict: &mut VersionDict,
    policy: &mut dyn OrderPolicy,
    mut trace: Option<&mut Vec<TraceEvent>>,
) -> Result<IterationResult, SimError> {
    let mut exec = IterationExec::new(plan, iteration);
    while let Some(requests) = exec.advance() {
        let order = policy.order(iteration, exec.tick(), &requests)?;
        let replies = dict.service_tick_batch(&requests, &order)?;
        exec.complete_tick(&replies, trace.as_deref_mut());
    }
    Ok(exec.result())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub index: usize,
    /// (transaction, duration) per worker, in queue order.
    pub queues: Vec<Vec<(TxnId, u64)>>,
    pub contribution: u64,
    pub nt: u64,
    pub aborted: Vec<TxnId>,
    pub committed: Vec<TxnId>,
    pub lock_step: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub ms: u64,
    pub na: u64,
    pub snum: u64,
    pub iterations: usize,
    pub per_iteration: Vec<IterationSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub algorithm: Algorithm,
    pub workers: usize,
    pub mode: VersionMode,
    pub rule: CommitRule,
    pub trace: bool,
    /// Defaults to one more than the transaction count; a correct commit rule
    /// commits at least one transaction per iteration.
    pub max_iterations: Option<usize>,
}

impl SimConfig {
    pub fn new(algorithm: Algorithm, workers: usize) -> Self {
        SimConfig {
            algorithm,
            workers,
            mode: VersionMode::Unbounded,
            rule: CommitRule::Optimistic,
            trace: false,
            max_iterations: None,
        }
    }

    pub fn traced(mut self) -> Self {
        self.trace = true;
        self
    }
}

pub fn run(
    workload: &Workload,
    algorithm: Algorithm,
    workers: usize,
) -> Result<RunMetrics, SimError> {
    run_with(
        workload,
        &SimConfig::new(algorithm, workers),
        &mut DeterministicPolicy,
    )
}

pub fn run_with(
    workload: &Workload,
    config: &SimConfig,
    policy: &mut dyn OrderPolicy,
) -> Result<RunMetrics, SimError> {
    let mut dict =
        VersionDict::new(workload.var_count(), config.mode).with_commit_rule(config.rule);
    let limit = config.max_iterations.unwrap_or(workload.len() + 1);
    let mut pending: Vec<TransactionSpec> = workload.transactions().to_vec();
    let mut metrics = RunMetrics {
        ms: 0,
        na: 0,
        snum: 0,
        iterations: 0,
        per_iteration: Vec::new(),
        trace: Vec::new(),
    };
    while !pending.is_empty() {
        if metrics.iterations == limit {
            return Err(SimError::IterationLimit(limit));
        }
        let plan = Arc::new(IterationPlan::new(assign(
            config.algorithm,
            &pending,
            config.workers,
        )?));
        let queues = plan
            .assignment
            .queues()
            .iter()
            .map(|q| q.iter().map(|e| (e.txn.id, e.txn.duration)).collect())
            .collect();
        let trace = config.trace.then_some(&mut metrics.trace);
        let result = run_iteration(plan, metrics.iterations, &mut dict, policy, trace)?;

        metrics.ms += result.contribution;
        metrics.na += result.aborted.len() as u64;
        metrics.snum += result.committed.len() as u64;
        pending = result
            .aborted
            .iter()
            .map(|&id| workload.txn(id).clone())
            .collect();
        metrics.per_iteration.push(IterationSummary {
            index: metrics.iterations,
            queues,
            contribution: result.contribution,
            nt: result.nt,
            aborted: result.aborted.clone(),
            committed: result.committed.clone(),
            lock_step: result.lock_step(),
        });
        metrics.iterations += 1;
    }
    Ok(metrics)
}
