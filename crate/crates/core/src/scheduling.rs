//! Online scheduling of one batch of transactions onto `n` workers.
//!
//! Four algorithms, from cheapest to most careful:
//!
//! * **RR** puts the k-th transaction of the batch on worker `k mod n`.
//! * **ETLB** puts each transaction on the currently least-loaded worker.
//! * **AC** co-locates a transaction with the first already-placed
//!   transaction it shares a t-variable with, and otherwise behaves like ETLB.
//! * **AAC** tries every worker and keeps the conflict-free placement with the
//!   smallest iteration makespan.
//!
//! Positions on a worker are measured in load time: the sum of the durations
//! ahead of an entry. Ties are always broken towards the lowest index.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ScheduleError;
use crate::workload::TransactionSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Rr,
    Etlb,
    Ac,
    Aac,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Rr,
        Algorithm::Etlb,
        Algorithm::Ac,
        Algorithm::Aac,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Rr => "RR",
            Algorithm::Etlb => "ETLB",
            Algorithm::Ac => "AC",
            Algorithm::Aac => "AAC",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rr" => Ok(Algorithm::Rr),
            "etlb" => Ok(Algorithm::Etlb),
            "ac" => Ok(Algorithm::Ac),
            "aac" => Ok(Algorithm::Aac),
            _ => Err(format!(
                "unknown algorithm {s:?} (expected rr, etlb, ac or aac)"
            )),
        }
    }
}

/// A transaction placed on a worker. `slot` is its position in the queue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduledEntry {
    pub txn: TransactionSpec,
    pub worker: usize,
    pub slot: usize,
    pub start: u64,
    pub end: u64,
}

impl ScheduledEntry {
    /// Tick on which the GetVars request is issued. Every transaction ahead
    /// on the same worker costs one extra start tick.
    pub fn get_tick(&self) -> u64 {
        self.start + self.slot as u64 + 1
    }

    /// Tick on which the CommitVars request is issued.
    pub fn commit_tick(&self) -> u64 {
        self.get_tick() + self.txn.duration
    }
}

/// Overlap test between a candidate interval `[t1, t2]` and a scheduled one.
fn intervals_overlap(start: u64, end: u64, t1: u64, t2: u64) -> bool {
    (start < t2 && t2 <= end) || (t1 < end && end <= t2)
}

/// True iff some scheduled entry other than `x` itself overlaps `[t1, t2]`
/// and shares a t-variable with `x`.
pub fn is_conflict<'a>(
    x: &TransactionSpec,
    t1: u64,
    t2: u64,
    scheduled: impl IntoIterator<Item = &'a ScheduledEntry>,
) -> bool {
    debug_assert!(t1 < t2);
    scheduled.into_iter().any(|e| {
        intervals_overlap(e.start, e.end, t1, t2) && e.txn.id != x.id && e.txn.shares_var(x)
    })
}

/// Per-worker ordered queues for one scheduling iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    queues: Vec<Vec<ScheduledEntry>>,
}

impl Assignment {
    pub fn empty(n_workers: usize) -> Result<Self, ScheduleError> {
        if n_workers == 0 {
            return Err(ScheduleError::NoWorkers);
        }
        Ok(Assignment {
            queues: vec![Vec::new(); n_workers],
        })
    }

    pub fn n_workers(&self) -> usize {
        self.queues.len()
    }

    pub fn queues(&self) -> &[Vec<ScheduledEntry>] {
        &self.queues
    }

    pub fn queue(&self, worker: usize) -> &[ScheduledEntry] {
        &self.queues[worker]
    }

    pub fn entries(&self) -> impl Iterator<Item = &ScheduledEntry> {
        self.queues.iter().flatten()
    }

    pub fn len(&self) -> usize {
        self.queues.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn load(&self, worker: usize) -> u64 {
        self.queues[worker].last().map_or(0, |e| e.end)
    }

    pub fn loads(&self) -> Vec<u64> {
        (0..self.n_workers()).map(|w| self.load(w)).collect()
    }

    /// Maximum worker load.
    pub fn makespan(&self) -> u64 {
        self.loads().into_iter().max().unwrap_or(0)
    }

    /// Transaction ids per worker, in queue order.
    pub fn txn_ids(&self) -> Vec<Vec<usize>> {
        self.queues
            .iter()
            .map(|q| q.iter().map(|e| e.txn.id.0).collect())
            .collect()
    }

    fn least_loaded(&self) -> usize {
        (0..self.n_workers())
            .min_by_key(|&w| (self.load(w), w))
            .expect("at least one worker")
    }

    fn tentative(&self, worker: usize, x: &TransactionSpec) -> ScheduledEntry {
        let start = self.load(worker);
        ScheduledEntry {
            txn: x.clone(),
            worker,
            slot: self.queues[worker].len(),
            start,
            end: start + x.duration,
        }
    }

    pub fn push(&mut self, worker: usize, x: &TransactionSpec) {
        let entry = self.tentative(worker, x);
        self.queues[worker].push(entry);
    }

    /// A placement is admissible when it is conflict-free in load time and,
    /// against variable-sharing entries on other workers, its GetVars..CommitVars
    /// tick window is disjoint from theirs. The tick check matters because
    /// start ticks shift entries with many predecessors later than their
    /// load-time position.
    fn admissible(&self, worker: usize, x: &TransactionSpec) -> bool {
        let t = self.tentative(worker, x);
        if is_conflict(x, t.start, t.end, self.entries()) {
            return false;
        }
        self.entries().all(|e| {
            e.worker == worker
                || !e.txn.shares_var(x)
                || e.commit_tick() < t.get_tick()
                || t.commit_tick() < e.get_tick()
        })
    }

    /// Worker of the variable-sharing entry that ends last in load time.
    /// Appending there is always conflict-free under [`is_conflict`].
    fn latest_conflicting_worker(&self, x: &TransactionSpec) -> Option<usize> {
        self.entries()
            .filter(|e| e.txn.shares_var(x))
            .max_by_key(|e| (e.end, std::cmp::Reverse(e.worker)))
            .map(|e| e.worker)
    }

    fn ac_choice(&self, x: &TransactionSpec) -> usize {
        let mut conflicting: Vec<&ScheduledEntry> =
            self.entries().filter(|e| e.txn.shares_var(x)).collect();
        if conflicting.is_empty() {
            return self.least_loaded();
        }
        conflicting.sort_by_key(|e| e.txn.id);
        conflicting
            .iter()
            .map(|e| e.worker)
            .find(|&w| self.admissible(w, x))
            .or_else(|| self.latest_conflicting_worker(x))
            .expect("conflicting set is non-empty")
    }

    fn makespan_with(&self, worker: usize, x: &TransactionSpec) -> u64 {
        (0..self.n_workers())
            .map(|w| self.load(w) + if w == worker { x.duration } else { 0 })
            .max()
            .unwrap_or(0)
    }

    fn aac_choice(&self, x: &TransactionSpec) -> usize {
        (0..self.n_workers())
            .filter(|&w| self.admissible(w, x))
            .min_by_key(|&w| (self.makespan_with(w, x), w))
            .or_else(|| self.latest_conflicting_worker(x))
            .unwrap_or_else(|| self.least_loaded())
    }
}

pub fn assign_rr(batch: &[TransactionSpec], n: usize) -> Result<Assignment, ScheduleError> {
    let mut a = Assignment::empty(n)?;
    for (k, x) in batch.iter().enumerate() {
        a.push(k % n, x);
    }
    Ok(a)
}

pub fn assign_etlb(batch: &[TransactionSpec], n: usize) -> Result<Assignment, ScheduleError> {
    let mut a = Assignment::empty(n)?;
    for x in batch {
        let w = a.least_loaded();
        a.push(w, x);
    }
    Ok(a)
}

pub fn assign_ac(batch: &[TransactionSpec], n: usize) -> Result<Assignment, ScheduleError> {
    let mut a = Assignment::empty(n)?;
    for x in batch {
        let w = a.ac_choice(x);
        a.push(w, x);
    }
    Ok(a)
}

/// Greedy placement is not monotone, so AC's whole schedule is also kept as
/// a candidate and wins when strictly shorter.
pub fn assign_aac(batch: &[TransactionSpec], n: usize) -> Result<Assignment, ScheduleError> {
    let mut a = Assignment::empty(n)?;
    for x in batch {
        let w = a.aac_choice(x);
        a.push(w, x);
    }
    let ac = assign_ac(batch, n)?;
    if ac.makespan() < a.makespan() {
        return Ok(ac);
    }
    Ok(a)
}

pub fn assign(
    algorithm: Algorithm,
    batch: &[TransactionSpec],
    n: usize,
) -> Result<Assignment, ScheduleError> {
    match algorithm {
        Algorithm::Rr => assign_rr(batch, n),
        Algorithm::Etlb => assign_etlb(batch, n),
        Algorithm::Ac => assign_ac(batch, n),
        Algorithm::Aac => assign_aac(batch, n),
    }
}

/// Load and lock-step bookkeeping for an assignment.
///
/// Starting a transaction costs one tick, so worker `i` needs
/// `nt_i = load_i + queue_len_i` ticks; every worker runs `nt = max nt_i`
/// ticks and pads with `nt - nt_i` idle ticks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IterationPlan {
    pub assignment: Assignment,
    pub load: Vec<u64>,
    pub max_index: usize,
    pub nt_per_worker: Vec<u64>,
    pub nt: u64,
    pub idle_ticks: Vec<u64>,
}

impl IterationPlan {
    pub fn new(assignment: Assignment) -> Self {
        let load = assignment.loads();
        // lowest index among the maxima
        let max_index = (0..load.len())
            .min_by_key(|&i| (std::cmp::Reverse(load[i]), i))
            .unwrap_or(0);
        let nt_per_worker: Vec<u64> = load
            .iter()
            .zip(assignment.queues())
            .map(|(l, q)| l + q.len() as u64)
            .collect();
        let nt = nt_per_worker.iter().copied().max().unwrap_or(0);
        let idle_ticks = nt_per_worker.iter().map(|ni| nt - ni).collect();
        IterationPlan {
            assignment,
            load,
            max_index,
            nt_per_worker,
            nt,
            idle_ticks,
        }
    }

    /// This iteration's makespan contribution, `load[max_index]`.
    pub fn makespan(&self) -> u64 {
        self.load.get(self.max_index).copied().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::{BuiltinWorkload, TVarId, Workload};

    fn ids(a: &Assignment) -> Vec<Vec<usize>> {
        a.txn_ids()
    }

    fn cw1() -> Workload {
        BuiltinWorkload::Cw1.workload()
    }

    fn txn(id: usize, var: usize, d: u64) -> TransactionSpec {
        TransactionSpec::new(id, [TVarId(var)], d)
    }

    fn entry(t: TransactionSpec, start: u64) -> ScheduledEntry {
        let end = start + t.duration;
        ScheduledEntry {
            txn: t,
            worker: 0,
            slot: 0,
            start,
            end,
        }
    }

    #[test]
    fn conflict_predicate_cases() {
        let t0 = txn(0, 0, 50);
        let t1 = txn(1, 0, 10);
        let scheduled = [entry(t0.clone(), 0)];
        assert!(is_conflict(&t1, 0, 10, &scheduled));
        assert!(!is_conflict(&t0, 0, 50, &scheduled));
        assert!(!is_conflict(&t1, 50, 60, &scheduled));
        // different variable, same time
        assert!(!is_conflict(&txn(2, 1, 10), 0, 10, &scheduled));
    }

    #[test]
    fn rr_cw1_two_workers() {
        let a = assign_rr(cw1().transactions(), 2).unwrap();
        assert_eq!(ids(&a), vec![vec![0, 2, 4], vec![1, 3]]);
    }

    #[test]
    fn rr_requeued_batch_reindexes() {
        let w = BuiltinWorkload::Cw2.workload();
        let batch = [w.transactions()[0].clone(), w.transactions()[2].clone()];
        let a = assign_rr(&batch, 3).unwrap();
        assert_eq!(ids(&a), vec![vec![0], vec![2], vec![]]);
    }

    #[test]
    fn rr_single_txn() {
        let a = assign_rr(&[txn(0, 0, 3)], 4).unwrap();
        assert_eq!(ids(&a), vec![vec![0], vec![], vec![], vec![]]);
    }

    #[test]
    fn no_workers_is_an_error() {
        for alg in Algorithm::ALL {
            assert_eq!(assign(alg, &[], 0), Err(ScheduleError::NoWorkers));
        }
    }

    #[test]
    fn etlb_cfw() {
        let cfw = BuiltinWorkload::Cfw.workload();
        let a = assign_etlb(cfw.transactions(), 2).unwrap();
        assert_eq!(ids(&a), vec![vec![0], vec![1, 2, 3, 4]]);
        let a = assign_etlb(cfw.transactions(), 3).unwrap();
        assert_eq!(ids(&a), vec![vec![0], vec![1, 3], vec![2, 4]]);
        assert_eq!(a.makespan(), 50);
        assert!(assign_etlb(&[], 3).unwrap().is_empty());
    }

    #[test]
    fn ac_cw1_and_cw2() {
        let a = assign_ac(cw1().transactions(), 2).unwrap();
        assert_eq!(ids(&a), vec![vec![0, 1], vec![2, 3, 4]]);
        assert_eq!(a.makespan(), 60);
        for n in 1..=4 {
            let a = assign_ac(BuiltinWorkload::Cw2.workload().transactions(), n).unwrap();
            assert_eq!(ids(&a)[0], vec![0, 1, 2, 3, 4]);
            assert_eq!(a.makespan(), 90);
        }
        let cfw = BuiltinWorkload::Cfw.workload();
        assert_eq!(
            assign_ac(cfw.transactions(), 2).unwrap(),
            assign_etlb(cfw.transactions(), 2).unwrap()
        );
    }

    #[test]
    fn aac_builtin_workloads() {
        assert_eq!(assign_aac(cw1().transactions(), 3).unwrap().makespan(), 60);
        let a = assign_aac(BuiltinWorkload::Cw2.workload().transactions(), 4).unwrap();
        assert_eq!(ids(&a)[0].len(), 5);
        assert_eq!(a.makespan(), 90);
        assert_eq!(
            assign_aac(BuiltinWorkload::Cfw.workload().transactions(), 2)
                .unwrap()
                .makespan(),
            50
        );
    }

    #[test]
    fn aac_avoids_tick_race() {
        // Load-time-disjoint but tick-overlapping placement for T4 on worker 0
        // would race with T3 on worker 1.
        let batch = [
            txn(0, 3, 3),
            txn(1, 4, 1),
            txn(2, 4, 1),
            txn(3, 0, 1),
            txn(4, 0, 1),
        ];
        let a = assign_aac(&batch, 2).unwrap();
        let e3 = a.entries().find(|e| e.txn.id.0 == 3).unwrap();
        let e4 = a.entries().find(|e| e.txn.id.0 == 4).unwrap();
        assert!(e3.worker == e4.worker || e3.commit_tick() < e4.get_tick());
    }

    #[test]
    fn plan_formulas() {
        let cfw = BuiltinWorkload::Cfw.workload();
        let plan = IterationPlan::new(assign_etlb(cfw.transactions(), 2).unwrap());
        assert_eq!(plan.load, vec![50, 40]);
        assert_eq!(plan.nt_per_worker, vec![51, 44]);
        assert_eq!(plan.nt, 51);
        assert_eq!(plan.idle_ticks, vec![0, 7]);
        assert_eq!(plan.max_index, 0);

        let plan = IterationPlan::new(assign_rr(&[txn(0, 0, 10), txn(1, 0, 10)], 1).unwrap());
        assert_eq!(
            (plan.load.clone(), plan.nt_per_worker.clone(), plan.nt),
            (vec![20], vec![22], 22)
        );
        assert_eq!(plan.idle_ticks, vec![0]);

        let plan = IterationPlan::new(Assignment::empty(3).unwrap());
        assert_eq!(plan.load, vec![0, 0, 0]);
        assert_eq!(plan.nt, 0);
        assert_eq!(plan.makespan(), 0);
    }

    #[test]
    fn entry_ticks() {
        let cw1 = cw1();
        let a = assign_rr(cw1.transactions(), 2).unwrap();
        let t0 = &a.queue(0)[0];
        assert_eq!((t0.get_tick(), t0.commit_tick()), (1, 51));
        let t3 = &a.queue(1)[1];
        assert_eq!((t3.get_tick(), t3.commit_tick()), (12, 22));
    }

    #[test]
    fn algorithm_names_parse() {
        for alg in Algorithm::ALL {
            assert_eq!(alg.name().parse::<Algorithm>().unwrap(), alg);
        }
        assert!("fifo".parse::<Algorithm>().is_err());
    }
}
