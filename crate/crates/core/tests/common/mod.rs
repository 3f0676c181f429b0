//! Test-only reference implementations, written directly from the model
//! definitions and sharing no code with the library beyond the input types.

#![allow(dead_code)]

use proptest::prelude::*;
use pstm_sched::{Algorithm, Workload};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Txn {
    pub id: usize,
    pub vars: Vec<usize>,
    pub dur: u64,
}

impl Txn {
    fn shares(&self, other: &Txn) -> bool {
        self.vars.iter().any(|v| other.vars.contains(v))
    }
}

pub fn txns(w: &Workload) -> Vec<Txn> {
    w.transactions()
        .iter()
        .map(|t| Txn {
            id: t.id.0,
            vars: t.vars.iter().map(|v| v.0).collect(),
            dur: t.duration,
        })
        .collect()
}

/// A placed transaction: queue position and load-time interval.
#[derive(Debug, Clone)]
struct Placed {
    txn: Txn,
    worker: usize,
    slot: usize,
    start: u64,
}

impl Placed {
    fn end(&self) -> u64 {
        self.start + self.txn.dur
    }
    fn get(&self) -> u64 {
        self.start + self.slot as u64 + 1
    }
    fn commit(&self) -> u64 {
        self.get() + self.txn.dur
    }
}

/// The overlap predicate of the conflict test, verbatim.
pub fn overlaps(s: u64, e: u64, t1: u64, t2: u64) -> bool {
    (s < t2 && t2 <= e) || (t1 < e && e <= t2)
}

struct Board {
    n: usize,
    placed: Vec<Placed>,
}

impl Board {
    fn load(&self, w: usize) -> u64 {
        self.placed
            .iter()
            .filter(|p| p.worker == w)
            .map(|p| p.txn.dur)
            .sum()
    }
    fn candidate(&self, w: usize, x: &Txn) -> Placed {
        Placed {
            txn: x.clone(),
            worker: w,
            slot: self.placed.iter().filter(|p| p.worker == w).count(),
            start: self.load(w),
        }
    }
    fn least_loaded(&self) -> usize {
        let mut best = 0;
        for w in 1..self.n {
            if self.load(w) < self.load(best) {
                best = w;
            }
        }
        best
    }
    fn ok(&self, w: usize, x: &Txn) -> bool {
        let c = self.candidate(w, x);
        for p in &self.placed {
            if p.txn.id == x.id || !p.txn.shares(x) {
                continue;
            }
            if overlaps(p.start, p.end(), c.start, c.end()) {
                return false;
            }
            if p.worker != w && !(p.commit() < c.get() || c.commit() < p.get()) {
                return false;
            }
        }
        true
    }
    fn latest_sharing(&self, x: &Txn) -> Option<usize> {
        let mut best: Option<&Placed> = None;
        for p in self.placed.iter().filter(|p| p.txn.shares(x)) {
            // strictly later end wins; equal ends keep the lower worker
            let better = match best {
                None => true,
                Some(b) => p.end() > b.end() || (p.end() == b.end() && p.worker < b.worker),
            };
            if better {
                best = Some(p);
            }
        }
        best.map(|p| p.worker)
    }
    fn makespan_if(&self, w: usize, x: &Txn) -> u64 {
        (0..self.n)
            .map(|v| self.load(v) + if v == w { x.dur } else { 0 })
            .max()
            .unwrap()
    }
    fn put(&mut self, w: usize, x: &Txn) {
        let c = self.candidate(w, x);
        self.placed.push(c);
    }
    fn makespan(&self) -> u64 {
        (0..self.n).map(|w| self.load(w)).max().unwrap_or(0)
    }
    fn queues(&self) -> Vec<Vec<Txn>> {
        let mut q = vec![Vec::new(); self.n];
        for p in &self.placed {
            q[p.worker].push(p.txn.clone());
        }
        q
    }
}

fn ac(batch: &[Txn], n: usize) -> Board {
    let mut b = Board {
        n,
        placed: Vec::new(),
    };
    for x in batch {
        let mut sharing: Vec<(usize, usize)> = b
            .placed
            .iter()
            .filter(|p| p.txn.shares(x))
            .map(|p| (p.txn.id, p.worker))
            .collect();
        sharing.sort();
        let w = if sharing.is_empty() {
            b.least_loaded()
        } else {
            sharing
                .iter()
                .map(|&(_, w)| w)
                .find(|&w| b.ok(w, x))
                .unwrap_or_else(|| b.latest_sharing(x).unwrap())
        };
        b.put(w, x);
    }
    b
}

fn aac(batch: &[Txn], n: usize) -> Board {
    let mut b = Board {
        n,
        placed: Vec::new(),
    };
    for x in batch {
        let mut best: Option<(u64, usize)> = None;
        for w in 0..n {
            if b.ok(w, x) {
                let m = b.makespan_if(w, x);
                if best.is_none_or(|(bm, _)| m < bm) {
                    best = Some((m, w));
                }
            }
        }
        let w = match best {
            Some((_, w)) => w,
            None => b.latest_sharing(x).unwrap_or_else(|| b.least_loaded()),
        };
        b.put(w, x);
    }
    let alt = ac(batch, n);
    if alt.makespan() < b.makespan() {
        alt
    } else {
        b
    }
}

/// Per-worker queues chosen by `alg` for `batch` on `n` workers.
pub fn schedule(alg: Algorithm, batch: &[Txn], n: usize) -> Vec<Vec<Txn>> {
    match alg {
        Algorithm::Rr => {
            let mut q = vec![Vec::new(); n];
            for (k, x) in batch.iter().enumerate() {
                q[k % n].push(x.clone());
            }
            q
        }
        Algorithm::Etlb => {
            let mut b = Board {
                n,
                placed: Vec::new(),
            };
            for x in batch {
                let w = b.least_loaded();
                b.put(w, x);
            }
            b.queues()
        }
        Algorithm::Ac => ac(batch, n).queues(),
        Algorithm::Aac => aac(batch, n).queues(),
    }
}

#[derive(Debug, Clone, Default)]
pub struct OracleRun {
    pub ms: u64,
    pub na: u64,
    pub iterations: usize,
    pub queues: Vec<Vec<Vec<usize>>>,
    /// Per variable, the versions presented by successful commits, in order.
    pub history: Vec<Vec<u64>>,
}

/// Event-list simulation of one iteration: every GetVars and CommitVars
/// tick is computed up front from the queue layout, then the events are
/// served in (tick, commits first, worker) order.
fn iterate(queues: &[Vec<Txn>], versions: &mut [u64], history: &mut [Vec<u64>]) -> Vec<usize> {
    // (tick, kind, worker, slot) with kind 0 = commit, 1 = get
    let mut events = Vec::new();
    for (w, q) in queues.iter().enumerate() {
        let mut start = 0;
        for (slot, t) in q.iter().enumerate() {
            let get = start + slot as u64 + 1;
            events.push((get, 1, w, slot));
            events.push((get + t.dur, 0, w, slot));
            start += t.dur;
        }
    }
    events.sort();
    let mut read: std::collections::HashMap<(usize, usize), Vec<u64>> = Default::default();
    let mut aborted = Vec::new();
    for (_, kind, w, slot) in events {
        let t = &queues[w][slot];
        if kind == 1 {
            read.insert((w, slot), t.vars.iter().map(|&v| versions[v]).collect());
        } else {
            let seen = &read[&(w, slot)];
            if t.vars.iter().zip(seen).all(|(&v, &s)| versions[v] == s) {
                for (&v, &s) in t.vars.iter().zip(seen) {
                    history[v].push(s);
                    versions[v] += 1;
                }
            } else {
                aborted.push(t.id);
            }
        }
    }
    aborted.sort();
    aborted
}

pub fn simulate(w: &Workload, alg: Algorithm, n: usize) -> OracleRun {
    let all = txns(w);
    let mut versions = vec![0; w.var_count()];
    let mut run = OracleRun {
        history: vec![Vec::new(); w.var_count()],
        ..Default::default()
    };
    let mut pending = all.clone();
    while !pending.is_empty() {
        assert!(run.iterations <= all.len(), "oracle did not terminate");
        let queues = schedule(alg, &pending, n);
        run.ms += queues
            .iter()
            .map(|q| q.iter().map(|t| t.dur).sum::<u64>())
            .max()
            .unwrap();
        run.queues.push(
            queues
                .iter()
                .map(|q| q.iter().map(|t| t.id).collect())
                .collect(),
        );
        let aborted = iterate(&queues, &mut versions, &mut run.history);
        run.na += aborted.len() as u64;
        pending = aborted.into_iter().map(|id| all[id].clone()).collect();
        run.iterations += 1;
    }
    run
}

/// Longest path through the execution dag: a node per executed transaction,
/// an edge from each to its queue successor, and a barrier after every
/// iteration that precedes each worker's first transaction of the next.
pub fn critical_path(iterations: &[Vec<Vec<u64>>]) -> u64 {
    let mut barrier = 0;
    for queues in iterations {
        let mut finish = barrier;
        for q in queues {
            let mut t = barrier;
            for &d in q {
                t += d;
            }
            finish = finish.max(t);
        }
        barrier = finish;
    }
    barrier
}

/// Random workloads within the property-suite bounds.
pub fn arb_workload(
    max_txns: usize,
    max_vars: usize,
    max_dur: u64,
) -> impl Strategy<Value = Workload> {
    (1..=max_vars).prop_flat_map(move |nv| {
        let txn = (
            proptest::sample::subsequence((0..nv).collect::<Vec<_>>(), 1..=nv),
            1..=max_dur,
        );
        proptest::collection::vec(txn, 1..=max_txns).prop_map(move |specs| {
            let names: Vec<String> = (0..nv)
                .map(|i| ((b'A' + i as u8) as char).to_string())
                .collect();
            let transactions = specs
                .into_iter()
                .enumerate()
                .map(|(id, (vars, d))| {
                    pstm_sched::TransactionSpec::new(
                        id,
                        vars.into_iter().map(pstm_sched::TVarId),
                        d,
                    )
                })
                .collect();
            Workload::new(names, transactions).expect("generated workload is valid")
        })
    })
}

/// Random workloads where every transaction touches exactly one variable.
pub fn arb_single_var_workload(
    max_txns: usize,
    max_vars: usize,
    max_dur: u64,
) -> impl Strategy<Value = Workload> {
    proptest::collection::vec((0..max_vars, 1..=max_dur), 1..=max_txns).prop_map(move |specs| {
        let names: Vec<String> = (0..max_vars)
            .map(|i| ((b'A' + i as u8) as char).to_string())
            .collect();
        let transactions = specs
            .into_iter()
            .enumerate()
            .map(|(id, (v, d))| pstm_sched::TransactionSpec::new(id, [pstm_sched::TVarId(v)], d))
            .collect();
        Workload::new(names, transactions).expect("generated workload is valid")
    })
}
