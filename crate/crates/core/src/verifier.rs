//! Bounded exhaustive exploration of STM service orders.
//!
//! The schedulers stay deterministic; the only nondeterminism is the order
//! in which the STM serves requests that arrive on the same tick. The
//! explorer walks every such order depth-first, deduplicating states on a
//! canonical key (versions counted modulo the transaction count), and checks:
//!
//! 1. deadlock freedom: every reachable non-final state has a successor;
//! 2. some path reaches Done (all transactions committed);
//! 3. every maximal path reaches Done and no cycle is reachable;
//! 4. the maximal abort count over Done paths;
//! 5. the maximal makespan + abort count over Done paths.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::VerifyError;
use crate::scheduling::{assign, Algorithm, IterationPlan};
use crate::simulator::{ExecKey, IterationExec, OrderPolicy, TraceEvent};
use crate::stm::{deterministic_order, CommitRule, Reply, ServiceOrder, VersionDict, VersionMode};
use crate::workload::{TxnId, Workload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Assertion {
    DeadlockFree = 1,
    ReachesDone = 2,
    Terminates = 3,
    MaxAborts = 4,
    MaxMakespanPlusAborts = 5,
}

impl Assertion {
    pub const ALL: [Assertion; 5] = [
        Assertion::DeadlockFree,
        Assertion::ReachesDone,
        Assertion::Terminates,
        Assertion::MaxAborts,
        Assertion::MaxMakespanPlusAborts,
    ];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Option<Self> {
        Assertion::ALL.into_iter().find(|a| a.number() == n)
    }
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self {
            Assertion::DeadlockFree => "deadlock free",
            Assertion::ReachesDone => "reaches Done",
            Assertion::Terminates => "always eventually complete",
            Assertion::MaxAborts => "max na",
            Assertion::MaxMakespanPlusAborts => "max ms+na",
        };
        write!(f, "assertion {} ({what})", self.number())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Abort count.
    Na,
    /// Makespan plus abort count.
    Msna,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Valid,
    Violated,
}

/// A path through the state space: one service order per tick that had two
/// or more requests, plus the events observed along it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub choices: Vec<Vec<usize>>,
    pub events: Vec<TraceEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplorationReport {
    pub assertion: Assertion,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    pub states_visited: usize,
    pub branches_explored: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExploreConfig {
    pub max_states: usize,
    pub max_txns: usize,
    /// Visit service orders in reverse; extremal values must not change.
    pub reverse_order: bool,
    pub rule: CommitRule,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        ExploreConfig {
            max_states: 2_000_000,
            max_txns: 8,
            reverse_order: false,
            rule: CommitRule::Optimistic,
        }
    }
}

#[derive(Debug, Clone)]
struct State {
    iteration: usize,
    batch: Vec<TxnId>,
    /// `None` at an iteration boundary, before `batch` is scheduled.
    exec: Option<IterationExec>,
    dict: VersionDict,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct StateKey {
    batch: Vec<TxnId>,
    exec: Option<ExecKey>,
    versions: Vec<u64>,
}

impl State {
    fn key(&self) -> StateKey {
        StateKey {
            batch: self.batch.clone(),
            exec: self.exec.as_ref().map(IterationExec::key),
            versions: self.dict.versions().to_vec(),
        }
    }

    fn is_final(&self) -> bool {
        self.exec.is_none() && self.batch.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Edge {
    /// Serve the next tick's requests in this order.
    Tick(Vec<usize>),
    /// The iteration is over; re-queue the aborted transactions.
    Finish,
}

struct Succ {
    edge: Edge,
    state: State,
    aborts: u64,
    makespan: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct NodeInfo {
    max_na: Option<u64>,
    max_msna: Option<u64>,
    reaches_done: bool,
    all_done: bool,
}

/// What walking one path produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FollowedPath {
    pub na: u64,
    pub ms: u64,
    pub done: bool,
    /// Every state along the path was visited by the exhaustive search.
    pub all_states_explored: bool,
    pub choices: Vec<Vec<usize>>,
}

/// Result of one exhaustive search, from which all five assertions are read.
#[derive(Debug, Clone)]
pub struct Exploration {
    pub states_visited: usize,
    pub branches_explored: usize,
    pub max_na: Option<u64>,
    pub max_msna: Option<u64>,
    pub reaches_done: bool,
    pub all_paths_done: bool,
    deadlock: Option<Vec<Edge>>,
    cycle: Option<Vec<Edge>>,
    na_path: Option<Vec<Edge>>,
    msna_path: Option<Vec<Edge>>,
    witnesses: HashMap<&'static str, Witness>,
}

pub struct Explorer<'w> {
    workload: &'w Workload,
    algorithm: Algorithm,
    workers: usize,
    config: ExploreConfig,
    plans: HashMap<Vec<TxnId>, Arc<IterationPlan>>,
    memo: HashMap<StateKey, NodeInfo>,
    on_stack: HashSet<StateKey>,
    path: Vec<Edge>,
    branches: usize,
    deadlock: Option<Vec<Edge>>,
    cycle: Option<Vec<Edge>>,
    stuck: Option<Vec<Edge>>,
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                go(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::with_capacity(k), &mut vec![false; k], &mut out);
    out
}

fn max_opt(a: Option<u64>, b: Option<u64>) -> Option<u64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

impl<'w> Explorer<'w> {
    pub fn new(
        workload: &'w Workload,
        algorithm: Algorithm,
        workers: usize,
        config: ExploreConfig,
    ) -> Result<Self, VerifyError> {
        if workload.len() > config.max_txns {
            return Err(VerifyError::WorkloadTooLarge {
                found: workload.len(),
                bound: config.max_txns,
            });
        }
        // surface a bad worker count before exploring
        assign(algorithm, &[], workers).map_err(crate::error::SimError::from)?;
        Ok(Explorer {
            workload,
            algorithm,
            workers,
            config,
            plans: HashMap::new(),
            memo: HashMap::new(),
            on_stack: HashSet::new(),
            path: Vec::new(),
            branches: 0,
            deadlock: None,
            cycle: None,
            stuck: None,
        })
    }

    fn initial(&self) -> State {
        let modulus = self.workload.len().max(1) as u64;
        State {
            iteration: 0,
            batch: self.workload.transactions().iter().map(|t| t.id).collect(),
            exec: None,
            dict: VersionDict::new(self.workload.var_count(), VersionMode::Modulo(modulus))
                .with_commit_rule(self.config.rule),
        }
    }

    fn plan(&mut self, batch: &[TxnId]) -> Result<Arc<IterationPlan>, VerifyError> {
        if let Some(p) = self.plans.get(batch) {
            return Ok(Arc::clone(p));
        }
        let txns: Vec<_> = batch
            .iter()
            .map(|&id| self.workload.txn(id).clone())
            .collect();
        let assignment =
            assign(self.algorithm, &txns, self.workers).map_err(crate::error::SimError::from)?;
        let plan = Arc::new(IterationPlan::new(assignment));
        self.plans.insert(batch.to_vec(), Arc::clone(&plan));
        Ok(plan)
    }

    /// The execution to step from, and the makespan charged for starting it.
    fn running(&mut self, s: &State) -> Result<(IterationExec, u64), VerifyError> {
        match &s.exec {
            Some(exec) => Ok((exec.clone(), 0)),
            None => {
                let plan = self.plan(&s.batch)?;
                let ms = plan.makespan();
                Ok((IterationExec::new(plan, s.iteration), ms))
            }
        }
    }

    /// Which edges leave `s`: `None` for a final state.
    fn edges(&mut self, s: &State) -> Result<Vec<Edge>, VerifyError> {
        if s.is_final() {
            return Ok(Vec::new());
        }
        let (mut exec, _) = self.running(s)?;
        Ok(match exec.advance() {
            None => vec![Edge::Finish],
            Some(reqs) => {
                let mut perms = permutations(reqs.len());
                if self.config.reverse_order {
                    perms.reverse();
                }
                perms.into_iter().map(Edge::Tick).collect()
            }
        })
    }

    fn apply(
        &mut self,
        s: &State,
        edge: &Edge,
        trace: Option<&mut Vec<TraceEvent>>,
    ) -> Result<Succ, VerifyError> {
        let (mut exec, makespan) = self.running(s)?;
        let mut dict = s.dict.clone();
        match (exec.advance(), edge) {
            (None, Edge::Finish) => {
                let result = exec.result();
                Ok(Succ {
                    edge: Edge::Finish,
                    state: State {
                        iteration: s.iteration + 1,
                        batch: result.aborted,
                        exec: None,
                        dict,
                    },
                    aborts: 0,
                    makespan,
                })
            }
            (Some(reqs), Edge::Tick(order)) => {
                let replies = dict
                    .service_tick_batch(&reqs, &ServiceOrder::Explicit(order.clone()))
                    .map_err(crate::error::SimError::from)?;
                let aborts = replies
                    .iter()
                    .filter(|r| matches!(r, Reply::Commit(c) if !c.committed))
                    .count() as u64;
                exec.complete_tick(&replies, trace);
                Ok(Succ {
                    edge: edge.clone(),
                    state: State {
                        iteration: s.iteration,
                        batch: s.batch.clone(),
                        exec: Some(exec),
                        dict,
                    },
                    aborts,
                    makespan,
                })
            }
            _ => unreachable!("edge does not match the state"),
        }
    }

    fn successors(&mut self, s: &State) -> Result<Vec<Succ>, VerifyError> {
        let edges = self.edges(s)?;
        if edges.len() > 1 {
            self.branches += edges.len();
        }
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(edges.len());
        for e in edges {
            let succ = self.apply(s, &e, None)?;
            // different orders often lead to the same state
            if seen.insert((succ.state.key(), succ.aborts)) {
                out.push(succ);
            }
        }
        Ok(out)
    }

    fn visit(&mut self, s: State) -> Result<NodeInfo, VerifyError> {
        let key = s.key();
        if let Some(info) = self.memo.get(&key) {
            return Ok(*info);
        }
        if self.on_stack.contains(&key) {
            if self.cycle.is_none() {
                self.cycle = Some(self.path.clone());
            }
            return Ok(NodeInfo::default());
        }
        if self.memo.len() + self.on_stack.len() >= self.config.max_states {
            return Err(VerifyError::StateBudgetExceeded(self.config.max_states));
        }
        if s.is_final() {
            let info = NodeInfo {
                max_na: Some(0),
                max_msna: Some(0),
                reaches_done: true,
                all_done: true,
            };
            self.memo.insert(key, info);
            return Ok(info);
        }

        self.on_stack.insert(key.clone());
        let succs = self.successors(&s)?;
        let mut info = NodeInfo {
            all_done: true,
            ..NodeInfo::default()
        };
        if succs.is_empty() {
            info.all_done = false;
            if self.deadlock.is_none() {
                self.deadlock = Some(self.path.clone());
            }
        }
        for succ in succs {
            self.path.push(succ.edge.clone());
            let sub = self.visit(succ.state)?;
            self.path.pop();
            info.max_na = max_opt(info.max_na, sub.max_na.map(|v| v + succ.aborts));
            info.max_msna = max_opt(
                info.max_msna,
                sub.max_msna.map(|v| v + succ.aborts + succ.makespan),
            );
            info.reaches_done |= sub.reaches_done;
            info.all_done &= sub.all_done;
        }
        if !info.all_done && info.reaches_done && self.stuck.is_none() && self.cycle.is_none() {
            // a sibling branch fails to finish; recorded where first noticed
            self.stuck = self.path.clone().into();
        }
        self.on_stack.remove(&key);
        self.memo.insert(key, info);
        Ok(info)
    }

    /// Follows the extremal objective from the root, choosing the first
    /// successor that attains the memoized maximum.
    fn extremal_path(&mut self, objective: Objective) -> Result<Option<Vec<Edge>>, VerifyError> {
        let mut s = self.initial();
        let mut path = Vec::new();
        let value_of = |info: &NodeInfo| match objective {
            Objective::Na => info.max_na,
            Objective::Msna => info.max_msna,
        };
        let Some(mut target) = self.memo.get(&s.key()).and_then(value_of) else {
            return Ok(None);
        };
        while !s.is_final() {
            let mut next = None;
            for succ in self.successors(&s)? {
                let gain = match objective {
                    Objective::Na => succ.aborts,
                    Objective::Msna => succ.aborts + succ.makespan,
                };
                let sub = self.memo.get(&succ.state.key()).and_then(value_of);
                if sub.is_some_and(|v| v + gain == target) {
                    target -= gain;
                    next = Some(succ);
                    break;
                }
            }
            let succ = next.expect("memoized maximum is attained by some successor");
            path.push(succ.edge);
            s = succ.state;
        }
        Ok(Some(path))
    }

    /// Replays a path with event recording.
    fn replay(&mut self, path: &[Edge]) -> Result<Witness, VerifyError> {
        let mut s = self.initial();
        let mut events = Vec::new();
        let mut choices = Vec::new();
        for edge in path {
            if let Edge::Tick(order) = edge {
                if order.len() > 1 {
                    choices.push(order.clone());
                }
            }
            s = self.apply(&s, edge, Some(&mut events))?.state;
        }
        Ok(Witness { choices, events })
    }

    pub fn explore(&mut self) -> Result<Exploration, VerifyError> {
        self.memo.clear();
        self.branches = 0;
        let root = self.initial();
        let info = self.visit(root)?;
        let (na_path, msna_path) = if self.cycle.is_none() {
            (
                self.extremal_path(Objective::Na)?,
                self.extremal_path(Objective::Msna)?,
            )
        } else {
            (None, None)
        };
        let mut witnesses = HashMap::new();
        for (name, path) in [
            ("deadlock", self.deadlock.clone()),
            ("cycle", self.cycle.clone()),
            ("stuck", self.stuck.clone()),
            ("na", na_path.clone()),
            ("msna", msna_path.clone()),
        ] {
            if let Some(p) = path {
                witnesses.insert(name, self.replay(&p)?);
            }
        }
        Ok(Exploration {
            states_visited: self.memo.len(),
            branches_explored: self.branches,
            max_na: info.max_na,
            max_msna: info.max_msna,
            reaches_done: info.reaches_done,
            all_paths_done: info.all_done && self.cycle.is_none(),
            deadlock: self.deadlock.clone(),
            cycle: self.cycle.clone(),
            na_path,
            msna_path,
            witnesses,
        })
    }

    /// Walks the single path chosen by `policy`, checking each state against
    /// the states visited by the last [`Explorer::explore`].
    pub fn follow(&mut self, policy: &mut dyn OrderPolicy) -> Result<FollowedPath, VerifyError> {
        let mut s = self.initial();
        let (mut na, mut ms) = (0, 0);
        let mut choices = Vec::new();
        let mut all_explored = self.memo.contains_key(&s.key());
        let limit = self.workload.len() + 1;
        while !s.is_final() && s.iteration <= limit {
            let (mut exec, _) = self.running(&s)?;
            let edge = match exec.advance() {
                None => Edge::Finish,
                Some(reqs) => {
                    let order = policy.order(s.iteration, exec.tick(), &reqs)?;
                    let order = match order {
                        ServiceOrder::Deterministic => deterministic_order(&reqs),
                        ServiceOrder::Explicit(o) => o,
                    };
                    if reqs.len() > 1 {
                        choices.push(order.clone());
                    }
                    Edge::Tick(order)
                }
            };
            let succ = self.apply(&s, &edge, None)?;
            na += succ.aborts;
            ms += succ.makespan;
            s = succ.state;
            all_explored &= self.memo.contains_key(&s.key());
        }
        Ok(FollowedPath {
            na,
            ms,
            done: s.is_final(),
            all_states_explored: all_explored,
            choices,
        })
    }
}

impl Exploration {
    pub fn report(&self, assertion: Assertion) -> ExplorationReport {
        let (verdict, value, witness) = match assertion {
            Assertion::DeadlockFree => match &self.deadlock {
                None => (Verdict::Valid, None, None),
                Some(_) => (Verdict::Violated, None, self.witnesses.get("deadlock")),
            },
            Assertion::ReachesDone => {
                if self.reaches_done {
                    (Verdict::Valid, None, None)
                } else {
                    (Verdict::Violated, None, self.counterexample())
                }
            }
            Assertion::Terminates => {
                if self.all_paths_done {
                    (Verdict::Valid, None, None)
                } else {
                    (Verdict::Violated, None, self.counterexample())
                }
            }
            Assertion::MaxAborts => self.extremal(self.max_na, "na"),
            Assertion::MaxMakespanPlusAborts => self.extremal(self.max_msna, "msna"),
        };
        ExplorationReport {
            assertion,
            verdict,
            value,
            witness: witness.cloned(),
            states_visited: self.states_visited,
            branches_explored: self.branches_explored,
        }
    }

    fn counterexample(&self) -> Option<&Witness> {
        ["cycle", "stuck", "deadlock"]
            .iter()
            .find_map(|k| self.witnesses.get(k))
    }

    fn extremal(&self, value: Option<u64>, key: &str) -> (Verdict, Option<u64>, Option<&Witness>) {
        match value {
            Some(v) if self.cycle.is_none() => (Verdict::Valid, Some(v), self.witnesses.get(key)),
            _ => (Verdict::Violated, None, self.counterexample()),
        }
    }

    pub fn reports(&self) -> Vec<ExplorationReport> {
        Assertion::ALL.iter().map(|&a| self.report(a)).collect()
    }

    /// Choices of the witness path for an objective.
    pub fn witness(&self, objective: Objective) -> Option<&Witness> {
        self.witnesses.get(match objective {
            Objective::Na => "na",
            Objective::Msna => "msna",
        })
    }

    pub fn has_cycle(&self) -> bool {
        self.cycle.is_some()
    }

    pub fn extremal_choices(&self, objective: Objective) -> Option<usize> {
        match objective {
            Objective::Na => self.na_path.as_ref().map(Vec::len),
            Objective::Msna => self.msna_path.as_ref().map(Vec::len),
        }
    }
}

fn exploration(
    w: &Workload,
    alg: Algorithm,
    n: usize,
    config: &ExploreConfig,
) -> Result<Exploration, VerifyError> {
    Explorer::new(w, alg, n, *config)?.explore()
}

pub fn explore(
    w: &Workload,
    alg: Algorithm,
    n: usize,
    objective: Objective,
    config: &ExploreConfig,
) -> Result<ExplorationReport, VerifyError> {
    let assertion = match objective {
        Objective::Na => Assertion::MaxAborts,
        Objective::Msna => Assertion::MaxMakespanPlusAborts,
    };
    Ok(exploration(w, alg, n, config)?.report(assertion))
}

pub fn check_deadlock_free(
    w: &Workload,
    alg: Algorithm,
    n: usize,
    config: &ExploreConfig,
) -> Result<ExplorationReport, VerifyError> {
    Ok(exploration(w, alg, n, config)?.report(Assertion::DeadlockFree))
}

pub fn check_reaches_done(
    w: &Workload,
    alg: Algorithm,
    n: usize,
    config: &ExploreConfig,
) -> Result<ExplorationReport, VerifyError> {
    Ok(exploration(w, alg, n, config)?.report(Assertion::ReachesDone))
}

pub fn check_termination(
    w: &Workload,
    alg: Algorithm,
    n: usize,
    config: &ExploreConfig,
) -> Result<ExplorationReport, VerifyError> {
    Ok(exploration(w, alg, n, config)?.report(Assertion::Terminates))
}

pub fn max_makespan_plus_aborts(
    w: &Workload,
    alg: Algorithm,
    n: usize,
    config: &ExploreConfig,
) -> Result<ExplorationReport, VerifyError> {
    Ok(exploration(w, alg, n, config)?.report(Assertion::MaxMakespanPlusAborts))
}

/// All five assertions from a single exploration.
pub fn verify_all(
    w: &Workload,
    alg: Algorithm,
    n: usize,
    config: &ExploreConfig,
) -> Result<Vec<ExplorationReport>, VerifyError> {
    Ok(exploration(w, alg, n, config)?.reports())
}
