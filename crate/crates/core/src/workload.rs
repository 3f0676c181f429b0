//! Transactions, workloads, the built-in test workloads and the
//! level-of-parallelism measure.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::WorkloadError;

/// Index of a t-variable within a workload. Dense in `0..var_count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TVarId(pub usize);

/// Arrival index of a transaction within a workload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TxnId(pub usize);

impl fmt::Display for TxnId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "T{}", self.0)
    }
}

/// One transaction: the t-variables it reads and writes, and how long its
/// body runs (in time units, milliseconds by convention).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TransactionSpec {
    pub id: TxnId,
    /// Sorted, distinct.
    pub vars: Vec<TVarId>,
    pub duration: u64,
}

impl TransactionSpec {
    pub fn new(id: usize, vars: impl IntoIterator<Item = TVarId>, duration: u64) -> Self {
        let vars: BTreeSet<TVarId> = vars.into_iter().collect();
        TransactionSpec {
            id: TxnId(id),
            vars: vars.into_iter().collect(),
            duration,
        }
    }

    /// True if the two transactions name at least one common t-variable.
    pub fn shares_var(&self, other: &TransactionSpec) -> bool {
        // both sides are sorted
        let (mut i, mut j) = (0, 0);
        while i < self.vars.len() && j < other.vars.len() {
            match self.vars[i].cmp(&other.vars[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }
}

/// A workload invariant that does not hold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    NonDenseIds { position: usize, found: TxnId },
    UnknownVar { txn: TxnId, var: TVarId },
    NoVars { txn: TxnId },
    NonPositiveDuration { txn: TxnId },
    DuplicateVarName { name: String },
    VarCountMismatch { names: usize, var_count: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonDenseIds { position, found } => {
                write!(f, "non-dense ids: position {position} holds {found}")
            }
            Violation::UnknownVar { txn, var } => {
                write!(f, "unknown t-variable {} in {txn}", var.0)
            }
            Violation::NoVars { txn } => write!(f, "{txn} uses no t-variables"),
            Violation::NonPositiveDuration { txn } => write!(f, "non-positive duration in {txn}"),
            Violation::DuplicateVarName { name } => write!(f, "duplicate t-variable name {name:?}"),
            Violation::VarCountMismatch { names, var_count } => {
                write!(f, "{names} variable names for var_count {var_count}")
            }
        }
    }
}

/// An ordered batch of transactions over `var_count` t-variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workload {
    transactions: Vec<TransactionSpec>,
    var_names: Vec<String>,
}

impl Workload {
    /// Builds a workload and checks every invariant.
    pub fn new(
        var_names: Vec<String>,
        transactions: Vec<TransactionSpec>,
    ) -> Result<Self, WorkloadError> {
        let w = Workload::from_parts_unchecked(var_names, transactions);
        let violations = w.validate();
        if violations.is_empty() {
            Ok(w)
        } else {
            Err(WorkloadError::Invalid(violations))
        }
    }

    /// Builds a workload without validation; see [`Workload::validate`].
    pub fn from_parts_unchecked(
        var_names: Vec<String>,
        transactions: Vec<TransactionSpec>,
    ) -> Self {
        Workload {
            transactions,
            var_names,
        }
    }

    /// Single-variable workload from a list of variable names, one entry
    /// per transaction; variable ids follow first appearance.
    pub fn single_var(vars: &[&str], durations: &[u64]) -> Result<Self, WorkloadError> {
        assert_eq!(vars.len(), durations.len(), "one duration per transaction");
        let mut names: Vec<String> = Vec::new();
        let mut index = HashMap::new();
        let mut txns = Vec::with_capacity(vars.len());
        for (i, (name, &d)) in vars.iter().zip(durations).enumerate() {
            let id = *index.entry(name.to_string()).or_insert_with(|| {
                names.push(name.to_string());
                names.len() - 1
            });
            txns.push(TransactionSpec::new(i, [TVarId(id)], d));
        }
        Workload::new(names, txns)
    }

    pub fn builtin(name: &str) -> Result<Self, WorkloadError> {
        Ok(name.parse::<BuiltinWorkload>()?.workload())
    }

    pub fn transactions(&self) -> &[TransactionSpec] {
        &self.transactions
    }

    pub fn txn(&self, id: TxnId) -> &TransactionSpec {
        &self.transactions[id.0]
    }

    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    pub fn var_count(&self) -> usize {
        self.var_names.len()
    }

    pub fn var_names(&self) -> &[String] {
        &self.var_names
    }

    pub fn var_name(&self, var: TVarId) -> &str {
        &self.var_names[var.0]
    }

    /// Sum of all durations, i.e. the makespan of a fully serial execution.
    pub fn serial_makespan(&self) -> u64 {
        self.transactions.iter().map(|t| t.duration).sum()
    }

    /// Checks all invariants; an empty list means the workload is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut seen = BTreeSet::new();
        for name in &self.var_names {
            if !seen.insert(name.as_str()) {
                out.push(Violation::DuplicateVarName { name: name.clone() });
            }
        }
        let var_count = self.var_count();
        for (pos, t) in self.transactions.iter().enumerate() {
            if t.id.0 != pos {
                out.push(Violation::NonDenseIds {
                    position: pos,
                    found: t.id,
                });
            }
            if t.vars.is_empty() {
                out.push(Violation::NoVars { txn: t.id });
            }
            for &v in &t.vars {
                if v.0 >= var_count {
                    out.push(Violation::UnknownVar { txn: t.id, var: v });
                }
            }
            if t.duration == 0 {
                out.push(Violation::NonPositiveDuration { txn: t.id });
            }
        }
        out
    }

    /// Number of independent transactions: the largest subset of the
    /// workload (taken in arrival order) in which no two transactions
    /// share a t-variable.
    pub fn nit(&self) -> usize {
        let txns = &self.transactions;
        if txns.iter().all(|t| t.vars.len() == 1) {
            return txns
                .iter()
                .map(|t| t.vars[0])
                .collect::<BTreeSet<_>>()
                .len();
        }
        let adjacency: Vec<Vec<bool>> = txns
            .iter()
            .map(|a| {
                txns.iter()
                    .map(|b| a.id != b.id && a.shares_var(b))
                    .collect()
            })
            .collect();
        let all: Vec<usize> = (0..txns.len()).collect();
        max_independent_set(&adjacency, &all)
    }
}

fn max_independent_set(adj: &[Vec<bool>], candidates: &[usize]) -> usize {
    let Some(&pivot) = candidates
        .iter()
        .max_by_key(|&&v| candidates.iter().filter(|&&u| adj[v][u]).count())
    else {
        return 0;
    };
    let degree = candidates.iter().filter(|&&u| adj[pivot][u]).count();
    let without_neighbourhood: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&u| u != pivot && !adj[pivot][u])
        .collect();
    let take = 1 + max_independent_set(adj, &without_neighbourhood);
    if degree == 0 {
        // no edges left at all
        return take;
    }
    let without_pivot: Vec<usize> = candidates.iter().copied().filter(|&u| u != pivot).collect();
    take.max(max_independent_set(adj, &without_pivot))
}

/// The three five-transaction test workloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BuiltinWorkload {
    #[serde(rename = "CFW")]
    Cfw,
    #[serde(rename = "CW1")]
    Cw1,
    #[serde(rename = "CW2")]
    Cw2,
}

impl BuiltinWorkload {
    pub const ALL: [BuiltinWorkload; 3] = [
        BuiltinWorkload::Cfw,
        BuiltinWorkload::Cw1,
        BuiltinWorkload::Cw2,
    ];

    pub const DURATIONS: [u64; 5] = [50, 10, 10, 10, 10];

    pub fn var_layout(self) -> [&'static str; 5] {
        match self {
            BuiltinWorkload::Cfw => ["A", "B", "C", "D", "E"],
            BuiltinWorkload::Cw1 => ["A", "A", "B", "B", "C"],
            BuiltinWorkload::Cw2 => ["A", "A", "A", "A", "A"],
        }
    }

    pub fn workload(self) -> Workload {
        Workload::single_var(&self.var_layout(), &Self::DURATIONS)
            .expect("built-in workloads are valid")
    }

    pub fn name(self) -> &'static str {
        match self {
            BuiltinWorkload::Cfw => "CFW",
            BuiltinWorkload::Cw1 => "CW1",
            BuiltinWorkload::Cw2 => "CW2",
        }
    }
}

impl fmt::Display for BuiltinWorkload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuiltinWorkload {
    type Err = WorkloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('-', "").as_str() {
            "CFW" => Ok(BuiltinWorkload::Cfw),
            "CW1" => Ok(BuiltinWorkload::Cw1),
            "CW2" => Ok(BuiltinWorkload::Cw2),
            _ => Err(WorkloadError::UnknownBuiltin(s.to_string())),
        }
    }
}
