//! Versioned t-variable table with optimistic get/commit validation.
//!
//! A transaction reads the versions of its t-variables when it starts and
//! presents them again when it commits. The commit succeeds only if every
//! presented version is still current; then every named version is bumped.
//! Requests that fall on the same tick are served strictly one at a time.

use serde::{Deserialize, Serialize};

use crate::error::StmError;
use crate::workload::TVarId;

pub type Version = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VersionMode {
    Unbounded,
    /// Versions count modulo the given bound (the transaction count).
    Modulo(u64),
}

/// How `CommitVars` requests are judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum CommitRule {
    #[default]
    Optimistic,
    /// Fault injection for checking the verifier: if two commits served in
    /// the same tick present the same current version of a common key, all
    /// of them abort.
    AbortAllRacers,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CommitOutcome {
    pub committed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Request {
    GetVars(Vec<TVarId>),
    CommitVars(Vec<(TVarId, Version)>),
}

impl Request {
    pub fn is_commit(&self) -> bool {
        matches!(self, Request::CommitVars(_))
    }

    fn keys(&self) -> Vec<TVarId> {
        match self {
            Request::GetVars(keys) => keys.clone(),
            Request::CommitVars(pairs) => pairs.iter().map(|p| p.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StmRequest {
    pub worker: usize,
    pub request: Request,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Reply {
    Versions(Vec<Version>),
    Commit(CommitOutcome),
}

/// Order in which one tick's requests are served.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServiceOrder {
    /// All commits before all gets, each group by ascending worker index.
    Deterministic,
    /// Serve `requests[order[0]]`, then `requests[order[1]]`, ...
    Explicit(Vec<usize>),
}

impl ServiceOrder {
    pub fn resolve(&self, requests: &[StmRequest]) -> Result<Vec<usize>, StmError> {
        match self {
            ServiceOrder::Deterministic => Ok(deterministic_order(requests)),
            ServiceOrder::Explicit(order) => {
                let mut seen = vec![false; requests.len()];
                if order.len() != requests.len() {
                    return Err(StmError::BadOrder(requests.len()));
                }
                for &i in order {
                    if i >= requests.len() || std::mem::replace(&mut seen[i], true) {
                        return Err(StmError::BadOrder(requests.len()));
                    }
                }
                Ok(order.clone())
            }
        }
    }
}

pub fn deterministic_order(requests: &[StmRequest]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..requests.len()).collect();
    order.sort_by_key(|&i| (!requests[i].request.is_commit(), requests[i].worker));
    order
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VersionDict {
    versions: Vec<Version>,
    mode: VersionMode,
    rule: CommitRule,
}

impl VersionDict {
    pub fn new(var_count: usize, mode: VersionMode) -> Self {
        if let VersionMode::Modulo(m) = mode {
            assert!(m > 0, "modulo bound must be positive");
        }
        VersionDict {
            versions: vec![0; var_count],
            mode,
            rule: CommitRule::Optimistic,
        }
    }

    pub fn with_commit_rule(mut self, rule: CommitRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn mode(&self) -> VersionMode {
        self.mode
    }

    pub fn versions(&self) -> &[Version] {
        &self.versions
    }

    fn check_keys(&self, keys: &[TVarId]) -> Result<(), StmError> {
        if keys.is_empty() {
            return Err(StmError::EmptyRequest);
        }
        for (i, k) in keys.iter().enumerate() {
            if k.0 >= self.versions.len() {
                return Err(StmError::UnknownKey(*k));
            }
            if keys[..i].contains(k) {
                return Err(StmError::DuplicateKey(*k));
            }
        }
        Ok(())
    }

    pub fn get_vars(&self, keys: &[TVarId]) -> Result<Vec<Version>, StmError> {
        self.check_keys(keys)?;
        Ok(keys.iter().map(|k| self.versions[k.0]).collect())
    }

    /// All-or-nothing validation and increment.
    pub fn commit_vars(&mut self, pairs: &[(TVarId, Version)]) -> Result<CommitOutcome, StmError> {
        let keys: Vec<TVarId> = pairs.iter().map(|p| p.0).collect();
        self.check_keys(&keys)?;
        Ok(self.commit_checked(pairs))
    }

    fn commit_checked(&mut self, pairs: &[(TVarId, Version)]) -> CommitOutcome {
        let valid = pairs.iter().all(|&(k, v)| self.versions[k.0] == v);
        if valid {
            for &(k, _) in pairs {
                let next = self.versions[k.0] + 1;
                self.versions[k.0] = match self.mode {
                    VersionMode::Unbounded => next,
                    VersionMode::Modulo(m) => next % m,
                };
            }
        }
        CommitOutcome { committed: valid }
    }

    /// Serves one tick's requests sequentially in the given order. Replies
    /// are returned in the order of `requests`, not service order.
    pub fn service_tick_batch(
        &mut self,
        requests: &[StmRequest],
        order: &ServiceOrder,
    ) -> Result<Vec<Reply>, StmError> {
        for (i, r) in requests.iter().enumerate() {
            if requests[..i].iter().any(|o| o.worker == r.worker) {
                return Err(StmError::DuplicateWorker(r.worker));
            }
            self.check_keys(&r.request.keys())?;
        }
        let order = order.resolve(requests)?;
        let doomed = match self.rule {
            CommitRule::Optimistic => vec![false; requests.len()],
            CommitRule::AbortAllRacers => self.racers(requests),
        };
        let mut replies: Vec<Option<Reply>> = vec![None; requests.len()];
        for i in order {
            let reply = match &requests[i].request {
                Request::GetVars(keys) => {
                    Reply::Versions(keys.iter().map(|k| self.versions[k.0]).collect())
                }
                Request::CommitVars(_) if doomed[i] => {
                    Reply::Commit(CommitOutcome { committed: false })
                }
                Request::CommitVars(pairs) => Reply::Commit(self.commit_checked(pairs)),
            };
            replies[i] = Some(reply);
        }
        Ok(replies
            .into_iter()
            .map(|r| r.expect("every request served"))
            .collect())
    }

    fn racers(&self, requests: &[StmRequest]) -> Vec<bool> {
        let current: Vec<Option<&Vec<(TVarId, Version)>>> = requests
            .iter()
            .map(|r| match &r.request {
                Request::CommitVars(pairs)
                    if pairs.iter().all(|&(k, v)| self.versions[k.0] == v) =>
                {
                    Some(pairs)
                }
                _ => None,
            })
            .collect();
        (0..requests.len())
            .map(|i| {
                let Some(mine) = current[i] else { return false };
                current.iter().enumerate().any(|(j, other)| {
                    j != i
                        && other.is_some_and(|o| o.iter().any(|p| mine.iter().any(|q| q.0 == p.0)))
                })
            })
            .collect()
    }
}
