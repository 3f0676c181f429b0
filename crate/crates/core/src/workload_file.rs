//! JSON workload documents.
//!
//! ```json
//! { "variables": ["A", "B"],
//!   "transactions": [ { "vars": ["A"], "duration": 50 },
//!                     { "id": 1, "vars": ["A", "B"], "duration": 10 } ] }
//! ```
//!
//! `variables` is optional; without it variable ids follow first use.
//! A record's `id`, when present, must equal its position.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::WorkloadError;
use crate::workload::{BuiltinWorkload, TVarId, TransactionSpec, Workload};

#[derive(Debug, Serialize, Deserialize)]
struct Document {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    variables: Option<Vec<String>>,
    transactions: Vec<Record>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<i64>,
    vars: Vec<String>,
    duration: i64,
}

pub fn parse_workload(document: &str) -> Result<Workload, WorkloadError> {
    let doc: Document = serde_json::from_str(document)?;
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    if let Some(declared) = doc.variables {
        for name in declared {
            if index.insert(name.clone(), names.len()).is_some() {
                return Err(WorkloadError::Record {
                    record: 0,
                    message: format!("duplicate variable declaration {name:?}"),
                });
            }
            names.push(name);
        }
    }
    let declared_only = !names.is_empty();

    let mut txns = Vec::with_capacity(doc.transactions.len());
    for (pos, rec) in doc.transactions.into_iter().enumerate() {
        let err = |message: String| WorkloadError::Record {
            record: pos,
            message,
        };
        if let Some(id) = rec.id {
            if id != pos as i64 {
                return Err(err(format!("id {id} does not match position")));
            }
        }
        if rec.duration <= 0 {
            return Err(err("non-positive duration".into()));
        }
        if rec.vars.is_empty() {
            return Err(err("empty variable list".into()));
        }
        let mut seen = BTreeSet::new();
        let mut vars = Vec::with_capacity(rec.vars.len());
        for name in rec.vars {
            if !seen.insert(name.clone()) {
                return Err(err(format!("duplicate variable name {name:?}")));
            }
            let id = match index.get(&name) {
                Some(&id) => id,
                None if declared_only => {
                    return Err(err(format!("undeclared variable {name:?}")));
                }
                None => {
                    index.insert(name.clone(), names.len());
                    names.push(name);
                    names.len() - 1
                }
            };
            vars.push(TVarId(id));
        }
        txns.push(TransactionSpec::new(pos, vars, rec.duration as u64));
    }
    Workload::new(names, txns)
}

pub fn emit_workload(w: &Workload) -> String {
    let doc = Document {
        variables: Some(w.var_names().to_vec()),
        transactions: w
            .transactions()
            .iter()
            .map(|t| Record {
                id: Some(t.id.0 as i64),
                vars: t.vars.iter().map(|&v| w.var_name(v).to_string()).collect(),
                duration: t.duration as i64,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("workload documents always serialize")
}

/// Resolves a CLI-style workload argument: a built-in name or a file path.
pub fn load_workload(name_or_path: &str) -> Result<Workload, WorkloadError> {
    match name_or_path.parse::<BuiltinWorkload>() {
        Ok(b) => Ok(b.workload()),
        Err(unknown) => {
            let path = Path::new(name_or_path);
            if path.exists() {
                parse_workload(&std::fs::read_to_string(path)?)
            } else {
                Err(unknown)
            }
        }
    }
}
