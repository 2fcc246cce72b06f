//! State-sequence queries over decoded trajectories, and saved cohorts.
//!
//! A query is a chain of state nodes joined by direct (`->`) or eventual
//! (`~>`) edges, e.g. `S4{initial} ~> S5 ~> S6 ~> S7{final}`. Matching runs
//! against the run-length-collapsed decoded sequence, so repeated visits in
//! one state never break adjacency. Age attributes test the age at which the
//! run was entered.

mod matcher;
mod parser;
mod store;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use matcher::{check_states, collapse_runs, evaluate, match_subject, Run};
pub use parser::{parse_query, render};
pub use store::{write_atomic, Cohort, CohortStore, StoreError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QueryError {
    #[error("syntax error at offset {offset}: expected one of {expected:?}, found {found}")]
    Syntax { offset: usize, expected: Vec<String>, found: String },
    #[error("duplicate attribute {attr:?} at offset {offset}")]
    DuplicateAttr { offset: usize, attr: String },
    #[error("bad value {value:?} for attribute {attr:?} at offset {offset}")]
    BadAttrValue { offset: usize, attr: String, value: String },
    #[error("state index {text:?} at offset {offset} is too large")]
    BadStateIndex { offset: usize, text: String },
    #[error("query references state {state} but the model has {n_states} states")]
    StateOutOfRange { state: usize, n_states: usize },
    #[error("{states} states but {ages} ages")]
    LengthMismatch { states: usize, ages: usize },
}

impl QueryError {
    /// Byte offset into the query text, for parse errors.
    pub fn offset(&self) -> Option<usize> {
        match self {
            QueryError::Syntax { offset, .. }
            | QueryError::DuplicateAttr { offset, .. }
            | QueryError::BadAttrValue { offset, .. }
            | QueryError::BadStateIndex { offset, .. } => Some(*offset),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    /// The next node sits on the immediately following run.
    Direct,
    /// The next node sits on any later run.
    Eventual,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeAttrs {
    pub initial: bool,
    #[serde(rename = "final")]
    pub is_final: bool,
    pub min_age: Option<f64>,
    pub max_age: Option<f64>,
    pub min_visits: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryNode {
    pub state: usize,
    pub attrs: NodeAttrs,
}

/// Parsed query: `edges[i]` joins `nodes[i]` and `nodes[i + 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateQuery {
    pub nodes: Vec<QueryNode>,
    pub edges: Vec<EdgeKind>,
}
