use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{EdgeKind, QueryError, QueryNode, StateQuery};
use crate::hmm::DecodingSet;

/// A maximal stretch of consecutive visits decoded to the same state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub state: usize,
    pub first_age: f64,
    pub last_age: f64,
    pub n_visits: u32,
}

pub fn collapse_runs(states: &[usize], ages: &[f64]) -> Result<Vec<Run>, QueryError> {
    if states.len() != ages.len() {
        return Err(QueryError::LengthMismatch { states: states.len(), ages: ages.len() });
    }
    let mut runs: Vec<Run> = Vec::new();
    for (&state, &age) in states.iter().zip(ages) {
        match runs.last_mut() {
            Some(run) if run.state == state => {
                run.last_age = age;
                run.n_visits += 1;
            }
            _ => runs.push(Run { state, first_age: age, last_age: age, n_visits: 1 }),
        }
    }
    Ok(runs)
}

fn node_accepts(node: &QueryNode, runs: &[Run], r: usize) -> bool {
    let run = &runs[r];
    let a = &node.attrs;
    run.state == node.state
        && (!a.initial || r == 0)
        && (!a.is_final || r + 1 == runs.len())
        && a.min_age.is_none_or(|x| run.first_age >= x)
        && a.max_age.is_none_or(|x| run.first_age <= x)
        && a.min_visits.is_none_or(|n| run.n_visits >= n)
}

/// Whether some strictly increasing run assignment satisfies every node and
/// edge of the query.
///
/// Dynamic programming from the last node backwards: `ok[r]` holds when node
/// `j` can sit on run `r` with the rest of the query matched after it.
pub fn match_subject(query: &StateQuery, runs: &[Run]) -> bool {
    let n_runs = runs.len();
    let last = query.nodes.len() - 1;
    let mut ok: Vec<bool> = (0..n_runs).map(|r| node_accepts(&query.nodes[last], runs, r)).collect();
    for j in (0..last).rev() {
        // any_after[r] = ok[r'] for some r' >= r
        let mut any_after = vec![false; n_runs + 1];
        for r in (0..n_runs).rev() {
            any_after[r] = any_after[r + 1] || ok[r];
        }
        let edge = query.edges[j];
        ok = (0..n_runs)
            .map(|r| {
                node_accepts(&query.nodes[j], runs, r)
                    && match edge {
                        EdgeKind::Direct => r + 1 < n_runs && ok[r + 1],
                        EdgeKind::Eventual => any_after[r + 1],
                    }
            })
            .collect();
    }
    ok.into_iter().any(|x| x)
}

pub fn check_states(query: &StateQuery, n_states: usize) -> Result<(), QueryError> {
    match query.nodes.iter().find(|n| n.state >= n_states) {
        Some(n) => Err(QueryError::StateOutOfRange { state: n.state, n_states }),
        None => Ok(()),
    }
}

/// Subjects whose collapsed decoded state sequence matches the query.
pub fn evaluate(query: &StateQuery, decodings: &DecodingSet) -> Result<BTreeSet<String>, QueryError> {
    check_states(query, decodings.n_states)?;
    let mut out = BTreeSet::new();
    for (id, d) in &decodings.subjects {
        if match_subject(query, &collapse_runs(&d.states, &d.ages)?) {
            out.insert(id.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::query::parse_query;

    fn runs(states: &[usize]) -> Vec<Run> {
        let ages: Vec<f64> = (0..states.len()).map(|i| 12.0 * i as f64).collect();
        collapse_runs(states, &ages).unwrap()
    }

    fn matches(q: &str, states: &[usize]) -> bool {
        match_subject(&parse_query(q).unwrap(), &runs(states))
    }

    #[test]
    fn collapse_examples() {
        let r = collapse_runs(&[3, 3, 4, 4, 5, 6], &[0.0, 3.0, 6.0, 9.0, 12.0, 15.0]).unwrap();
        let summary: Vec<(usize, u32)> = r.iter().map(|x| (x.state, x.n_visits)).collect();
        assert_eq!(summary, vec![(3, 2), (4, 2), (5, 1), (6, 1)]);
        assert_eq!((r[1].first_age, r[1].last_age), (6.0, 9.0));
        assert_eq!(collapse_runs(&[7], &[1.0]).unwrap().len(), 1);
        assert_eq!(collapse_runs(&[1, 2, 1], &[0.0, 1.0, 2.0]).unwrap().len(), 3);
        assert!(collapse_runs(&[], &[]).unwrap().is_empty());
        assert!(matches!(collapse_runs(&[1], &[]), Err(QueryError::LengthMismatch { .. })));
    }

    #[test]
    fn step_by_step_chain() {
        assert!(matches("S3 -> S4 -> S5 -> S6", &[3, 4, 5, 6]));
        assert!(matches("S3 -> S4 -> S5 -> S6", &[3, 3, 4, 5, 5, 6]));
    }

    #[test]
    fn initial_and_final() {
        let q = "S4{initial} ~> S7{final}";
        assert!(matches(q, &[4, 5, 6, 7]));
        assert!(!matches(q, &[5, 4, 7]));
        assert!(!matches(q, &[4, 7, 5]));
    }

    #[test]
    fn edge_kinds() {
        assert!(!matches("S0 -> S1", &[0, 2, 1]));
        assert!(matches("S0 ~> S1", &[0, 2, 1]));
        assert!(!matches("S1 ~> S0", &[0, 2, 1]));
        assert!(!matches("S0{initial} -> S0", &[0, 0, 0]));
        assert!(matches("S0 ~> S0", &[0, 1, 0]));
    }

    #[test]
    fn age_and_visit_attrs() {
        // runs: 0@0 (2 visits), 1@24, 2@36
        let states = [0, 0, 1, 2];
        assert!(matches("S1{min_age=24}", &states));
        assert!(!matches("S1{min_age=24.5}", &states));
        assert!(matches("S1{max_age=24}", &states));
        assert!(!matches("S2{max_age=30}", &states));
        assert!(matches("S0{min_visits=2}", &states));
        assert!(!matches("S1{min_visits=2}", &states));
    }

    #[test]
    fn state_out_of_range() {
        let q = parse_query("S0 ~> S3").unwrap();
        assert_eq!(check_states(&q, 3), Err(QueryError::StateOutOfRange { state: 3, n_states: 3 }));
        assert!(check_states(&q, 4).is_ok());
    }
}
