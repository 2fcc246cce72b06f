//! Independent reference implementations used as test oracles.
//!
//! Nothing here calls into the code paths it checks: HMM quantities come from
//! enumerating every state path, query matches from enumerating every
//! increasing run subsequence.

#![allow(dead_code)]

use std::collections::BTreeMap;

use dpm_core::hmm::{HmmModel, EMISSION_FLOOR};
use dpm_core::ingest::{Dataset, IngestConfig, Subject, Visit};
use dpm_core::query::{EdgeKind, NodeAttrs, QueryNode, Run, StateQuery};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Enumeration {
    pub likelihood: f64,
    pub log_likelihood: f64,
    pub posteriors: Vec<Vec<f64>>,
    /// Highest-scoring path; among equal scores the one that is smallest when
    /// compared from the last visit backwards.
    pub best_path: Vec<usize>,
}

fn observed(model: &HmmModel, visit: &Visit) -> Vec<Option<bool>> {
    model.emission().keys().map(|v| visit.observations[v]).collect()
}

/// Emission probability by direct product.
fn emission_prob(model: &HmmModel, obs: &[Option<bool>], k: usize) -> f64 {
    model
        .emission()
        .values()
        .zip(obs)
        .map(|(b, x)| match x {
            Some(true) => b[k],
            Some(false) => 1.0 - b[k],
            None => 1.0,
        })
        .product()
}

/// Log emission accumulated left to right over variables.
fn emission_log(model: &HmmModel, obs: &[Option<bool>], k: usize) -> f64 {
    let mut s = 0.0;
    for (b, x) in model.emission().values().zip(obs) {
        match x {
            Some(true) => s += b[k].ln(),
            Some(false) => s += (1.0 - b[k]).ln(),
            None => {}
        }
    }
    s
}

fn reverse_lex_less(a: &[usize], b: &[usize]) -> bool {
    for (x, y) in a.iter().rev().zip(b.iter().rev()) {
        if x != y {
            return x < y;
        }
    }
    false
}

pub fn enumerate_paths(model: &HmmModel, subject: &Subject) -> Enumeration {
    let k = model.n_states();
    let t_len = subject.visits.len();
    let obs: Vec<Vec<Option<bool>>> = subject.visits.iter().map(|v| observed(model, v)).collect();
    let probs: Vec<Vec<f64>> = obs.iter().map(|o| (0..k).map(|j| emission_prob(model, o, j)).collect()).collect();
    let logs: Vec<Vec<f64>> = obs.iter().map(|o| (0..k).map(|j| emission_log(model, o, j)).collect()).collect();
    let pi = model.initial();
    let a = model.transition();

    let mut path = vec![0usize; t_len];
    let mut total = 0.0;
    let mut marginals = vec![vec![0.0; k]; t_len];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let mut p = pi[path[0]] * probs[0][path[0]];
        let mut score = pi[path[0]].ln() + logs[0][path[0]];
        for t in 1..t_len {
            p *= a[path[t - 1]][path[t]] * probs[t][path[t]];
            score = score + a[path[t - 1]][path[t]].ln() + logs[t][path[t]];
        }
        total += p;
        for t in 0..t_len {
            marginals[t][path[t]] += p;
        }
        let better = match &best {
            None => true,
            Some((s, bp)) => score > *s || (score == *s && reverse_lex_less(&path, bp)),
        };
        if better {
            best = Some((score, path.clone()));
        }
        // odometer increment
        let mut i = t_len;
        loop {
            if i == 0 {
                let posteriors = marginals.into_iter().map(|m| m.into_iter().map(|x| x / total).collect()).collect();
                return Enumeration {
                    likelihood: total,
                    log_likelihood: total.ln(),
                    posteriors,
                    best_path: best.unwrap().1,
                };
            }
            i -= 1;
            path[i] += 1;
            if path[i] < k {
                break;
            }
            path[i] = 0;
        }
    }
}

fn random_distribution(rng: &mut ChaCha8Rng, k: usize, allow_zeros: bool) -> Vec<f64> {
    let mut p: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    if allow_zeros && k > 1 && rng.random_bool(0.2) {
        let z = rng.random_range(0..k);
        p[z] = 0.0;
    }
    let s: f64 = p.iter().sum();
    p.iter().map(|x| x / s).collect()
}

pub fn variable_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("v{i}")).collect()
}

/// Random model with `k` states over `n_vars` variables. Some initial and
/// transition entries are exactly zero.
pub fn random_model(rng: &mut ChaCha8Rng, k: usize, n_vars: usize) -> HmmModel {
    let initial = random_distribution(rng, k, true);
    let transition = (0..k).map(|_| random_distribution(rng, k, true)).collect();
    let emission = variable_names(n_vars)
        .into_iter()
        .map(|v| (v, (0..k).map(|_| rng.random_range(0.02..0.98)).collect()))
        .collect();
    HmmModel::new(initial, transition, emission).unwrap()
}

pub fn config(vars: &[String]) -> IngestConfig {
    IngestConfig {
        subject_col: "id".into(),
        age_col: "age".into(),
        model_vars: vars.to_vec(),
        extra_vars: vec![],
        outcome_cols: vec![],
    }
}

/// One subject with `t_len` visits; each cell missing with probability `p_missing`.
pub fn random_subject(rng: &mut ChaCha8Rng, vars: &[String], t_len: usize, p_missing: f64) -> Dataset {
    let visits = (0..t_len)
        .map(|t| Visit {
            subject_id: "s".into(),
            age_months: 3.0 * t as f64,
            observations: vars
                .iter()
                .map(|v| (v.clone(), if rng.random_bool(p_missing) { None } else { Some(rng.random_bool(0.5)) }))
                .collect(),
            outcomes: BTreeMap::new(),
        })
        .collect();
    Dataset::from_visits(&config(vars), visits).unwrap()
}

pub fn floor_ok(p: f64) -> bool {
    (EMISSION_FLOOR..=1.0 - EMISSION_FLOOR).contains(&p)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---- queries ----

fn node_ok(node: &QueryNode, runs: &[Run], r: usize) -> bool {
    let run = &runs[r];
    let a = &node.attrs;
    if run.state != node.state {
        return false;
    }
    if a.initial && r != 0 {
        return false;
    }
    if a.is_final && r != runs.len() - 1 {
        return false;
    }
    if let Some(x) = a.min_age {
        if run.first_age < x {
            return false;
        }
    }
    if let Some(x) = a.max_age {
        if run.first_age > x {
            return false;
        }
    }
    if let Some(n) = a.min_visits {
        if run.n_visits < n {
            return false;
        }
    }
    true
}

/// Tries every strictly increasing choice of runs for the nodes.
pub fn brute_force_match(query: &StateQuery, runs: &[Run]) -> bool {
    fn rec(query: &StateQuery, runs: &[Run], chosen: &mut Vec<usize>) -> bool {
        let j = chosen.len();
        if j == query.nodes.len() {
            return chosen.iter().enumerate().all(|(i, &r)| node_ok(&query.nodes[i], runs, r))
                && query.edges.iter().enumerate().all(|(i, e)| match e {
                    EdgeKind::Direct => chosen[i + 1] == chosen[i] + 1,
                    EdgeKind::Eventual => chosen[i + 1] > chosen[i],
                });
        }
        let start = chosen.last().map_or(0, |&r| r + 1);
        for r in start..runs.len() {
            chosen.push(r);
            if rec(query, runs, chosen) {
                return true;
            }
            chosen.pop();
        }
        false
    }
    rec(query, runs, &mut Vec::new())
}

/// Runs built directly (not via `collapse_runs`): adjacent states differ.
pub fn random_runs(rng: &mut ChaCha8Rng, n_states: usize, max_len: usize) -> Vec<Run> {
    let len = rng.random_range(1..=max_len);
    let mut runs: Vec<Run> = Vec::with_capacity(len);
    let mut age = rng.random_range(0..6) as f64 * 3.0;
    for _ in 0..len {
        let mut state = rng.random_range(0..n_states);
        while n_states > 1 && runs.last().is_some_and(|r| r.state == state) {
            state = rng.random_range(0..n_states);
        }
        if n_states == 1 && !runs.is_empty() {
            break;
        }
        let n_visits = rng.random_range(1..=3u32);
        let first_age = age;
        age += 3.0 * (n_visits - 1) as f64;
        runs.push(Run { state, first_age, last_age: age, n_visits });
        age += 3.0;
    }
    runs
}

pub fn random_query(rng: &mut ChaCha8Rng, n_states: usize, max_nodes: usize) -> StateQuery {
    let n = rng.random_range(1..=max_nodes);
    let nodes = (0..n)
        .map(|_| {
            let mut attrs = NodeAttrs::default();
            attrs.initial = rng.random_bool(0.15);
            attrs.is_final = rng.random_bool(0.15);
            if rng.random_bool(0.15) {
                attrs.min_age = Some(rng.random_range(0..20) as f64 * 1.5);
            }
            if rng.random_bool(0.15) {
                let lo = attrs.min_age.unwrap_or(0.0);
                attrs.max_age = Some(lo + rng.random_range(0..20) as f64 * 1.5);
            }
            if rng.random_bool(0.15) {
                attrs.min_visits = Some(rng.random_range(1..=3));
            }
            QueryNode { state: rng.random_range(0..n_states), attrs }
        })
        .collect();
    let edges = (1..n)
        .map(|_| if rng.random_bool(0.5) { EdgeKind::Direct } else { EdgeKind::Eventual })
        .collect();
    StateQuery { nodes, edges }
}
