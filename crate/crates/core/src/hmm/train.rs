//! Baum-Welch over many independent subject sequences.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::inference::{log_emissions, observation_matrix, Lattice, ObservationMatrix};
use super::{HmmError, HmmModel, EMISSION_FLOOR};
use crate::ingest::Dataset;

/// Expected occupancy below which a state counts as empty.
const MIN_OCCUPANCY: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_states: usize,
    #[serde(default = "TrainConfig::default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "TrainConfig::default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "TrainConfig::default_restarts")]
    pub n_restarts: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(n_states: usize, seed: u64) -> Self {
        TrainConfig {
            n_states,
            max_iter: Self::default_max_iter(),
            rel_tol: Self::default_rel_tol(),
            n_restarts: Self::default_restarts(),
            seed,
        }
    }

    fn default_max_iter() -> usize {
        500
    }

    fn default_rel_tol() -> f64 {
        1e-6
    }

    fn default_restarts() -> usize {
        5
    }

    pub fn validate(&self) -> Result<(), HmmError> {
        if self.n_states < 1 {
            return Err(HmmError::InvalidConfig("n_states must be at least 1".into()));
        }
        if self.max_iter < 1 {
            return Err(HmmError::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.rel_tol > 0.0) || !self.rel_tol.is_finite() {
            return Err(HmmError::InvalidConfig("rel_tol must be positive".into()));
        }
        if self.n_restarts < 1 {
            return Err(HmmError::InvalidConfig("n_restarts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Log-likelihood history of one restart. Entry 0 is the initial draw,
/// entry `i` the model after `i` EM iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
    /// Number of times the initial parameters were re-drawn after a state emptied.
    pub redraws: usize,
    /// Set when the restart was abandoned because a state emptied twice.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub model: HmmModel,
    pub best_restart: usize,
    pub restarts: Vec<RestartTrace>,
}

/// Sufficient statistics accumulated over subjects.
struct Stats {
    k: usize,
    initial: Vec<f64>,
    occupancy: Vec<f64>,
    transitions: Vec<f64>,
    emit_ones: Vec<f64>,
    emit_observed: Vec<f64>,
    log_likelihood: f64,
}

impl Stats {
    fn zeros(k: usize, n_vars: usize) -> Self {
        Stats {
            k,
            initial: vec![0.0; k],
            occupancy: vec![0.0; k],
            transitions: vec![0.0; k * k],
            emit_ones: vec![0.0; n_vars * k],
            emit_observed: vec![0.0; n_vars * k],
            log_likelihood: 0.0,
        }
    }

    fn add(&mut self, other: &Stats) {
        let pairs = [
            (&mut self.initial, &other.initial),
            (&mut self.occupancy, &other.occupancy),
            (&mut self.transitions, &other.transitions),
            (&mut self.emit_ones, &other.emit_ones),
            (&mut self.emit_observed, &other.emit_observed),
        ];
        for (dst, src) in pairs {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
        self.log_likelihood += other.log_likelihood;
    }
}

fn subject_stats(model: &HmmModel, obs: &ObservationMatrix) -> Stats {
    let k = model.n_states();
    let n_vars = model.emission().len();
    let mut stats = Stats::zeros(k, n_vars);
    let lattice = Lattice::run(model, &log_emissions(model, obs));
    stats.log_likelihood = lattice.log_likelihood;
    for (t, row) in obs.iter().enumerate() {
        let gamma = lattice.posterior(t);
        if t == 0 {
            stats.initial.copy_from_slice(&gamma);
        }
        for (o, g) in stats.occupancy.iter_mut().zip(&gamma) {
            *o += g;
        }
        for (v, x) in row.iter().enumerate() {
            let Some(x) = *x else { continue };
            for j in 0..k {
                stats.emit_observed[v * k + j] += gamma[j];
                if x {
                    stats.emit_ones[v * k + j] += gamma[j];
                }
            }
        }
    }
    lattice.accumulate_transitions(model, &mut stats.transitions);
    stats
}

/// E-step over all subjects. Per-subject work runs in parallel; the reduction
/// is sequential in subject order so results do not depend on scheduling.
fn expectation(model: &HmmModel, data: &[ObservationMatrix]) -> Stats {
    let per_subject: Vec<Stats> = data.par_iter().map(|obs| subject_stats(model, obs)).collect();
    let mut total = Stats::zeros(model.n_states(), model.emission().len());
    for s in &per_subject {
        total.add(s);
    }
    total
}

fn maximization(model: &HmmModel, stats: &Stats, n_subjects: usize) -> HmmModel {
    let k = stats.k;
    let initial: Vec<f64> = stats.initial.iter().map(|x| x / n_subjects as f64).collect();
    let transition: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let row = &stats.transitions[i * k..(i + 1) * k];
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row.iter().map(|x| x / total).collect()
            } else {
                // Never left this state in expectation: any row is optimal.
                model.transition()[i].clone()
            }
        })
        .collect();
    let emission: BTreeMap<String, Vec<f64>> = model
        .emission()
        .iter()
        .enumerate()
        .map(|(v, (name, old))| {
            let probs = (0..k)
                .map(|j| {
                    let den = stats.emit_observed[v * k + j];
                    let p = if den > 0.0 { stats.emit_ones[v * k + j] / den } else { old[j] };
                    p.clamp(EMISSION_FLOOR, 1.0 - EMISSION_FLOOR)
                })
                .collect();
            (name.clone(), probs)
        })
        .collect();
    HmmModel {
        n_states: k,
        initial: normalized(initial),
        transition: transition.into_iter().map(normalized).collect(),
        emission,
        ..model.clone()
    }
}

fn normalized(mut p: Vec<f64>) -> Vec<f64> {
    let s: f64 = p.iter().sum();
    for x in &mut p {
        *x /= s;
    }
    p
}

fn dirichlet_ones(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    normalized((0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect())
}

fn random_model(rng: &mut ChaCha8Rng, k: usize, variables: &[String]) -> HmmModel {
    let initial = dirichlet_ones(rng, k);
    let transition = (0..k).map(|_| dirichlet_ones(rng, k)).collect();
    let emission = variables
        .iter()
        .map(|v| (v.clone(), (0..k).map(|_| rng.random_range(0.2..0.8)).collect()))
        .collect();
    HmmModel::new(initial, transition, emission).expect("random draw is a valid model")
}

fn has_empty_state(stats: &Stats) -> bool {
    stats.occupancy.iter().any(|&o| o < MIN_OCCUPANCY)
}

enum RestartOutcome {
    Done(HmmModel, f64),
    Degenerate,
}

fn run_restart(
    data: &[ObservationMatrix],
    variables: &[String],
    config: &TrainConfig,
    restart: usize,
    trace: &mut RestartTrace,
) -> RestartOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(restart as u64);
    let n = data.len();

    'attempt: loop {
        trace.log_likelihoods.clear();
        let mut model = random_model(&mut rng, config.n_states, variables);
        let mut stats = expectation(&model, data);
        trace.log_likelihoods.push(stats.log_likelihood);
        let mut previous = stats.log_likelihood;

        for _ in 0..config.max_iter {
            if has_empty_state(&stats) {
                if trace.redraws == 0 {
                    trace.redraws += 1;
                    continue 'attempt;
                }
                trace.degenerate = true;
                return RestartOutcome::Degenerate;
            }
            model = maximization(&model, &stats, n);
            stats = expectation(&model, data);
            let current = stats.log_likelihood;
            trace.log_likelihoods.push(current);
            if (current - previous).abs() / (current.abs() + 1.0) < config.rel_tol {
                trace.converged = true;
                break;
            }
            previous = current;
        }
        return RestartOutcome::Done(model, stats.log_likelihood);
    }
}

/// Fits a model by multi-restart Baum-Welch and keeps the restart with the
/// highest final log-likelihood (lowest restart index on ties).
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<HmmModel, HmmError> {
    train_with_report(dataset, config).map(|r| r.model)
}

pub fn train_with_report(dataset: &Dataset, config: &TrainConfig) -> Result<TrainReport, HmmError> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(HmmError::EmptyDataset);
    }
    let variables: Vec<String> = {
        let mut v = dataset.model_variables().to_vec();
        v.sort();
        v
    };
    // Observation extraction only needs the variable layout.
    let layout = HmmModel::new(
        vec![1.0],
        vec![vec![1.0]],
        variables.iter().map(|v| (v.clone(), vec![0.5])).collect(),
    )
    .expect("layout model is valid");
    let data: Vec<ObservationMatrix> = dataset
        .subjects()
        .values()
        .map(|s| observation_matrix(&layout, s))
        .collect::<Result<_, _>>()?;

    let outcomes: Vec<(RestartTrace, RestartOutcome)> = (0..config.n_restarts)
        .into_par_iter()
        .map(|r| {
            let mut trace = RestartTrace { log_likelihoods: Vec::new(), converged: false, redraws: 0, degenerate: false };
            let outcome = run_restart(&data, &variables, config, r, &mut trace);
            (trace, outcome)
        })
        .collect();

    let mut best: Option<(usize, HmmModel, f64)> = None;
    let mut restarts = Vec::with_capacity(outcomes.len());
    for (r, (trace, outcome)) in outcomes.into_iter().enumerate() {
        if let RestartOutcome::Done(model, ll) = outcome {
            if best.as_ref().is_none_or(|(_, _, b)| ll > *b) {
                best = Some((r, model, ll));
            }
        }
        restarts.push(trace);
    }
    let Some((best_restart, model, ll)) = best else {
        return Err(HmmError::DegenerateData(format!(
            "every restart produced a state with zero expected occupancy at K = {}",
            config.n_states
        )));
    };
    let iterations = restarts[best_restart].log_likelihoods.len() - 1;
    let model = model.with_metadata(dataset.id(), ll, config.seed, iterations);
    Ok(TrainReport { model, best_restart, restarts })
}
