//! Discrete-time hidden Markov models with independent Bernoulli emissions.
//!
//! Time is the visit index; age gaps between visits are ignored by the model
//! and only carried along for summaries. Missing observations drop out of
//! the emission product, which marginalizes them exactly.

mod decode;
mod inference;
mod sample;
mod train;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::json;

pub use decode::{decode, Decoding, DecodingSet};
pub use inference::{emission_loglik, forward_backward, viterbi, Posteriors};
pub use sample::{sample, sample_with_states};
pub use train::{train, train_with_report, RestartTrace, TrainConfig, TrainReport};

/// Emission probabilities are kept inside `[EMISSION_FLOOR, 1 - EMISSION_FLOOR]`.
pub const EMISSION_FLOOR: f64 = 1e-6;

/// Tolerance on probability-vector sums.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HmmError {
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("dataset has no subjects")]
    EmptyDataset,
    #[error("degenerate data: {0}")]
    DegenerateData(String),
}

/// A K-state model: initial distribution, row-stochastic transitions and
/// per-variable Bernoulli success probabilities `emission[v][k] = P(v = 1 | k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct HmmModel {
    n_states: usize,
    initial: Vec<f64>,
    transition: Vec<Vec<f64>>,
    emission: BTreeMap<String, Vec<f64>>,
    seed: u64,
    log_likelihood: f64,
    n_iterations_run: usize,
    trained_on: String,
}

#[derive(Deserialize)]
struct RawModel {
    n_states: usize,
    initial: Vec<f64>,
    transition: Vec<Vec<f64>>,
    emission: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    log_likelihood: f64,
    #[serde(default)]
    n_iterations_run: usize,
    #[serde(default)]
    trained_on: String,
}

impl TryFrom<RawModel> for HmmModel {
    type Error = HmmError;

    fn try_from(raw: RawModel) -> Result<Self, HmmError> {
        let model = HmmModel::new(raw.initial, raw.transition, raw.emission)?;
        if model.n_states != raw.n_states {
            return Err(HmmError::InvalidModel(format!(
                "n_states is {} but initial has {} entries",
                raw.n_states, model.n_states
            )));
        }
        Ok(model.with_metadata(raw.trained_on, raw.log_likelihood, raw.seed, raw.n_iterations_run))
    }
}

fn check_distribution(what: &str, p: &[f64]) -> Result<(), HmmError> {
    if let Some(x) = p.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(HmmError::InvalidModel(format!("{what} has entry {x} outside [0, 1]")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(HmmError::InvalidModel(format!("{what} sums to {sum}")));
    }
    Ok(())
}

impl HmmModel {
    /// Validates and assembles a model with empty training metadata.
    pub fn new(
        initial: Vec<f64>,
        transition: Vec<Vec<f64>>,
        emission: BTreeMap<String, Vec<f64>>,
    ) -> Result<Self, HmmError> {
        let k = initial.len();
        if k == 0 {
            return Err(HmmError::InvalidModel("model needs at least one state".into()));
        }
        check_distribution("initial distribution", &initial)?;
        if transition.len() != k {
            return Err(HmmError::InvalidModel(format!("transition has {} rows, expected {k}", transition.len())));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != k {
                return Err(HmmError::InvalidModel(format!("transition row {i} has {} entries", row.len())));
            }
            check_distribution(&format!("transition row {i}"), row)?;
        }
        for (name, probs) in &emission {
            if probs.len() != k {
                return Err(HmmError::InvalidModel(format!(
                    "emission {name:?} has {} entries, expected {k}",
                    probs.len()
                )));
            }
            if let Some(p) = probs.iter().find(|p| !(EMISSION_FLOOR..=1.0 - EMISSION_FLOOR).contains(*p)) {
                return Err(HmmError::InvalidModel(format!(
                    "emission {name:?} has probability {p} outside [{EMISSION_FLOOR}, 1 - {EMISSION_FLOOR}]"
                )));
            }
        }
        Ok(HmmModel {
            n_states: k,
            initial,
            transition,
            emission,
            seed: 0,
            log_likelihood: 0.0,
            n_iterations_run: 0,
            trained_on: String::new(),
        })
    }

    pub fn with_metadata(
        mut self,
        trained_on: impl Into<String>,
        log_likelihood: f64,
        seed: u64,
        n_iterations_run: usize,
    ) -> Self {
        self.trained_on = trained_on.into();
        self.log_likelihood = log_likelihood;
        self.seed = seed;
        self.n_iterations_run = n_iterations_run;
        self
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn emission(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.emission
    }

    /// Emission variables in the model's canonical (sorted) order.
    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.emission.keys().map(String::as_str)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn n_iterations_run(&self) -> usize {
        self.n_iterations_run
    }

    pub fn trained_on(&self) -> &str {
        &self.trained_on
    }

    pub fn to_json(&self) -> String {
        json::to_string(self)
    }

    pub fn from_json(text: &str) -> Result<Self, HmmError> {
        json::from_str(text).map_err(|e| HmmError::InvalidModel(e.to_string()))
    }

    /// Content-derived identifier of the persisted model document.
    pub fn id(&self) -> String {
        format!("m-{}", json::fingerprint(self.to_json().as_bytes(), 16))
    }
}

/// Synthetic generating models used by tests, examples and demos.
pub mod fixtures {
    use super::*;

    fn emissions(rows: &[(&str, &[f64])]) -> BTreeMap<String, Vec<f64>> {
        rows.iter().map(|(n, p)| (n.to_string(), p.to_vec())).collect()
    }

    /// Three well-separated states over three autoantibody-like markers:
    /// none, one, all three.
    pub fn three_state_generator() -> HmmModel {
        HmmModel::new(
            vec![0.6, 0.3, 0.1],
            vec![
                vec![0.85, 0.12, 0.03],
                vec![0.05, 0.85, 0.10],
                vec![0.02, 0.08, 0.90],
            ],
            emissions(&[
                ("GADA", &[0.05, 0.10, 0.90]),
                ("IA2A", &[0.05, 0.15, 0.85]),
                ("IAA", &[0.10, 0.90, 0.90]),
            ]),
        )
        .expect("fixture is valid")
    }

    /// A sampled cohort rendered as CSV plus its ingest config.
    ///
    /// Beyond the generator's markers it carries an unmodelled `HLA` column
    /// whose rate rises with the hidden state, a `seroconversion` flag on every
    /// visit with any marker present, an `onset` flag on visits in the last
    /// state, and roughly 5% blanked marker cells.
    pub fn synthetic_cohort(
        generator: &HmmModel,
        n_subjects: usize,
        n_visits: usize,
        seed: u64,
    ) -> (String, crate::ingest::IngestConfig) {
        use rand::{Rng, SeedableRng};

        let (sampled, states) = super::sample_with_states(generator, n_subjects, n_visits, seed);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0xC0_4087);
        let top = generator.n_states() - 1;
        let mut config = sampled.ingest_config();
        config.extra_vars = vec!["HLA".into()];
        config.outcome_cols = vec!["seroconversion".into(), "onset".into()];
        let mut visits = Vec::new();
        for (id, subject) in sampled.subjects() {
            for (visit, &k) in subject.visits.iter().zip(&states[id]) {
                let mut v = visit.clone();
                let any_marker = v.observations.values().any(|x| *x == Some(true));
                for x in v.observations.values_mut() {
                    if rng.random_bool(0.05) {
                        *x = None;
                    }
                }
                let rate = 0.2 + 0.6 * k as f64 / top.max(1) as f64;
                v.observations.insert("HLA".into(), Some(rng.random_bool(rate)));
                v.outcomes.insert("seroconversion".into(), any_marker);
                v.outcomes.insert("onset".into(), k == top);
                visits.push(v);
            }
        }
        let dataset = crate::ingest::Dataset::from_visits(&config, visits).expect("fixture visits are valid");
        (crate::ingest::export_dataset(&dataset), config)
    }

    /// Eleven states over three markers: three marker-free entry states
    /// (0, 4, 8), each feeding a chain that adds markers one at a time. The
    /// middle chain 4 -> 5 -> 6 -> 7 picks up IAA, then IA2A, then GADA.
    pub fn eleven_state_generator() -> HmmModel {
        const K: usize = 11;
        let mut initial = vec![0.0; K];
        initial[0] = 0.35;
        initial[4] = 0.4;
        initial[8] = 0.25;
        // chains: 0 -> 1 -> 2 -> 3 ; 4 -> 5 -> 6 -> 7 ; 8 -> 9 -> 10
        let next: [Option<usize>; K] =
            [Some(1), Some(2), Some(3), None, Some(5), Some(6), Some(7), None, Some(9), Some(10), None];
        let transition = (0..K)
            .map(|k| {
                let mut row = vec![0.0; K];
                match next[k] {
                    Some(n) => {
                        row[k] = 0.7;
                        row[n] = 0.3;
                    }
                    None => row[k] = 1.0,
                }
                row
            })
            .collect();
        let lo = 0.03;
        let hi = 0.95;
        HmmModel::new(
            initial,
            transition,
            emissions(&[
                ("IAA", &[lo, lo, lo, hi, lo, hi, hi, hi, lo, lo, hi]),
                ("IA2A", &[lo, hi, hi, hi, lo, lo, hi, hi, lo, hi, hi]),
                ("GADA", &[lo, lo, hi, hi, lo, lo, lo, hi, lo, lo, lo]),
            ]),
        )
        .expect("fixture is valid")
    }
}
