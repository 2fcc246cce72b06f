use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::inference::{argmax, log_emissions, observation_matrix, viterbi_path, Lattice};
use super::{HmmError, HmmModel};
use crate::ingest::Dataset;
use crate::json;

/// Decoded view of one subject. `states[t]` is the posterior argmax at visit
/// `t` (lowest index on ties); `viterbi_path` is the jointly most probable
/// sequence. Visit ages are carried along so decodings can be queried on
/// their own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub ages: Vec<f64>,
    pub states: Vec<usize>,
    pub posteriors: Vec<Vec<f64>>,
    pub viterbi_path: Vec<usize>,
    pub subject_log_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingSet {
    pub model_id: String,
    pub dataset_id: String,
    pub n_states: usize,
    pub subjects: BTreeMap<String, Decoding>,
}

impl DecodingSet {
    pub fn to_json(&self) -> String {
        json::to_string(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        json::from_str(text)
    }
}

pub fn decode(model: &HmmModel, dataset: &Dataset) -> Result<DecodingSet, HmmError> {
    if let Some(v) = model.variables().find(|v| !dataset.model_variables().iter().any(|m| m == v)) {
        return Err(HmmError::UnknownVariable(v.to_owned()));
    }
    let subjects: Vec<(&String, &crate::ingest::Subject)> = dataset.subjects().iter().collect();
    let decoded: Vec<(String, Decoding)> = subjects
        .par_iter()
        .map(|(id, subject)| {
            let obs = observation_matrix(model, subject)?;
            let log_e = log_emissions(model, &obs);
            let lattice = Lattice::run(model, &log_e);
            let posteriors = lattice.posteriors();
            let states = posteriors.iter().map(|p| argmax(p)).collect();
            Ok((
                (*id).clone(),
                Decoding {
                    ages: subject.ages(),
                    states,
                    posteriors,
                    viterbi_path: viterbi_path(model, &log_e),
                    subject_log_likelihood: lattice.log_likelihood,
                },
            ))
        })
        .collect::<Result<_, HmmError>>()?;
    Ok(DecodingSet {
        model_id: model.id(),
        dataset_id: dataset.id(),
        n_states: model.n_states(),
        subjects: decoded.into_iter().collect(),
    })
}
