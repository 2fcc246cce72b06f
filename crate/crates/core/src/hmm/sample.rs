use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::HmmModel;
use crate::ingest::{Dataset, IngestConfig, Visit};

/// Months between consecutive sampled visits.
pub const VISIT_SPACING_MONTHS: f64 = 3.0;

fn categorical(rng: &mut ChaCha8Rng, p: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > 0.0 {
            last_positive = i;
        }
        acc += x;
        if u < acc {
            return i;
        }
    }
    last_positive
}

/// Ancestral sampling of `n_subjects` sequences of `n_visits` visits each.
/// Subject ids are zero-padded so lexicographic and numeric order agree;
/// ages sit on a 3-month grid starting at 0. Also returns the hidden states.
pub fn sample_with_states(
    model: &HmmModel,
    n_subjects: usize,
    n_visits: usize,
    seed: u64,
) -> (Dataset, BTreeMap<String, Vec<usize>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = n_subjects.saturating_sub(1).to_string().len();
    let variables: Vec<String> = model.variables().map(str::to_owned).collect();
    let mut visits = Vec::with_capacity(n_subjects * n_visits);
    let mut states = BTreeMap::new();

    for s in 0..n_subjects {
        let subject_id = format!("s{s:0width$}");
        let mut path: Vec<usize> = Vec::with_capacity(n_visits);
        for t in 0..n_visits {
            let k = if t == 0 {
                categorical(&mut rng, model.initial())
            } else {
                categorical(&mut rng, &model.transition()[path[t - 1]])
            };
            path.push(k);
            let observations = model
                .emission()
                .iter()
                .map(|(name, probs)| (name.clone(), Some(rng.random::<f64>() < probs[k])))
                .collect();
            visits.push(Visit {
                subject_id: subject_id.clone(),
                age_months: t as f64 * VISIT_SPACING_MONTHS,
                observations,
                outcomes: BTreeMap::new(),
            });
        }
        states.insert(subject_id, path);
    }

    let config = IngestConfig {
        subject_col: "subject_id".into(),
        age_col: "age_months".into(),
        model_vars: variables,
        extra_vars: vec![],
        outcome_cols: vec![],
    };
    let dataset = Dataset::from_visits(&config, visits).expect("sampled visits are valid");
    (dataset, states)
}

pub fn sample(model: &HmmModel, n_subjects: usize, n_visits: usize, seed: u64) -> Dataset {
    sample_with_states(model, n_subjects, n_visits, seed).0
}
