//! Analytics behind the views: feature matrix, transition statistics,
//! waterfall points and outcome-age densities.
//!
//! Everything here works on the posterior-argmax decoding and is a pure
//! function of its inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hmm::{DecodingSet, HmmModel};
use crate::ingest::{Dataset, Subject};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SummaryError {
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("unknown outcome {0:?}")]
    UnknownOutcome(String),
    #[error("decoding does not match dataset for subject {0:?}")]
    DecodingMismatch(String),
    #[error("density estimate needs at least one sample")]
    EmptySamples,
    #[error("density grid needs at least 2 points, got {0}")]
    InvalidGrid(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    /// Emission probability taken from the model.
    Model,
    /// Frequency over visits decoded to each state.
    Empirical,
}

/// Per-state probability table. `None` cells have no observed visits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub states: Vec<usize>,
    pub variables: Vec<String>,
    pub rows: BTreeMap<String, Vec<Option<f64>>>,
    pub source: BTreeMap<String, FeatureSource>,
}

/// Resolves the visits of `dataset` against their decoded states, restricted
/// to `cohort` when given. Subjects are yielded in id order.
fn decoded_subjects<'a>(
    decodings: &'a DecodingSet,
    dataset: &'a Dataset,
    cohort: Option<&'a BTreeSet<String>>,
) -> impl Iterator<Item = Result<(&'a Subject, &'a [usize], &'a [Vec<f64>]), SummaryError>> + 'a {
    dataset
        .subjects()
        .iter()
        .filter(move |(id, _)| cohort.is_none_or(|c| c.contains(*id)))
        .map(move |(id, subject)| {
            let d = decodings
                .subjects
                .get(id)
                .filter(|d| d.states.len() == subject.visits.len())
                .ok_or_else(|| SummaryError::DecodingMismatch(id.clone()))?;
            Ok((subject, d.states.as_slice(), d.posteriors.as_slice()))
        })
}

pub fn feature_matrix(
    model: &HmmModel,
    decodings: &DecodingSet,
    dataset: &Dataset,
    variables: &[String],
) -> Result<FeatureMatrix, SummaryError> {
    let k = model.n_states();
    let mut rows = BTreeMap::new();
    let mut source = BTreeMap::new();
    for name in variables {
        if let Some(b) = model.emission().get(name) {
            rows.insert(name.clone(), b.iter().map(|&p| Some(p)).collect());
            source.insert(name.clone(), FeatureSource::Model);
        } else if dataset.has_variable(name) {
            let mut ones = vec![0u64; k];
            let mut observed = vec![0u64; k];
            for entry in decoded_subjects(decodings, dataset, None) {
                let (subject, states, _) = entry?;
                for (visit, &state) in subject.visits.iter().zip(states) {
                    if let Some(x) = visit.observation(name) {
                        observed[state] += 1;
                        ones[state] += u64::from(x);
                    }
                }
            }
            let row = ones
                .iter()
                .zip(&observed)
                .map(|(&n1, &n)| (n > 0).then(|| n1 as f64 / n as f64))
                .collect();
            rows.insert(name.clone(), row);
            source.insert(name.clone(), FeatureSource::Empirical);
        } else {
            return Err(SummaryError::UnknownVariable(name.clone()));
        }
    }
    Ok(FeatureMatrix { states: (0..k).collect(), variables: variables.to_vec(), rows, source })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionAges {
    pub from: usize,
    pub to: usize,
    pub ages: Vec<f64>,
}

/// Consecutive-visit transition counts and destination ages of state changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionSummary {
    pub counts: Vec<Vec<u64>>,
    /// Off-diagonal transitions only, sorted by `(from, to)`.
    pub transition_ages: Vec<TransitionAges>,
}

impl TransitionSummary {
    pub fn ages(&self, from: usize, to: usize) -> &[f64] {
        self.transition_ages
            .iter()
            .find(|t| t.from == from && t.to == to)
            .map(|t| t.ages.as_slice())
            .unwrap_or(&[])
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

pub fn transition_summary(
    decodings: &DecodingSet,
    dataset: &Dataset,
    cohort: Option<&BTreeSet<String>>,
) -> Result<TransitionSummary, SummaryError> {
    let k = decodings.n_states;
    let mut counts = vec![vec![0u64; k]; k];
    let mut ages: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for entry in decoded_subjects(decodings, dataset, cohort) {
        let (subject, states, _) = entry?;
        for (t, pair) in states.windows(2).enumerate() {
            let (from, to) = (pair[0], pair[1]);
            counts[from][to] += 1;
            if from != to {
                ages.entry((from, to)).or_default().push(subject.visits[t + 1].age_months);
            }
        }
    }
    let transition_ages = ages.into_iter().map(|((from, to), ages)| TransitionAges { from, to, ages }).collect();
    Ok(TransitionSummary { counts, transition_ages })
}

/// Share of `from -> to` transitions whose destination visit is younger than
/// `age_cutoff`. `None` when there are no such transitions.
pub fn fraction_before(summary: &TransitionSummary, age_cutoff: f64, from: usize, to: usize) -> Option<f64> {
    let ages = summary.ages(from, to);
    if ages.is_empty() {
        return None;
    }
    let before = ages.iter().filter(|&&a| a < age_cutoff).count();
    Some(before as f64 / ages.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterfallPoint {
    pub subject_id: String,
    pub age_months: f64,
    pub state: usize,
    pub posterior_max: f64,
}

pub fn waterfall_points(
    decodings: &DecodingSet,
    dataset: &Dataset,
    cohort: Option<&BTreeSet<String>>,
) -> Result<Vec<WaterfallPoint>, SummaryError> {
    let mut out = Vec::new();
    for entry in decoded_subjects(decodings, dataset, cohort) {
        let (subject, states, posteriors) = entry?;
        for ((visit, &state), post) in subject.visits.iter().zip(states).zip(posteriors) {
            out.push(WaterfallPoint {
                subject_id: subject.subject_id.clone(),
                age_months: visit.age_months,
                state,
                posterior_max: post[state],
            });
        }
    }
    Ok(out)
}

/// Age at the first visit flagging `outcome`, per subject (id order).
/// Subjects that never flag it are left out.
pub fn outcome_ages(
    dataset: &Dataset,
    outcome: &str,
    cohort: Option<&BTreeSet<String>>,
) -> Result<Vec<f64>, SummaryError> {
    if !dataset.outcome_names().iter().any(|o| o == outcome) {
        return Err(SummaryError::UnknownOutcome(outcome.to_owned()));
    }
    Ok(dataset
        .subjects()
        .iter()
        .filter(|(id, _)| cohort.is_none_or(|c| c.contains(*id)))
        .filter_map(|(_, s)| {
            s.visits
                .iter()
                .find(|v| v.outcomes.get(outcome).copied().unwrap_or(false))
                .map(|v| v.age_months)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub outcome: Option<String>,
    pub sample_ages: Vec<f64>,
    pub bandwidth: f64,
    /// `(x, f(x))` pairs on an even grid.
    pub grid: Vec<(f64, f64)>,
}

impl DensityEstimate {
    pub fn with_outcome(mut self, outcome: impl Into<String>) -> Self {
        self.outcome = Some(outcome.into());
        self
    }

    /// Trapezoidal integral over the grid.
    pub fn integral(&self) -> f64 {
        self.grid.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum()
    }
}

/// Bandwidth used when the samples carry no spread information.
pub const FALLBACK_BANDWIDTH: f64 = 1.0;

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Silverman's rule of thumb, `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`.
///
/// Falls back to [`FALLBACK_BANDWIDTH`] for a single sample or zero spread,
/// and to the standard deviation alone when the IQR is zero.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len();
    if n < 2 {
        return FALLBACK_BANDWIDTH;
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    if !(sd > 0.0) {
        return FALLBACK_BANDWIDTH;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * (n as f64).powf(-0.2)
}

fn gaussian(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Gaussian KDE evaluated at a single point.
pub fn kde_at(samples: &[f64], bandwidth: f64, x: f64) -> f64 {
    let n = samples.len() as f64;
    samples.iter().map(|xi| gaussian((x - xi) / bandwidth)).sum::<f64>() / (n * bandwidth)
}

/// Gaussian KDE with Silverman bandwidth on `grid_points` evenly spaced
/// points over `[min - 4h, max + 4h]`.
pub fn kde(samples: &[f64], grid_points: usize) -> Result<DensityEstimate, SummaryError> {
    if samples.is_empty() {
        return Err(SummaryError::EmptySamples);
    }
    if grid_points < 2 {
        return Err(SummaryError::InvalidGrid(grid_points));
    }
    let h = silverman_bandwidth(samples);
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = min - 4.0 * h;
    let step = (max + 4.0 * h - lo) / (grid_points - 1) as f64;
    let grid = (0..grid_points)
        .map(|i| {
            let x = lo + step * i as f64;
            (x, kde_at(samples, h, x))
        })
        .collect();
    Ok(DensityEstimate { outcome: None, sample_ages: samples.to_vec(), bandwidth: h, grid })
}
