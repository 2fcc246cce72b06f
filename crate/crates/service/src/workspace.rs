//! File-backed workspace holding datasets, models, decoding caches and
//! cohorts.
//!
//! Layout under the data directory:
//!
//! ```text
//! datasets/<dataset_id>.json
//! models/<model_id>.json
//! models/<model_id>.decoding.json
//! cohorts/<cohort_id>.json
//! ```
//!
//! Writes go through one gate; in-memory maps are swapped under a short
//! write lock after the file is in place, so readers see either the old or
//! the new state.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use dpm_core::hmm::{self, DecodingSet, HmmModel, TrainConfig};
use dpm_core::ingest::{parse_dataset, Dataset, IngestConfig};
use dpm_core::query::{self, write_atomic, Cohort, CohortStore};
use dpm_core::summarize::{self, DensityEstimate, FeatureMatrix, TransitionSummary, WaterfallPoint};
use dpm_core::json;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::ApiError;

pub const DEFAULT_GRID_POINTS: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub dataset_id: String,
    pub n_subjects: usize,
    pub n_visits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRequest {
    pub dataset_id: String,
    pub n_states: usize,
    pub seed: u64,
    pub max_iter: Option<usize>,
    pub n_restarts: Option<usize>,
    pub rel_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResponse {
    pub model_id: String,
    pub log_likelihood: f64,
    pub n_iterations_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitView {
    pub age_months: f64,
    pub observations: BTreeMap<String, Option<bool>>,
    pub state: usize,
    pub posterior: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectView {
    pub subject_id: String,
    pub visits: Vec<VisitView>,
    pub viterbi_path: Vec<usize>,
}

struct ModelEntry {
    model: Arc<HmmModel>,
    decodings: Option<Arc<DecodingSet>>,
}

#[derive(Default)]
struct State {
    datasets: BTreeMap<String, Arc<Dataset>>,
    models: BTreeMap<String, ModelEntry>,
}

pub struct Workspace {
    data_dir: PathBuf,
    state: RwLock<State>,
    writer: Mutex<()>,
    training: AtomicBool,
    cohorts: CohortStore,
}

/// Holds the training slot; released on drop.
pub struct TrainingSlot<'a>(&'a AtomicBool);

impl Drop for TrainingSlot<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

fn read_json_files(dir: &Path, suffix: &str) -> std::io::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if let Some(stem) = name.strip_suffix(suffix) {
            out.push((stem.to_owned(), fs::read_to_string(&path)?));
        }
    }
    out.sort();
    Ok(out)
}

impl Workspace {
    /// Opens (or creates) a workspace and loads everything persisted in it.
    pub fn open(data_dir: impl Into<PathBuf>) -> Result<Self, ApiError> {
        let data_dir = data_dir.into();
        for sub in ["datasets", "models"] {
            fs::create_dir_all(data_dir.join(sub))?;
        }
        let cohorts = CohortStore::open(&data_dir)?;
        let mut state = State::default();

        for (id, text) in read_json_files(&data_dir.join("datasets"), ".json")? {
            let dataset: Dataset = json::from_str(&text)
                .map_err(|e| ApiError::internal(format!("corrupt dataset {id}: {e}")))?;
            state.datasets.insert(id, Arc::new(dataset));
        }
        let models_dir = data_dir.join("models");
        let decodings: BTreeMap<String, String> =
            read_json_files(&models_dir, ".decoding.json")?.into_iter().collect();
        for (id, text) in read_json_files(&models_dir, ".json")? {
            if id.ends_with(".decoding") {
                continue;
            }
            let model = HmmModel::from_json(&text)
                .map_err(|e| ApiError::internal(format!("corrupt model {id}: {e}")))?;
            if !state.datasets.contains_key(model.trained_on()) {
                tracing::warn!(model = %id, dataset = %model.trained_on(), "skipping model whose dataset is missing");
                continue;
            }
            let decodings = match decodings.get(&id) {
                Some(text) => Some(Arc::new(
                    DecodingSet::from_json(text)
                        .map_err(|e| ApiError::internal(format!("corrupt decoding {id}: {e}")))?,
                )),
                None => None,
            };
            state.models.insert(id, ModelEntry { model: Arc::new(model), decodings });
        }

        Ok(Workspace { data_dir, state: RwLock::new(state), writer: Mutex::new(()), training: AtomicBool::new(false), cohorts })
    }

    pub fn data_dir(&self) -> &Path {
        &self.data_dir
    }

    fn write_gate(&self) -> MutexGuard<'_, ()> {
        self.writer.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn read_state(&self) -> std::sync::RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write_state(&self) -> std::sync::RwLockWriteGuard<'_, State> {
        self.state.write().unwrap_or_else(|e| e.into_inner())
    }

    /// Claims the single training slot, or fails with `training_busy`.
    pub fn try_start_training(&self) -> Result<TrainingSlot<'_>, ApiError> {
        self.training
            .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
            .map(|_| TrainingSlot(&self.training))
            .map_err(|_| ApiError::busy())
    }

    pub fn add_dataset(&self, csv_text: &str, config: &IngestConfig) -> Result<DatasetInfo, ApiError> {
        let dataset = parse_dataset(csv_text, config)?;
        let info = DatasetInfo {
            dataset_id: dataset.id(),
            n_subjects: dataset.n_subjects(),
            n_visits: dataset.n_visits(),
        };
        let _gate = self.write_gate();
        let path = self.data_dir.join("datasets").join(format!("{}.json", info.dataset_id));
        write_atomic(&path, json::to_string(&dataset).as_bytes())?;
        self.write_state().datasets.insert(info.dataset_id.clone(), Arc::new(dataset));
        Ok(info)
    }

    pub fn dataset(&self, dataset_id: &str) -> Result<Arc<Dataset>, ApiError> {
        self.read_state()
            .datasets
            .get(dataset_id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("dataset", dataset_id))
    }

    pub fn train(&self, request: &TrainRequest) -> Result<TrainResponse, ApiError> {
        let _slot = self.try_start_training()?;
        let dataset = self.dataset(&request.dataset_id)?;
        let mut config = TrainConfig::new(request.n_states, request.seed);
        if let Some(m) = request.max_iter {
            config.max_iter = m;
        }
        if let Some(r) = request.n_restarts {
            config.n_restarts = r;
        }
        if let Some(t) = request.rel_tol {
            config.rel_tol = t;
        }
        let model = hmm::train(&dataset, &config)?;
        let model_id = model.id();
        let response = TrainResponse {
            model_id: model_id.clone(),
            log_likelihood: model.log_likelihood(),
            n_iterations_run: model.n_iterations_run(),
        };
        let _gate = self.write_gate();
        write_atomic(&self.model_path(&model_id), model.to_json().as_bytes())?;
        let mut state = self.write_state();
        state
            .models
            .entry(model_id)
            .or_insert_with(|| ModelEntry { model: Arc::new(model), decodings: None });
        Ok(response)
    }

    fn model_path(&self, model_id: &str) -> PathBuf {
        self.data_dir.join("models").join(format!("{model_id}.json"))
    }

    pub fn model(&self, model_id: &str) -> Result<Arc<HmmModel>, ApiError> {
        self.read_state()
            .models
            .get(model_id)
            .map(|e| e.model.clone())
            .ok_or_else(|| ApiError::not_found("model", model_id))
    }

    /// Persisted model document, byte for byte.
    pub fn model_json(&self, model_id: &str) -> Result<String, ApiError> {
        Ok(self.model(model_id)?.to_json())
    }

    /// Model, its training dataset and the (cached) decoding of one on the other.
    pub fn decoded(&self, model_id: &str) -> Result<(Arc<HmmModel>, Arc<Dataset>, Arc<DecodingSet>), ApiError> {
        let (model, cached) = {
            let state = self.read_state();
            let entry = state.models.get(model_id).ok_or_else(|| ApiError::not_found("model", model_id))?;
            (entry.model.clone(), entry.decodings.clone())
        };
        let dataset = self.dataset(model.trained_on())?;
        if let Some(d) = cached {
            return Ok((model, dataset, d));
        }
        let decodings = Arc::new(hmm::decode(&model, &dataset)?);
        let _gate = self.write_gate();
        if let Some(d) = self.read_state().models.get(model_id).and_then(|e| e.decodings.clone()) {
            return Ok((model, dataset, d));
        }
        let path = self.data_dir.join("models").join(format!("{model_id}.decoding.json"));
        write_atomic(&path, decodings.to_json().as_bytes())?;
        if let Some(entry) = self.write_state().models.get_mut(model_id) {
            entry.decodings = Some(decodings.clone());
        }
        Ok((model, dataset, decodings))
    }

    fn cohort_members(&self, cohort_id: Option<&str>) -> Result<Option<BTreeSet<String>>, ApiError> {
        match cohort_id.filter(|c| !c.is_empty()) {
            Some(id) => Ok(Some(self.cohorts.get(id)?.member_ids)),
            None => Ok(None),
        }
    }

    /// Feature matrix for `variables`; defaults to every model then extra variable.
    pub fn feature_matrix(&self, model_id: &str, variables: Option<Vec<String>>) -> Result<FeatureMatrix, ApiError> {
        let (model, dataset, decodings) = self.decoded(model_id)?;
        let variables = variables.unwrap_or_else(|| {
            model
                .variables()
                .map(str::to_owned)
                .chain(dataset.extra_variables().iter().cloned())
                .collect()
        });
        Ok(summarize::feature_matrix(&model, &decodings, &dataset, &variables)?)
    }

    pub fn waterfall(&self, model_id: &str, cohort_id: Option<&str>) -> Result<Vec<WaterfallPoint>, ApiError> {
        let (_, dataset, decodings) = self.decoded(model_id)?;
        let cohort = self.cohort_members(cohort_id)?;
        Ok(summarize::waterfall_points(&decodings, &dataset, cohort.as_ref())?)
    }

    pub fn transitions(&self, model_id: &str, cohort_id: Option<&str>) -> Result<TransitionSummary, ApiError> {
        let (_, dataset, decodings) = self.decoded(model_id)?;
        let cohort = self.cohort_members(cohort_id)?;
        Ok(summarize::transition_summary(&decodings, &dataset, cohort.as_ref())?)
    }

    pub fn density(
        &self,
        model_id: &str,
        outcome: &str,
        cohort_id: Option<&str>,
        grid_points: Option<usize>,
    ) -> Result<DensityEstimate, ApiError> {
        let (_, dataset, _) = self.decoded(model_id)?;
        let cohort = self.cohort_members(cohort_id)?;
        let ages = summarize::outcome_ages(&dataset, outcome, cohort.as_ref())?;
        if ages.is_empty() {
            return Err(ApiError::validation(format!("no subject in scope has outcome {outcome:?}"))
                .with_detail(json!({ "reason": "empty_samples" })));
        }
        Ok(summarize::kde(&ages, grid_points.unwrap_or(DEFAULT_GRID_POINTS))?.with_outcome(outcome))
    }

    pub fn subject(&self, model_id: &str, subject_id: &str) -> Result<SubjectView, ApiError> {
        let (_, dataset, decodings) = self.decoded(model_id)?;
        let subject = dataset.subject(subject_id).ok_or_else(|| ApiError::not_found("subject", subject_id))?;
        let d = decodings.subjects.get(subject_id).ok_or_else(|| ApiError::not_found("subject", subject_id))?;
        let visits = subject
            .visits
            .iter()
            .zip(&d.states)
            .zip(&d.posteriors)
            .map(|((v, &state), post)| VisitView {
                age_months: v.age_months,
                observations: v.observations.clone(),
                state,
                posterior: post.clone(),
            })
            .collect();
        Ok(SubjectView { subject_id: subject_id.to_owned(), visits, viterbi_path: d.viterbi_path.clone() })
    }

    /// Evaluates `query_text` on the model's decoding and saves the result.
    pub fn create_cohort(&self, model_id: &str, name: &str, query_text: &str) -> Result<Cohort, ApiError> {
        let parsed = query::parse_query(query_text)?;
        let (_, _, decodings) = self.decoded(model_id)?;
        let members = query::evaluate(&parsed, &decodings)?;
        let _gate = self.write_gate();
        Ok(self.cohorts.save(name, query_text, members, model_id)?)
    }

    pub fn list_cohorts(&self) -> Result<Vec<Cohort>, ApiError> {
        Ok(self.cohorts.list()?)
    }

    pub fn delete_cohort(&self, cohort_id: &str) -> Result<(), ApiError> {
        let _gate = self.write_gate();
        Ok(self.cohorts.delete(cohort_id)?)
    }
}
