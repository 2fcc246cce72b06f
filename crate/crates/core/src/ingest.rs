//! CSV ingest of longitudinal visit data.
//!
//! A CSV row is one visit. The [`IngestConfig`] names the subject and age
//! columns and splits the remaining columns into model variables (used as
//! HMM emissions), extra variables (summarized only) and outcome flags.
//! Observation cells are `0`, `1` or empty (missing). Missing values are
//! kept as `None`; nothing is imputed here.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::json;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("malformed CSV at row {row}: {message}")]
    MalformedCsv { row: u64, message: String },
    #[error("duplicate visit for subject {subject_id:?} at age {age_months}")]
    DuplicateVisit { subject_id: String, age_months: f64 },
    #[error("row {row}, column {column:?}: expected 0, 1 or empty, found {value:?}")]
    NonBinaryValue { row: u64, column: String, value: String },
    #[error("row {row}: negative age {value}")]
    NegativeAge { row: u64, value: f64 },
    #[error("row {row}: age {value:?} is not a finite number")]
    InvalidAge { row: u64, value: String },
    #[error("row {row}: column {column:?} must not be empty")]
    MissingValue { row: u64, column: String },
    #[error("config references column {column:?} which is not in the CSV header")]
    UnknownColumn { column: String },
    #[error("invalid ingest config: {0}")]
    InvalidConfig(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
}

impl IngestError {
    /// CSV line number (header is row 1) when the error is tied to a row.
    pub fn row(&self) -> Option<u64> {
        match self {
            IngestError::MalformedCsv { row, .. }
            | IngestError::NonBinaryValue { row, .. }
            | IngestError::NegativeAge { row, .. }
            | IngestError::InvalidAge { row, .. }
            | IngestError::MissingValue { row, .. } => Some(*row),
            _ => None,
        }
    }
}

/// Which CSV columns play which role. Read from a JSON document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestConfig {
    pub subject_col: String,
    pub age_col: String,
    pub model_vars: Vec<String>,
    #[serde(default)]
    pub extra_vars: Vec<String>,
    #[serde(default)]
    pub outcome_cols: Vec<String>,
}

impl IngestConfig {
    pub fn from_json(text: &str) -> Result<Self, IngestError> {
        let config: IngestConfig =
            json::from_str(text).map_err(|e| IngestError::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.subject_col.is_empty() || self.age_col.is_empty() {
            return Err(IngestError::InvalidConfig(
                "subject_col and age_col must be non-empty".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for name in self.all_columns() {
            if !seen.insert(name) {
                return Err(IngestError::InvalidConfig(format!(
                    "column {name:?} is assigned more than one role"
                )));
            }
        }
        Ok(())
    }

    fn all_columns(&self) -> impl Iterator<Item = &str> {
        [self.subject_col.as_str(), self.age_col.as_str()]
            .into_iter()
            .chain(self.model_vars.iter().map(String::as_str))
            .chain(self.extra_vars.iter().map(String::as_str))
            .chain(self.outcome_cols.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Visit {
    pub subject_id: String,
    pub age_months: f64,
    /// `Some(true)` / `Some(false)` for observed 1 / 0, `None` when missing.
    pub observations: BTreeMap<String, Option<bool>>,
    /// Outcome events flagged at this visit.
    pub outcomes: BTreeMap<String, bool>,
}

impl Visit {
    pub fn observation(&self, variable: &str) -> Option<bool> {
        self.observations.get(variable).copied().flatten()
    }
}

/// A subject's visits, strictly ascending in age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub subject_id: String,
    pub visits: Vec<Visit>,
}

impl Subject {
    pub fn ages(&self) -> Vec<f64> {
        self.visits.iter().map(|v| v.age_months).collect()
    }
}

/// Validated, immutable collection of subjects.
///
/// Every visit carries an entry for every model and extra variable (missing
/// as `None`) and for every outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDataset")]
pub struct Dataset {
    subject_column: String,
    age_column: String,
    model_variables: Vec<String>,
    extra_variables: Vec<String>,
    outcome_names: Vec<String>,
    subjects: BTreeMap<String, Subject>,
}

#[derive(Deserialize)]
struct RawDataset {
    subject_column: String,
    age_column: String,
    model_variables: Vec<String>,
    extra_variables: Vec<String>,
    outcome_names: Vec<String>,
    subjects: BTreeMap<String, Subject>,
}

impl TryFrom<RawDataset> for Dataset {
    type Error = IngestError;

    fn try_from(raw: RawDataset) -> Result<Self, Self::Error> {
        let config = IngestConfig {
            subject_col: raw.subject_column,
            age_col: raw.age_column,
            model_vars: raw.model_variables,
            extra_vars: raw.extra_variables,
            outcome_cols: raw.outcome_names,
        };
        let mut visits = Vec::new();
        for (key, subject) in raw.subjects {
            if subject.visits.is_empty() {
                return Err(IngestError::InvalidDataset(format!(
                    "subject {key:?} has no visits"
                )));
            }
            for visit in subject.visits {
                if visit.subject_id != key || subject.subject_id != key {
                    return Err(IngestError::InvalidDataset(format!(
                        "subject key {key:?} does not match its visits"
                    )));
                }
                visits.push(visit);
            }
        }
        Dataset::from_visits(&config, visits)
    }
}

impl Dataset {
    /// Builds a dataset from loose visits: validates every value, fills absent
    /// observation keys with `None` and absent outcomes with `false`, groups
    /// by subject and sorts by age.
    pub fn from_visits(config: &IngestConfig, visits: Vec<Visit>) -> Result<Self, IngestError> {
        config.validate()?;
        let known: BTreeSet<&str> = config
            .model_vars
            .iter()
            .chain(&config.extra_vars)
            .map(String::as_str)
            .collect();
        let outcomes: BTreeSet<&str> = config.outcome_cols.iter().map(String::as_str).collect();

        let mut grouped: BTreeMap<String, Vec<Visit>> = BTreeMap::new();
        for mut visit in visits {
            if visit.subject_id.is_empty() {
                return Err(IngestError::InvalidDataset("empty subject id".into()));
            }
            if !visit.age_months.is_finite() {
                return Err(IngestError::InvalidDataset(format!(
                    "non-finite age for subject {:?}",
                    visit.subject_id
                )));
            }
            if visit.age_months < 0.0 {
                return Err(IngestError::InvalidDataset(format!(
                    "negative age {} for subject {:?}",
                    visit.age_months, visit.subject_id
                )));
            }
            if let Some(unknown) = visit.observations.keys().find(|k| !known.contains(k.as_str())) {
                return Err(IngestError::InvalidDataset(format!(
                    "visit carries undeclared variable {unknown:?}"
                )));
            }
            if let Some(unknown) = visit.outcomes.keys().find(|k| !outcomes.contains(k.as_str())) {
                return Err(IngestError::InvalidDataset(format!(
                    "visit carries undeclared outcome {unknown:?}"
                )));
            }
            // -0.0 would render as "-0" and still compare equal; keep one spelling.
            if visit.age_months == 0.0 {
                visit.age_months = 0.0;
            }
            for name in &known {
                visit.observations.entry((*name).to_owned()).or_insert(None);
            }
            for name in &outcomes {
                visit.outcomes.entry((*name).to_owned()).or_insert(false);
            }
            grouped.entry(visit.subject_id.clone()).or_default().push(visit);
        }

        let mut subjects = BTreeMap::new();
        for (subject_id, mut visits) in grouped {
            visits.sort_by(|a, b| a.age_months.total_cmp(&b.age_months));
            if let Some(pair) = visits.windows(2).find(|w| w[0].age_months == w[1].age_months) {
                return Err(IngestError::DuplicateVisit {
                    subject_id,
                    age_months: pair[0].age_months,
                });
            }
            subjects.insert(subject_id.clone(), Subject { subject_id, visits });
        }

        Ok(Dataset {
            subject_column: config.subject_col.clone(),
            age_column: config.age_col.clone(),
            model_variables: config.model_vars.clone(),
            extra_variables: config.extra_vars.clone(),
            outcome_names: config.outcome_cols.clone(),
            subjects,
        })
    }

    pub fn subjects(&self) -> &BTreeMap<String, Subject> {
        &self.subjects
    }

    pub fn subject(&self, subject_id: &str) -> Option<&Subject> {
        self.subjects.get(subject_id)
    }

    pub fn model_variables(&self) -> &[String] {
        &self.model_variables
    }

    pub fn extra_variables(&self) -> &[String] {
        &self.extra_variables
    }

    pub fn outcome_names(&self) -> &[String] {
        &self.outcome_names
    }

    pub fn has_variable(&self, name: &str) -> bool {
        self.model_variables.iter().chain(&self.extra_variables).any(|v| v == name)
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_visits(&self) -> usize {
        self.subjects.values().map(|s| s.visits.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    /// The config that re-parses [`export_dataset`] output into this dataset.
    pub fn ingest_config(&self) -> IngestConfig {
        IngestConfig {
            subject_col: self.subject_column.clone(),
            age_col: self.age_column.clone(),
            model_vars: self.model_variables.clone(),
            extra_vars: self.extra_variables.clone(),
            outcome_cols: self.outcome_names.clone(),
        }
    }

    /// Restriction to the given subject ids; unknown ids are ignored.
    pub fn restrict<'a>(&self, subject_ids: impl IntoIterator<Item = &'a String>) -> Dataset {
        let mut out = Dataset { subjects: BTreeMap::new(), ..self.clone_header() };
        for id in subject_ids {
            if let Some(s) = self.subjects.get(id) {
                out.subjects.insert(id.clone(), s.clone());
            }
        }
        out
    }

    fn clone_header(&self) -> Dataset {
        Dataset {
            subject_column: self.subject_column.clone(),
            age_column: self.age_column.clone(),
            model_variables: self.model_variables.clone(),
            extra_variables: self.extra_variables.clone(),
            outcome_names: self.outcome_names.clone(),
            subjects: BTreeMap::new(),
        }
    }

    /// Content-derived identifier: equal datasets get equal ids.
    pub fn id(&self) -> String {
        let mut bytes = export_dataset(self).into_bytes();
        bytes.extend_from_slice(json::to_string(&self.ingest_config()).as_bytes());
        format!("ds-{}", json::fingerprint(&bytes, 16))
    }
}

fn csv_error(err: csv::Error) -> IngestError {
    let row = err.position().map(|p| p.line()).unwrap_or(0);
    IngestError::MalformedCsv { row, message: err.to_string() }
}

fn parse_binary(cell: &str, row: u64, column: &str) -> Result<Option<bool>, IngestError> {
    match cell {
        "" => Ok(None),
        "0" => Ok(Some(false)),
        "1" => Ok(Some(true)),
        other => Err(IngestError::NonBinaryValue {
            row,
            column: column.to_owned(),
            value: other.to_owned(),
        }),
    }
}

/// Parses CSV text into a [`Dataset`]. Columns not named by the config are
/// ignored.
pub fn parse_dataset(csv_text: &str, config: &IngestConfig) -> Result<Dataset, IngestError> {
    config.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(csv_text.as_bytes());
    let mut records = reader.records();

    let header = match records.next() {
        Some(r) => r.map_err(csv_error)?,
        None => {
            return Err(IngestError::MalformedCsv { row: 1, message: "missing header row".into() })
        }
    };
    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, name) in header.iter().enumerate() {
        if index.insert(name, i).is_some() {
            return Err(IngestError::MalformedCsv {
                row: 1,
                message: format!("duplicate header {name:?}"),
            });
        }
    }
    let column = |name: &str| {
        index
            .get(name)
            .copied()
            .ok_or_else(|| IngestError::UnknownColumn { column: name.to_owned() })
    };
    let subject_idx = column(&config.subject_col)?;
    let age_idx = column(&config.age_col)?;
    let vars: Vec<(&str, usize)> = config
        .model_vars
        .iter()
        .chain(&config.extra_vars)
        .map(|v| column(v).map(|i| (v.as_str(), i)))
        .collect::<Result<_, _>>()?;
    let outcomes: Vec<(&str, usize)> = config
        .outcome_cols
        .iter()
        .map(|v| column(v).map(|i| (v.as_str(), i)))
        .collect::<Result<_, _>>()?;

    let mut visits = Vec::new();
    for record in records {
        let record = record.map_err(csv_error)?;
        let row = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            return Err(IngestError::MalformedCsv {
                row,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let subject_id = &record[subject_idx];
        if subject_id.is_empty() {
            return Err(IngestError::MissingValue { row, column: config.subject_col.clone() });
        }
        let age_cell = &record[age_idx];
        if age_cell.is_empty() {
            return Err(IngestError::MissingValue { row, column: config.age_col.clone() });
        }
        let age_months: f64 = match age_cell.trim().parse::<f64>() {
            Ok(a) if a.is_finite() => a,
            _ => return Err(IngestError::InvalidAge { row, value: age_cell.to_owned() }),
        };
        if age_months < 0.0 {
            return Err(IngestError::NegativeAge { row, value: age_months });
        }
        let mut observations = BTreeMap::new();
        for &(name, i) in &vars {
            observations.insert(name.to_owned(), parse_binary(&record[i], row, name)?);
        }
        let mut flags = BTreeMap::new();
        for &(name, i) in &outcomes {
            flags.insert(name.to_owned(), parse_binary(&record[i], row, name)? == Some(true));
        }
        visits.push(Visit { subject_id: subject_id.to_owned(), age_months, observations, outcomes: flags });
    }
    Dataset::from_visits(config, visits)
}

/// Canonical CSV: subjects in id order, visits in age order, missing cells
/// empty, outcome flags as `0`/`1`.
pub fn export_dataset(dataset: &Dataset) -> String {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let variables: Vec<&String> =
        dataset.model_variables.iter().chain(&dataset.extra_variables).collect();

    let mut header: Vec<&str> = vec![&dataset.subject_column, &dataset.age_column];
    header.extend(variables.iter().map(|s| s.as_str()));
    header.extend(dataset.outcome_names.iter().map(String::as_str));
    writer.write_record(&header).expect("write to Vec");

    for subject in dataset.subjects.values() {
        for visit in &subject.visits {
            let mut row: Vec<String> = Vec::with_capacity(header.len());
            row.push(visit.subject_id.clone());
            row.push(visit.age_months.to_string());
            for v in &variables {
                row.push(match visit.observation(v) {
                    Some(true) => "1".into(),
                    Some(false) => "0".into(),
                    None => String::new(),
                });
            }
            for o in &dataset.outcome_names {
                let flagged = visit.outcomes.get(o).copied().unwrap_or(false);
                row.push(if flagged { "1" } else { "0" }.into());
            }
            writer.write_record(&row).expect("write to Vec");
        }
    }
    String::from_utf8(writer.into_inner().expect("flush to Vec")).expect("CSV output is UTF-8")
}
