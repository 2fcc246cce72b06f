//! File-backed cohort store: one JSON document per cohort under
//! `<data_dir>/cohorts/<cohort_id>.json`.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::json;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("cohort {0:?} not found")]
    NotFound(String),
    #[error("cohort store I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt cohort file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cohort {
    pub cohort_id: String,
    pub name: String,
    pub query_text: String,
    pub member_ids: BTreeSet<String>,
    pub created_from_model: String,
}

/// Single writer, many readers. A write holds the lock until the file has
/// been renamed into place, so readers in this process always see it.
#[derive(Debug)]
pub struct CohortStore {
    dir: PathBuf,
    lock: RwLock<()>,
}

/// Writes `contents` to `path` through a sibling temp file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)
}

impl CohortStore {
    pub fn open(data_dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = data_dir.as_ref().join("cohorts");
        fs::create_dir_all(&dir)?;
        Ok(CohortStore { dir, lock: RwLock::new(()) })
    }

    fn path(&self, cohort_id: &str) -> PathBuf {
        self.dir.join(format!("{cohort_id}.json"))
    }

    fn valid_id(cohort_id: &str) -> bool {
        !cohort_id.is_empty() && cohort_id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-')
    }

    pub fn save(
        &self,
        name: &str,
        query_text: &str,
        member_ids: BTreeSet<String>,
        model_id: &str,
    ) -> Result<Cohort, StoreError> {
        let _guard = self.lock.write().unwrap_or_else(|e| e.into_inner());
        let mut cohort_id = format!("c-{}", uuid::Uuid::new_v4().simple());
        while self.path(&cohort_id).exists() {
            cohort_id = format!("c-{}", uuid::Uuid::new_v4().simple());
        }
        let cohort = Cohort {
            cohort_id,
            name: name.to_owned(),
            query_text: query_text.to_owned(),
            member_ids,
            created_from_model: model_id.to_owned(),
        };
        write_atomic(&self.path(&cohort.cohort_id), json::to_string(&cohort).as_bytes())?;
        Ok(cohort)
    }

    pub fn get(&self, cohort_id: &str) -> Result<Cohort, StoreError> {
        if !Self::valid_id(cohort_id) {
            return Err(StoreError::NotFound(cohort_id.to_owned()));
        }
        let _guard = self.lock.read().unwrap_or_else(|e| e.into_inner());
        self.read(&self.path(cohort_id)).map_err(|e| match e {
            StoreError::Io(io) if io.kind() == io::ErrorKind::NotFound => StoreError::NotFound(cohort_id.to_owned()),
            other => other,
        })
    }

    fn read(&self, path: &Path) -> Result<Cohort, StoreError> {
        let text = fs::read_to_string(path)?;
        json::from_str(&text).map_err(|e| StoreError::Corrupt { path: path.to_owned(), message: e.to_string() })
    }

    /// All cohorts, ordered by id.
    pub fn list(&self) -> Result<Vec<Cohort>, StoreError> {
        let _guard = self.lock.read().unwrap_or_else(|e| e.into_inner());
        let mut paths = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                paths.push(path);
            }
        }
        paths.sort();
        paths.iter().map(|p| self.read(p)).collect()
    }

    pub fn delete(&self, cohort_id: &str) -> Result<(), StoreError> {
        if !Self::valid_id(cohort_id) {
            return Err(StoreError::NotFound(cohort_id.to_owned()));
        }
        let _guard = self.lock.write().unwrap_or_else(|e| e.into_inner());
        fs::remove_file(self.path(cohort_id)).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => StoreError::NotFound(cohort_id.to_owned()),
            _ => StoreError::Io(e),
        })
    }
}
