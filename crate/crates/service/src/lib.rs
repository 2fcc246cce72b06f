//! HTTP API for the cohort explorer.
//!
//! Single-researcher desk tool: no authentication, loopback bind by default,
//! synchronous training guarded by a busy flag. All state lives under one
//! data directory and survives restarts.

mod api;
pub mod error;
pub mod workspace;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

pub use api::router;
pub use error::ApiError;
pub use workspace::Workspace;

pub const DEFAULT_DATA_DIR: &str = "./data";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub bind: SocketAddr,
}

impl ServiceConfig {
    /// Reads `DPM_DATA_DIR` and `DPM_BIND`, falling back to the defaults.
    pub fn from_env() -> Result<Self, String> {
        let data_dir = std::env::var("DPM_DATA_DIR").unwrap_or_else(|_| DEFAULT_DATA_DIR.into());
        let bind = std::env::var("DPM_BIND").unwrap_or_else(|_| DEFAULT_BIND.into());
        Ok(ServiceConfig {
            data_dir: data_dir.into(),
            bind: bind.parse().map_err(|e| format!("invalid bind address {bind:?}: {e}"))?,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("failed to open workspace: {0}")]
    Workspace(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub async fn serve(config: ServiceConfig) -> Result<(), ServeError> {
    let workspace = Workspace::open(&config.data_dir).map_err(|e| ServeError::Workspace(e.message))?;
    let listener = tokio::net::TcpListener::bind(config.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, data_dir = %config.data_dir.display(), "serving");
    axum::serve(listener, router(Arc::new(workspace))).await?;
    Ok(())
}
