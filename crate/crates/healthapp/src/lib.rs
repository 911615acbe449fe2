//! The healthcare application service.
//!
//! On start an instance obtains its credentials from the registry
//! (registering on first boot, reregistering when it is told which identity
//! to assume), derives its record key and serves patient CRUD over HTTP on
//! top of the configured storage backend. An instance on the vault backend
//! can be rebuilt from scratch with `POST /admin/recover`.

mod app;
mod client;
mod config;
mod http;

pub use app::{AppState, HealthApp, Instance, INSTANCE_ID_FILE};
pub use client::{ApiError, AppClient};
pub use config::{AppConfig, AppSection, KdfSection, RegistrySection, VaultSection};
pub use http::{router, CreatedResponse, ListResponse, RecoverRequest, RecoverResponse};

use thiserror::Error;
use vaultline_core::KdfError;
use vaultline_net::NetError;
use vaultline_registry::RegistryError;
use vaultline_storage::StorageError;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("registry unreachable: {0}")]
    RegistryUnreachable(String),
    #[error("registry refused the admin token")]
    Unauthorized,
    #[error("registry: {0}")]
    Registry(RegistryError),
    #[error("key derivation: {0}")]
    Kdf(#[from] KdfError),
    #[error("storage: {0}")]
    Storage(#[from] StorageError),
    #[error("network: {0}")]
    Net(#[from] NetError),
    #[error("config: {0}")]
    Config(String),
    #[error("not supported: {0}")]
    Unsupported(String),
    #[error("a recovery is already running")]
    Busy,
}

impl From<RegistryError> for AppError {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::Unreachable(m) => AppError::RegistryUnreachable(m),
            RegistryError::Unauthorized => AppError::Unauthorized,
            other => AppError::Registry(other),
        }
    }
}
