//! Patient record storage behind one interface, in seven flavours.
//!
//! | [`BackendKind`]        | where rows live                 | at rest            |
//! |------------------------|---------------------------------|--------------------|
//! | `LocalFilePlain`       | app host, `pii/` + `financial/` | `?`-delimited text |
//! | `LocalFileEncrypted`   | app host, same layout           | sealed envelopes   |
//! | `RemoteFilePlain`      | data host file share            | `?`-delimited text |
//! | `RemoteFileEncrypted`  | data host file share            | sealed envelopes   |
//! | `LocalDatabase`        | SQLite on the app host          | `?`-delimited text |
//! | `RemoteDatabase`       | SQLite on the data host         | `?`-delimited text |
//! | `ProposedVault`        | vault service, UUID-keyed       | sealed envelopes   |
//!
//! All seven give the same observable CRUD behaviour; they differ in cost,
//! locality and what an attacker on the application host can reach.

mod datahost;
mod locks;
mod metrics;
mod open;
mod remote;
mod rows;
mod tabular;
mod vault_backend;

pub use datahost::{router as datahost_router, DataHost};
pub use metrics::{BackendMetrics, Meter, OpCounts};
pub use open::{
    open_backend, BackendContext, StorageSettings, LOCAL_DB_FILE, LOCAL_ROWS_DIR, VAULT_INDEX_DIR,
};
pub use remote::{Area, RemoteRows};
pub use rows::{LocalDir, RowError, RowStore, SqliteRows};
pub use tabular::{Codec, TabularStore};
pub use vault_backend::{IndexEntry, RecoveryOutcome, VaultBackend, INDEX_FILE};

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use vaultline_core::PatientRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    LocalFilePlain,
    LocalFileEncrypted,
    RemoteFilePlain,
    RemoteFileEncrypted,
    LocalDatabase,
    RemoteDatabase,
    ProposedVault,
}

impl BackendKind {
    /// In report row order.
    pub const ALL: [BackendKind; 7] = [
        BackendKind::LocalFilePlain,
        BackendKind::RemoteFilePlain,
        BackendKind::LocalFileEncrypted,
        BackendKind::RemoteFileEncrypted,
        BackendKind::LocalDatabase,
        BackendKind::RemoteDatabase,
        BackendKind::ProposedVault,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::LocalFilePlain => "local-file-plain",
            BackendKind::LocalFileEncrypted => "local-file-encrypted",
            BackendKind::RemoteFilePlain => "remote-file-plain",
            BackendKind::RemoteFileEncrypted => "remote-file-encrypted",
            BackendKind::LocalDatabase => "local-database",
            BackendKind::RemoteDatabase => "remote-database",
            BackendKind::ProposedVault => "proposed-vault",
        }
    }

    /// Human-readable approach name used in reports.
    pub fn label(self) -> &'static str {
        match self {
            BackendKind::LocalFilePlain => "Unencrypted local filesystem",
            BackendKind::LocalFileEncrypted => "Encrypted local filesystem",
            BackendKind::RemoteFilePlain => "Unencrypted remote filesystem",
            BackendKind::RemoteFileEncrypted => "Encrypted remote filesystem",
            BackendKind::LocalDatabase => "Local database",
            BackendKind::RemoteDatabase => "Remote database",
            BackendKind::ProposedVault => "Specialized remote data storage (vault)",
        }
    }

    /// Rows leave the application host.
    pub fn is_remote(self) -> bool {
        matches!(
            self,
            BackendKind::RemoteFilePlain
                | BackendKind::RemoteFileEncrypted
                | BackendKind::RemoteDatabase
                | BackendKind::ProposedVault
        )
    }

    /// Rows are sealed by the application before they are stored.
    pub fn is_encrypted(self) -> bool {
        matches!(
            self,
            BackendKind::LocalFileEncrypted | BackendKind::RemoteFileEncrypted | BackendKind::ProposedVault
        )
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BackendKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown backend kind {s:?}"))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StorageError {
    #[error("patient {0} already exists")]
    DuplicatePatient(String),
    #[error("patient {0} not found")]
    NotFound(String),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("stored data failed authentication: {0}")]
    AuthenticationFailure(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("stored data is corrupt: {0}")]
    Corrupt(String),
    #[error("storage failure: {0}")]
    Io(String),
}

impl StorageError {
    /// Stable name used for HTTP error bodies and for comparing outcomes
    /// across backends.
    pub fn kind(&self) -> &'static str {
        match self {
            StorageError::DuplicatePatient(_) => "duplicate_patient",
            StorageError::NotFound(_) => "not_found",
            StorageError::BackendUnavailable(_) => "backend_unavailable",
            StorageError::AuthenticationFailure(_) => "authentication_failure",
            StorageError::InvalidRecord(_) => "invalid_record",
            StorageError::Corrupt(_) => "corrupt",
            StorageError::Io(_) => "io",
        }
    }
}

/// Where the two rows of a created record ended up: file paths, table keys
/// or vault references, rendered as strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordHandle {
    pub pii: String,
    pub financial: String,
}

/// Storage an attacker holding the application host can write to with the
/// application's own access. The vault is absent from every surface: it
/// only exposes its narrow API and sits outside the application boundary.
#[derive(Clone)]
pub enum AttackSurface {
    /// Files and directories on the application host.
    LocalPaths(Vec<PathBuf>),
    /// A remote share or database the application writes through.
    RemoteRows(Arc<dyn RowStore>),
}

impl fmt::Debug for AttackSurface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackSurface::LocalPaths(p) => f.debug_tuple("LocalPaths").field(p).finish(),
            AttackSurface::RemoteRows(_) => f.write_str("RemoteRows(..)"),
        }
    }
}

#[async_trait]
pub trait RecordStore: Send + Sync {
    fn kind(&self) -> BackendKind;

    async fn create(&self, record: &PatientRecord) -> Result<RecordHandle, StorageError>;

    async fn read(&self, patient_id: &str) -> Result<PatientRecord, StorageError>;

    /// Replaces the patient's record. `record.patient_id` must equal
    /// `patient_id`.
    async fn update(&self, patient_id: &str, record: &PatientRecord) -> Result<(), StorageError>;

    async fn delete(&self, patient_id: &str) -> Result<(), StorageError>;

    /// Live patient ids, sorted.
    async fn list(&self) -> Result<Vec<String>, StorageError>;

    fn metrics(&self) -> BackendMetrics;

    fn reset_metrics(&self);

    fn attack_surface(&self) -> Vec<AttackSurface>;

    /// The vault backend, which alone can rebuild itself after losing its
    /// host.
    fn as_vault(&self) -> Option<&VaultBackend> {
        None
    }
}

pub(crate) fn check_id(patient_id: &str) -> Result<(), StorageError> {
    vaultline_core::model::validate_patient_id(patient_id)
        .map_err(|e| StorageError::InvalidRecord(e.to_string()))
}

pub(crate) fn check_update_target(patient_id: &str, record: &PatientRecord) -> Result<(), StorageError> {
    if record.patient_id != patient_id {
        return Err(StorageError::InvalidRecord(format!(
            "record id {:?} does not match {:?}",
            record.patient_id, patient_id
        )));
    }
    record
        .validate()
        .map_err(|e| StorageError::InvalidRecord(e.to_string()))
}
