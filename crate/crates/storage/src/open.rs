use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use vaultline_core::{DerivedKey, InstanceCredentials};
use vaultline_vault::VaultClient;

use crate::metrics::Meter;
use crate::remote::{Area, RemoteRows};
use crate::rows::{LocalDir, RowError, RowStore, SqliteRows};
use crate::tabular::{Codec, TabularStore};
use crate::vault_backend::VaultBackend;
use crate::{AttackSurface, BackendKind, RecordStore, StorageError};

/// The `[storage]` configuration section.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StorageSettings {
    pub kind: BackendKind,
    /// Application-host directory for local rows, the SQLite file or the
    /// vault index.
    pub data_dir: PathBuf,
    /// Base URL of the data host, for the `remote-*` kinds.
    pub remote_url: Option<String>,
    /// Partition on the data host; defaults to `{instance_id}.{kind}`.
    pub namespace: Option<String>,
}

impl Default for StorageSettings {
    fn default() -> Self {
        StorageSettings {
            kind: BackendKind::ProposedVault,
            data_dir: PathBuf::from("data"),
            remote_url: None,
            namespace: None,
        }
    }
}

/// What a backend needs from the running instance.
#[derive(Clone)]
pub struct BackendContext {
    pub creds: InstanceCredentials,
    pub key: DerivedKey,
    pub http: reqwest::Client,
    /// Base URL of the vault, for `proposed-vault`.
    pub vault_url: Option<String>,
}

pub const LOCAL_ROWS_DIR: &str = "records";
pub const LOCAL_DB_FILE: &str = "records.sqlite";
pub const VAULT_INDEX_DIR: &str = "vault-index";

fn row_setup(e: RowError) -> StorageError {
    StorageError::Io(e.to_string())
}

pub fn open_backend(
    settings: &StorageSettings,
    ctx: &BackendContext,
) -> Result<Arc<dyn RecordStore>, StorageError> {
    let kind = settings.kind;
    let meter = Arc::new(Meter::default());
    let codec = if kind.is_encrypted() {
        Codec::Sealed(ctx.key.clone())
    } else {
        Codec::Plain
    };
    let remote = |area: Area| -> Result<(Arc<dyn RowStore>, String), StorageError> {
        let url = settings
            .remote_url
            .as_deref()
            .ok_or_else(|| StorageError::BackendUnavailable(format!("{kind} needs storage.remote_url")))?;
        let ns = settings
            .namespace
            .clone()
            .unwrap_or_else(|| format!("{}.{}", ctx.creds.instance_id, kind));
        let prefix = format!("{}/{}/{}/", url.trim_end_matches('/'), area.as_str(), ns);
        let rows = RemoteRows::new(url, ctx.http.clone(), area, ns, meter.clone());
        Ok((Arc::new(rows), prefix))
    };

    let store: Arc<dyn RecordStore> = match kind {
        BackendKind::LocalFilePlain | BackendKind::LocalFileEncrypted => {
            let root = settings.data_dir.join(LOCAL_ROWS_DIR);
            let rows = LocalDir::open(&root).map_err(row_setup)?;
            let prefix = format!("{}/", root.display());
            let surface = vec![AttackSurface::LocalPaths(vec![root])];
            Arc::new(TabularStore::new(
                kind,
                Arc::new(rows),
                codec,
                meter,
                prefix,
                surface,
            ))
        }
        BackendKind::LocalDatabase => {
            let path = settings.data_dir.join(LOCAL_DB_FILE);
            let rows = SqliteRows::open(&path).map_err(row_setup)?;
            let surface = vec![AttackSurface::LocalPaths(vec![
                path.clone(),
                path.with_extension("sqlite-wal"),
                path.with_extension("sqlite-shm"),
            ])];
            let prefix = format!("{}#", path.display());
            Arc::new(TabularStore::new(
                kind,
                Arc::new(rows),
                codec,
                meter,
                prefix,
                surface,
            ))
        }
        BackendKind::RemoteFilePlain | BackendKind::RemoteFileEncrypted => {
            let (rows, prefix) = remote(Area::Files)?;
            let surface = vec![AttackSurface::RemoteRows(rows.clone())];
            Arc::new(TabularStore::new(kind, rows, codec, meter, prefix, surface))
        }
        BackendKind::RemoteDatabase => {
            let (rows, prefix) = remote(Area::Db)?;
            let surface = vec![AttackSurface::RemoteRows(rows.clone())];
            Arc::new(TabularStore::new(kind, rows, codec, meter, prefix, surface))
        }
        BackendKind::ProposedVault => {
            let url = ctx
                .vault_url
                .as_deref()
                .ok_or_else(|| StorageError::BackendUnavailable("proposed-vault needs vault.url".into()))?;
            let client = VaultClient::new(url, ctx.http.clone(), &ctx.creds);
            Arc::new(VaultBackend::open(
                settings.data_dir.join(VAULT_INDEX_DIR),
                client,
                ctx.key.clone(),
                meter,
            )?)
        }
    };
    Ok(store)
}
