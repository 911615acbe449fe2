//! Keyed row storage: the layer under the filesystem and database backends.
//!
//! A [`RowStore`] files opaque byte rows under `(kind, patient_id)`. The
//! same implementations serve both sides of the network: an application
//! host uses them directly for the local approaches, and the data host uses
//! them behind its HTTP service for the remote ones.

use std::fs::OpenOptions;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use async_trait::async_trait;
use rusqlite::{params, Connection, OptionalExtension};
use thiserror::Error;
use vaultline_core::model::validate_patient_id;
use vaultline_core::RecordKind;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RowError {
    #[error("row already exists")]
    Exists,
    #[error("row does not exist")]
    Missing,
    #[error("host unreachable: {0}")]
    Unavailable(String),
    #[error("storage i/o: {0}")]
    Io(String),
}

#[async_trait]
pub trait RowStore: Send + Sync {
    /// Writes a new row; `Exists` if one is already there.
    async fn insert(&self, kind: RecordKind, id: &str, row: &[u8]) -> Result<(), RowError>;
    /// Overwrites an existing row; `Missing` if there is none.
    async fn replace(&self, kind: RecordKind, id: &str, row: &[u8]) -> Result<(), RowError>;
    async fn fetch(&self, kind: RecordKind, id: &str) -> Result<Vec<u8>, RowError>;
    async fn remove(&self, kind: RecordKind, id: &str) -> Result<(), RowError>;
    /// All ids of `kind`, sorted.
    async fn ids(&self, kind: RecordKind) -> Result<Vec<String>, RowError>;
}

fn io(e: impl std::fmt::Display) -> RowError {
    RowError::Io(e.to_string())
}

fn check_id(id: &str) -> Result<(), RowError> {
    validate_patient_id(id).map_err(io)
}

/// Two directories, `pii/` and `financial/`, each holding one file per
/// patient named by the patient id.
///
/// File operations are small and run inline on the calling task.
#[derive(Debug, Clone)]
pub struct LocalDir {
    root: PathBuf,
}

impl LocalDir {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, RowError> {
        let root = root.into();
        for kind in RecordKind::ALL {
            std::fs::create_dir_all(root.join(kind.as_str())).map_err(io)?;
        }
        Ok(LocalDir { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dir(&self, kind: RecordKind) -> PathBuf {
        self.root.join(kind.as_str())
    }

    fn path(&self, kind: RecordKind, id: &str) -> Result<PathBuf, RowError> {
        check_id(id)?;
        Ok(self.dir(kind).join(id))
    }
}

#[async_trait]
impl RowStore for LocalDir {
    async fn insert(&self, kind: RecordKind, id: &str, row: &[u8]) -> Result<(), RowError> {
        let path = self.path(kind, id)?;
        let mut f = match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == ErrorKind::AlreadyExists => return Err(RowError::Exists),
            Err(e) => return Err(io(e)),
        };
        f.write_all(row).map_err(io)
    }

    async fn replace(&self, kind: RecordKind, id: &str, row: &[u8]) -> Result<(), RowError> {
        let path = self.path(kind, id)?;
        let mut f = match OpenOptions::new().write(true).truncate(true).open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == ErrorKind::NotFound => return Err(RowError::Missing),
            Err(e) => return Err(io(e)),
        };
        f.write_all(row).map_err(io)
    }

    async fn fetch(&self, kind: RecordKind, id: &str) -> Result<Vec<u8>, RowError> {
        match std::fs::read(self.path(kind, id)?) {
            Ok(bytes) => Ok(bytes),
            Err(e) if e.kind() == ErrorKind::NotFound => Err(RowError::Missing),
            Err(e) => Err(io(e)),
        }
    }

    async fn remove(&self, kind: RecordKind, id: &str) -> Result<(), RowError> {
        match std::fs::remove_file(self.path(kind, id)?) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == ErrorKind::NotFound => Err(RowError::Missing),
            Err(e) => Err(io(e)),
        }
    }

    async fn ids(&self, kind: RecordKind) -> Result<Vec<String>, RowError> {
        let mut ids = Vec::new();
        for entry in std::fs::read_dir(self.dir(kind)).map_err(io)? {
            let entry = entry.map_err(io)?;
            if let Some(name) = entry.file_name().to_str() {
                ids.push(name.to_owned());
            }
        }
        ids.sort();
        Ok(ids)
    }
}

/// One SQLite database with a table per record kind:
/// `pii(patient_id TEXT PRIMARY KEY, row BLOB)` and the same for
/// `financial`.
pub struct SqliteRows {
    path: PathBuf,
    conn: Mutex<Connection>,
}

impl SqliteRows {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, RowError> {
        let path = path.into();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        let conn = Connection::open(&path).map_err(io)?;
        conn.execute_batch(
            "PRAGMA journal_mode = WAL;
             PRAGMA synchronous = NORMAL;
             CREATE TABLE IF NOT EXISTS pii (patient_id TEXT PRIMARY KEY, row BLOB NOT NULL);
             CREATE TABLE IF NOT EXISTS financial (patient_id TEXT PRIMARY KEY, row BLOB NOT NULL);",
        )
        .map_err(io)?;
        Ok(SqliteRows {
            path,
            conn: Mutex::new(conn),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn with<T>(&self, f: impl FnOnce(&Connection) -> rusqlite::Result<T>) -> Result<T, RowError> {
        let conn = self.conn.lock().expect("sqlite lock poisoned");
        f(&conn).map_err(io)
    }
}

// Table names come from RecordKind::as_str, never from callers.
#[async_trait]
impl RowStore for SqliteRows {
    async fn insert(&self, kind: RecordKind, id: &str, row: &[u8]) -> Result<(), RowError> {
        check_id(id)?;
        let sql = format!("INSERT INTO {} (patient_id, row) VALUES (?1, ?2)", kind.as_str());
        let conn = self.conn.lock().expect("sqlite lock poisoned");
        match conn.execute(&sql, params![id, row]) {
            Ok(_) => Ok(()),
            Err(rusqlite::Error::SqliteFailure(e, _))
                if e.code == rusqlite::ErrorCode::ConstraintViolation =>
            {
                Err(RowError::Exists)
            }
            Err(e) => Err(io(e)),
        }
    }

    async fn replace(&self, kind: RecordKind, id: &str, row: &[u8]) -> Result<(), RowError> {
        check_id(id)?;
        let sql = format!("UPDATE {} SET row = ?2 WHERE patient_id = ?1", kind.as_str());
        match self.with(|c| c.execute(&sql, params![id, row]))? {
            0 => Err(RowError::Missing),
            _ => Ok(()),
        }
    }

    async fn fetch(&self, kind: RecordKind, id: &str) -> Result<Vec<u8>, RowError> {
        check_id(id)?;
        let sql = format!("SELECT row FROM {} WHERE patient_id = ?1", kind.as_str());
        self.with(|c| {
            c.query_row(&sql, params![id], |r| r.get::<_, Vec<u8>>(0))
                .optional()
        })?
        .ok_or(RowError::Missing)
    }

    async fn remove(&self, kind: RecordKind, id: &str) -> Result<(), RowError> {
        check_id(id)?;
        let sql = format!("DELETE FROM {} WHERE patient_id = ?1", kind.as_str());
        match self.with(|c| c.execute(&sql, params![id]))? {
            0 => Err(RowError::Missing),
            _ => Ok(()),
        }
    }

    async fn ids(&self, kind: RecordKind) -> Result<Vec<String>, RowError> {
        let sql = format!("SELECT patient_id FROM {} ORDER BY patient_id", kind.as_str());
        self.with(|c| {
            let mut stmt = c.prepare(&sql)?;
            let rows = stmt.query_map([], |r| r.get::<_, String>(0))?;
            rows.collect()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    async fn exercise(store: &dyn RowStore) {
        let k = RecordKind::Pii;
        assert_eq!(store.fetch(k, "a").await, Err(RowError::Missing));
        store.insert(k, "a", b"one").await.unwrap();
        assert_eq!(store.insert(k, "a", b"two").await, Err(RowError::Exists));
        assert_eq!(store.fetch(k, "a").await.unwrap(), b"one");
        store.replace(k, "a", b"three").await.unwrap();
        assert_eq!(store.fetch(k, "a").await.unwrap(), b"three");
        assert_eq!(store.replace(k, "b", b"x").await, Err(RowError::Missing));
        store.insert(k, "c", b"").await.unwrap();
        store.insert(RecordKind::Financial, "z", b"f").await.unwrap();
        assert_eq!(store.ids(k).await.unwrap(), vec!["a", "c"]);
        assert_eq!(store.ids(RecordKind::Financial).await.unwrap(), vec!["z"]);
        store.remove(k, "a").await.unwrap();
        assert_eq!(store.remove(k, "a").await, Err(RowError::Missing));
        assert_eq!(store.ids(k).await.unwrap(), vec!["c"]);
        assert!(matches!(
            store.insert(k, "../escape", b"x").await,
            Err(RowError::Io(_))
        ));
    }

    #[tokio::test]
    async fn local_dir_semantics() {
        let dir = tempfile::tempdir().unwrap();
        let store = LocalDir::open(dir.path()).unwrap();
        exercise(&store).await;
        assert!(dir.path().join("pii").join("c").is_file());
        assert!(dir.path().join("financial").join("z").is_file());
    }

    #[tokio::test]
    async fn sqlite_semantics() {
        let dir = tempfile::tempdir().unwrap();
        let store = SqliteRows::open(dir.path().join("db.sqlite")).unwrap();
        exercise(&store).await;
    }

    #[tokio::test]
    async fn sqlite_persists_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("db.sqlite");
        SqliteRows::open(&path)
            .unwrap()
            .insert(RecordKind::Financial, "p", b"row")
            .await
            .unwrap();
        let store = SqliteRows::open(&path).unwrap();
        assert_eq!(store.fetch(RecordKind::Financial, "p").await.unwrap(), b"row");
    }
}
