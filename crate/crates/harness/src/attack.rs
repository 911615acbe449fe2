//! Simulated attacks: taking a host off the network, and ransoming
//! everything an application host can write to.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use aes_gcm::aead::Aead;
use aes_gcm::{Aes256Gcm, KeyInit, Nonce};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use vaultline_core::RecordKind;
use vaultline_healthapp::HealthApp;
use vaultline_storage::{AttackSurface, RowStore};

use crate::env::Environment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackTarget {
    AppHost,
    DataHost,
}

impl AttackTarget {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackTarget::AppHost => "app-host",
            AttackTarget::DataHost => "data-host",
        }
    }
}

impl fmt::Display for AttackTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "app-host" => Ok(AttackTarget::AppHost),
            "data-host" => Ok(AttackTarget::DataHost),
            other => Err(format!("unknown attack target {other:?} (app-host, data-host)")),
        }
    }
}

/// One host is attacked per scenario, after `start_after` operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackScenario {
    pub target: AttackTarget,
    pub start_after: u64,
}

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("{0} is not running")]
    TargetNotRunning(AttackTarget),
    #[error("attack failed: {0}")]
    Failed(String),
}

/// Handle to a severed shared host.
#[derive(Debug)]
pub struct Severance {
    target: AttackTarget,
}

impl Severance {
    pub fn target(&self) -> AttackTarget {
        self.target
    }

    pub async fn restore(self, env: &mut Environment) -> Result<(), AttackError> {
        env.restore(self.target)
            .await
            .map_err(|e| AttackError::Failed(e.to_string()))
    }
}

/// Takes the data host off the network. Every connection to it fails
/// until the returned handle is restored.
pub async fn sever_data_host(env: &mut Environment) -> Result<Severance, AttackError> {
    if !env.data_host_running() {
        return Err(AttackError::TargetNotRunning(AttackTarget::DataHost));
    }
    env.sever(AttackTarget::DataHost)
        .await
        .map_err(|e| AttackError::Failed(e.to_string()))?;
    Ok(Severance {
        target: AttackTarget::DataHost,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RansomStats {
    pub files: usize,
    pub remote_rows: usize,
}

struct Ransomer {
    cipher: Aes256Gcm,
}

impl Ransomer {
    fn new() -> Self {
        let mut key = [0u8; 32];
        rand::rng().fill_bytes(&mut key);
        Ransomer {
            cipher: Aes256Gcm::new(&key.into()),
        }
    }

    fn lock(&self, plain: &[u8]) -> Vec<u8> {
        let mut nonce = [0u8; 12];
        rand::rng().fill_bytes(&mut nonce);
        let mut out = nonce.to_vec();
        out.extend(
            self.cipher
                .encrypt(&Nonce::from(nonce), plain)
                .expect("in-memory encryption"),
        );
        out
    }

    fn lock_path(&self, path: &Path, stats: &mut RansomStats) -> std::io::Result<()> {
        if !path.exists() {
            return Ok(());
        }
        for entry in walkdir::WalkDir::new(path) {
            let entry = entry?;
            if entry.file_type().is_file() {
                let plain = std::fs::read(entry.path())?;
                std::fs::write(entry.path(), self.lock(&plain))?;
                stats.files += 1;
            }
        }
        Ok(())
    }

    async fn lock_rows(&self, rows: &dyn RowStore, stats: &mut RansomStats) -> Result<(), AttackError> {
        let fail = |e: vaultline_storage::RowError| AttackError::Failed(e.to_string());
        for kind in RecordKind::ALL {
            for id in rows.ids(kind).await.map_err(fail)? {
                let plain = rows.fetch(kind, &id).await.map_err(fail)?;
                rows.replace(kind, &id, &self.lock(&plain)).await.map_err(fail)?;
                stats.remote_rows += 1;
            }
        }
        Ok(())
    }
}

/// Encrypts, under a key only the attacker holds, every file and remote
/// row in `surface`.
pub async fn ransom(surface: &[AttackSurface]) -> Result<RansomStats, AttackError> {
    let ransomer = Ransomer::new();
    let mut stats = RansomStats::default();
    for target in surface {
        match target {
            AttackSurface::LocalPaths(paths) => {
                for p in paths {
                    ransomer
                        .lock_path(p, &mut stats)
                        .map_err(|e| AttackError::Failed(format!("{}: {e}", p.display())))?;
                }
            }
            AttackSurface::RemoteRows(rows) => ransomer.lock_rows(rows.as_ref(), &mut stats).await?,
        }
    }
    Ok(stats)
}

/// The application-host attack: the host is lost and everything it could
/// write to is ransomed.
pub async fn compromise_app_host(mut app: HealthApp) -> Result<RansomStats, AttackError> {
    let backend = app.backend();
    let surface = backend.attack_surface();
    let alive = Arc::downgrade(&backend);
    drop(backend);
    let _ = app.host_mut().sever().await;
    drop(app);
    // Open connections may still hold the backend for a moment; the files
    // are only touched once nothing of the old process is left.
    let deadline = Instant::now() + Duration::from_secs(10);
    while alive.strong_count() > 0 {
        if Instant::now() > deadline {
            return Err(AttackError::Failed("application host did not shut down".into()));
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    ransom(&surface).await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_names_roundtrip() {
        for t in [AttackTarget::AppHost, AttackTarget::DataHost] {
            assert_eq!(t.as_str().parse::<AttackTarget>().unwrap(), t);
        }
        assert!("both".parse::<AttackTarget>().is_err());
    }

    #[test]
    fn ransomed_files_are_unreadable() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("pii")).unwrap();
        std::fs::write(dir.path().join("pii").join("p1"), b"1984-07-14?123-45-6789?x").unwrap();
        let mut stats = RansomStats::default();
        Ransomer::new().lock_path(dir.path(), &mut stats).unwrap();
        assert_eq!(stats.files, 1);
        let locked = std::fs::read(dir.path().join("pii").join("p1")).unwrap();
        assert!(!String::from_utf8_lossy(&locked).contains("123-45-6789"));
        assert_eq!(locked.len(), 12 + 24 + 16);
    }
}
