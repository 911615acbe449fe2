use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vaultline_core::model::validate_patient_id;
use vaultline_core::{owner_token, InstanceCredentials};

use crate::RegistryError;

/// One registered instance, as persisted (one JSON object per line).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub instance_id: String,
    pub license_key: String,
    pub created_at: String,
    /// SHA-256 of the admin token that authorized the registration, hex.
    pub admin_token_hash: String,
}

impl RegistryEntry {
    pub fn credentials(&self) -> InstanceCredentials {
        InstanceCredentials {
            instance_id: self.instance_id.clone(),
            license_key: self.license_key.clone(),
        }
    }
}

/// Durable registry state: an append-only JSON-lines file, synced to disk
/// before any call returns.
pub struct Registry {
    path: PathBuf,
    admin_token_hash: [u8; 32],
    inner: Mutex<Inner>,
}

struct Inner {
    entries: HashMap<String, RegistryEntry>,
    file: File,
}

fn hash_token(token: &str) -> [u8; 32] {
    Sha256::digest(token.as_bytes()).into()
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

impl Registry {
    /// Opens (or creates) the registry file at `path`. `admin_token` is the
    /// operator secret every register/reregister call must present.
    pub fn open(path: impl AsRef<Path>, admin_token: &str) -> Result<Self, RegistryError> {
        let path = path.as_ref().to_path_buf();
        let storage = |e: std::io::Error| RegistryError::Storage(format!("{}: {e}", path.display()));
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(storage)?;
        }

        let mut entries = HashMap::new();
        let mut valid_len = 0u64;
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(storage)?);
            for line in reader.split(b'\n') {
                let line = line.map_err(storage)?;
                // A torn final write leaves an unparsable tail; drop it.
                let Ok(entry) = serde_json::from_slice::<RegistryEntry>(&line) else {
                    log::warn!("ignoring torn registry tail in {}", path.display());
                    break;
                };
                valid_len += line.len() as u64 + 1;
                entries.insert(entry.instance_id.clone(), entry);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(storage)?;
        if file.metadata().map_err(storage)?.len() > valid_len {
            file.set_len(valid_len).map_err(storage)?;
        }

        Ok(Registry {
            path,
            admin_token_hash: hash_token(admin_token),
            inner: Mutex::new(Inner { entries, file }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn authorize(&self, admin_token: &str) -> Result<(), RegistryError> {
        if constant_time_eq(&hash_token(admin_token), &self.admin_token_hash) {
            Ok(())
        } else {
            Err(RegistryError::Unauthorized)
        }
    }

    pub fn register(
        &self,
        requested_name: Option<&str>,
        admin_token: &str,
    ) -> Result<InstanceCredentials, RegistryError> {
        self.authorize(admin_token)?;
        let instance_id = match requested_name {
            Some(name) => {
                validate_patient_id(name).map_err(|_| RegistryError::InvalidName(name.into()))?;
                name.to_owned()
            }
            None => format!("inst-{}", uuid::Uuid::new_v4().simple()),
        };

        let mut key = [0u8; 32];
        rand::rng().fill_bytes(&mut key);
        let entry = RegistryEntry {
            instance_id: instance_id.clone(),
            license_key: hex::encode(key),
            created_at: chrono::Utc::now().to_rfc3339(),
            admin_token_hash: hex::encode(self.admin_token_hash),
        };

        let mut inner = self.inner.lock().expect("registry lock poisoned");
        if inner.entries.contains_key(&instance_id) {
            return Err(RegistryError::NameTaken(instance_id));
        }
        let mut line = serde_json::to_vec(&entry).expect("entry serializes");
        line.push(b'\n');
        inner
            .file
            .write_all(&line)
            .and_then(|_| inner.file.sync_data())
            .map_err(|e| RegistryError::Storage(e.to_string()))?;
        let creds = entry.credentials();
        inner.entries.insert(instance_id, entry);
        Ok(creds)
    }

    pub fn reregister(
        &self,
        instance_id: &str,
        admin_token: &str,
    ) -> Result<InstanceCredentials, RegistryError> {
        self.authorize(admin_token)?;
        self.entry(instance_id)
            .map(|e| e.credentials())
            .ok_or_else(|| RegistryError::UnknownInstance(instance_id.to_owned()))
    }

    pub fn entry(&self, instance_id: &str) -> Option<RegistryEntry> {
        let inner = self.inner.lock().expect("registry lock poisoned");
        inner.entries.get(instance_id).cloned()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("registry lock poisoned").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks a vault owner token for `instance_id`.
    pub fn verify_owner(&self, instance_id: &str, token: &str) -> bool {
        match self.entry(instance_id) {
            Some(entry) => constant_time_eq(owner_token(&entry.credentials()).as_bytes(), token.as_bytes()),
            None => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ADMIN: &str = "operator-secret";

    #[test]
    fn registrations_are_unique() {
        let dir = tempfile::tempdir().unwrap();
        let reg = Registry::open(dir.path().join("r.jsonl"), ADMIN).unwrap();
        let a = reg.register(None, ADMIN).unwrap();
        let b = reg.register(None, ADMIN).unwrap();
        assert_ne!(a.instance_id, b.instance_id);
        assert_ne!(a.license_key, b.license_key);
        assert_eq!(a.license_key.len(), 64);
        a.validate().unwrap();
    }

    #[test]
    fn named_registration_and_conflicts() {
        let dir = tempfile::tempdir().unwrap();
        let reg = Registry::open(dir.path().join("r.jsonl"), ADMIN).unwrap();
        let c = reg.register(Some("clinic-a"), ADMIN).unwrap();
        assert_eq!(c.instance_id, "clinic-a");
        assert_eq!(
            reg.register(Some("clinic-a"), ADMIN),
            Err(RegistryError::NameTaken("clinic-a".into()))
        );
        assert!(matches!(
            reg.register(Some("bad/name"), ADMIN),
            Err(RegistryError::InvalidName(_))
        ));
    }

    #[test]
    fn admin_token_gates_both_calls() {
        let dir = tempfile::tempdir().unwrap();
        let reg = Registry::open(dir.path().join("r.jsonl"), ADMIN).unwrap();
        assert_eq!(reg.register(None, "nope"), Err(RegistryError::Unauthorized));
        let c = reg.register(None, ADMIN).unwrap();
        assert_eq!(
            reg.reregister(&c.instance_id, "nope"),
            Err(RegistryError::Unauthorized)
        );
        assert_eq!(
            reg.reregister("missing", ADMIN),
            Err(RegistryError::UnknownInstance("missing".into()))
        );
    }

    #[test]
    fn survives_reopen_and_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let c = {
            let reg = Registry::open(&path, ADMIN).unwrap();
            reg.register(Some("one"), ADMIN).unwrap()
        };
        // simulate a crash in the middle of appending a second entry
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"instance_id\":\"two\",\"lic").unwrap();
        drop(f);

        let reg = Registry::open(&path, ADMIN).unwrap();
        assert_eq!(reg.len(), 1);
        assert_eq!(reg.reregister("one", ADMIN).unwrap(), c);
        reg.register(Some("two"), ADMIN).unwrap();
        drop(reg);
        assert_eq!(Registry::open(&path, ADMIN).unwrap().len(), 2);
    }

    #[test]
    fn owner_tokens_verify() {
        let dir = tempfile::tempdir().unwrap();
        let reg = Registry::open(dir.path().join("r.jsonl"), ADMIN).unwrap();
        let c = reg.register(None, ADMIN).unwrap();
        assert!(reg.verify_owner(&c.instance_id, &owner_token(&c)));
        assert!(!reg.verify_owner(&c.instance_id, "00"));
        assert!(!reg.verify_owner("other", &owner_token(&c)));
    }

    #[test]
    fn persisted_entry_holds_token_hash_not_token() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let reg = Registry::open(&path, ADMIN).unwrap();
        let c = reg.register(None, ADMIN).unwrap();
        let raw = std::fs::read_to_string(&path).unwrap();
        assert!(!raw.contains(ADMIN));
        assert_eq!(
            reg.entry(&c.instance_id).unwrap().admin_token_hash,
            hex::encode(hash_token(ADMIN))
        );
    }
}
