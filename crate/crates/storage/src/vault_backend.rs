//! The vault approach: sealed rows in the remote vault, with only a
//! patient-id → reference index kept on the application host.
//!
//! The index is a cache. Everything needed to rebuild it is in the vault:
//! the owner's reference ledger lists every blob, and each blob names its
//! own kind and patient once opened with the instance key.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use async_trait::async_trait;
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use vaultline_core::{
    open, parse_row, seal, serialize_row, DerivedKey, EnvelopeError, PatientRecord, RecordKind,
};
use vaultline_vault::{DataRef, VaultClient, VaultError};

use crate::locks::PatientLocks;
use crate::metrics::{Meter, Op};
use crate::{
    check_id, check_update_target, AttackSurface, BackendKind, BackendMetrics, RecordHandle, RecordStore,
    StorageError,
};

pub const INDEX_FILE: &str = "index.jsonl";

/// Concurrent fetches during recovery.
const RECOVERY_FANOUT: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub pii: DataRef,
    pub financial: DataRef,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum JournalLine {
    Put {
        patient_id: String,
        pii: DataRef,
        financial: DataRef,
    },
    Del {
        patient_id: String,
    },
}

/// What a recovery pass found in the vault.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryOutcome {
    pub refs_listed: usize,
    /// Blobs that ended up in the rebuilt index (two per patient).
    pub records_restored: usize,
    pub patients_restored: usize,
    /// Blobs whose partner row is absent from the vault.
    pub orphans: Vec<DataRef>,
    /// Older copies shadowed by a later blob for the same patient and kind.
    pub superseded: Vec<DataRef>,
    pub elapsed: Duration,
}

struct Index {
    entries: BTreeMap<String, IndexEntry>,
    journal: File,
}

pub struct VaultBackend {
    dir: PathBuf,
    client: VaultClient,
    key: DerivedKey,
    meter: Arc<Meter>,
    locks: PatientLocks,
    index: Mutex<Index>,
}

fn io(e: impl std::fmt::Display) -> StorageError {
    StorageError::Io(e.to_string())
}

fn vault_error(id: &str, e: VaultError) -> StorageError {
    match e {
        VaultError::NotFound => StorageError::Corrupt(format!("vault lost a row of {id}")),
        VaultError::Unreachable(m) | VaultError::VerifierUnavailable(m) => {
            StorageError::BackendUnavailable(m)
        }
        VaultError::UnauthorizedOwner => {
            StorageError::BackendUnavailable("vault rejected the instance credentials".into())
        }
        VaultError::StorageFailure(m) => StorageError::Io(m),
        other => StorageError::Io(other.to_string()),
    }
}

fn replay(path: &Path) -> Result<BTreeMap<String, IndexEntry>, StorageError> {
    let mut entries = BTreeMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(entries),
        Err(e) => return Err(io(e)),
    };
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|e| StorageError::Corrupt(format!("index: {e}")))?;
    let last = lines.len().saturating_sub(1);
    for (n, line) in lines.iter().enumerate() {
        match serde_json::from_str::<JournalLine>(line) {
            Ok(JournalLine::Put {
                patient_id,
                pii,
                financial,
            }) => {
                entries.insert(patient_id, IndexEntry { pii, financial });
            }
            Ok(JournalLine::Del { patient_id }) => {
                entries.remove(&patient_id);
            }
            // A torn final line is an unacknowledged write.
            Err(_) if n == last => log::warn!("ignoring torn tail of {}", path.display()),
            Err(e) => return Err(StorageError::Corrupt(format!("index line {}: {e}", n + 1))),
        }
    }
    Ok(entries)
}

fn append_journal(path: &Path) -> Result<File, StorageError> {
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io)
}

fn write_line(journal: &mut File, line: &JournalLine) -> Result<(), StorageError> {
    let mut buf = serde_json::to_vec(line).map_err(io)?;
    buf.push(b'\n');
    journal.write_all(&buf).map_err(io)?;
    journal.sync_data().map_err(io)
}

impl VaultBackend {
    /// Opens (or creates) the local index under `dir`.
    pub fn open(
        dir: impl Into<PathBuf>,
        client: VaultClient,
        key: DerivedKey,
        meter: Arc<Meter>,
    ) -> Result<Self, StorageError> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(io)?;
        let path = dir.join(INDEX_FILE);
        let entries = replay(&path)?;
        let journal = append_journal(&path)?;
        Ok(VaultBackend {
            dir,
            client,
            key,
            meter,
            locks: PatientLocks::default(),
            index: Mutex::new(Index { entries, journal }),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn client(&self) -> &VaultClient {
        &self.client
    }

    pub fn index_entry(&self, patient_id: &str) -> Option<IndexEntry> {
        self.index
            .lock()
            .expect("index lock")
            .entries
            .get(patient_id)
            .copied()
    }

    fn commit(&self, line: JournalLine) -> Result<(), StorageError> {
        let mut index = self.index.lock().expect("index lock");
        write_line(&mut index.journal, &line)?;
        match line {
            JournalLine::Put {
                patient_id,
                pii,
                financial,
            } => {
                index.entries.insert(patient_id, IndexEntry { pii, financial });
            }
            JournalLine::Del { patient_id } => {
                index.entries.remove(&patient_id);
            }
        }
        Ok(())
    }

    fn seal_row(&self, record: &PatientRecord, kind: RecordKind) -> Result<Vec<u8>, StorageError> {
        let row = serialize_row(record, kind).map_err(|e| StorageError::InvalidRecord(e.to_string()))?;
        self.meter
            .time_encrypt(|| seal(&self.key, kind, &record.patient_id, &row))
            .map_err(|e| StorageError::InvalidRecord(e.to_string()))
    }

    fn open_row(&self, id: &str, kind: RecordKind, blob: &[u8]) -> Result<[String; 3], StorageError> {
        let opened = self
            .meter
            .time_decrypt(|| open(&self.key, blob))
            .map_err(|e| match e {
                EnvelopeError::AuthenticationFailure => {
                    StorageError::AuthenticationFailure(format!("row of {id}: {e}"))
                }
                other => StorageError::Corrupt(format!("row of {id}: {other}")),
            })?;
        if opened.kind != kind || opened.patient_id != id {
            return Err(StorageError::AuthenticationFailure(format!(
                "{kind} row of {id} holds an envelope for {} {}",
                opened.kind, opened.patient_id
            )));
        }
        parse_row(&opened.row, kind).map_err(|e| StorageError::Corrupt(format!("{kind} row of {id}: {e}")))
    }

    async fn put_blob(&self, blob: &[u8]) -> Result<DataRef, VaultError> {
        self.meter.time_network(self.client.create(blob)).await
    }

    async fn get_blob(&self, r: &DataRef) -> Result<Vec<u8>, VaultError> {
        self.meter.time_network(self.client.get(r)).await
    }

    async fn delete_blob(&self, r: &DataRef) -> Result<(), VaultError> {
        match self.meter.time_network(self.client.delete(r)).await {
            Ok(()) | Err(VaultError::NotFound) => Ok(()),
            Err(e) => Err(e),
        }
    }

    /// Stores both rows, removing the first if the second fails.
    async fn put_pair(&self, record: &PatientRecord) -> Result<IndexEntry, StorageError> {
        let id = record.patient_id.as_str();
        let pii_blob = self.seal_row(record, RecordKind::Pii)?;
        let fin_blob = self.seal_row(record, RecordKind::Financial)?;
        let pii = self.put_blob(&pii_blob).await.map_err(|e| vault_error(id, e))?;
        match self.put_blob(&fin_blob).await {
            Ok(financial) => Ok(IndexEntry { pii, financial }),
            Err(e) => {
                if let Err(undo) = self.delete_blob(&pii).await {
                    log::warn!("could not roll back vault blob {pii}: {undo}");
                }
                Err(vault_error(id, e))
            }
        }
    }

    /// Rebuilds the local index from the vault alone.
    ///
    /// Every listed blob is fetched and opened; for each patient and kind
    /// the blob latest in the ledger wins. Patients with both rows are
    /// indexed, the index file is replaced atomically, and anything that
    /// could not be placed is reported. A single blob that fails to open
    /// aborts the pass with the offending refs and leaves the index as it
    /// was.
    pub async fn recover(&self) -> Result<RecoveryOutcome, StorageError> {
        let started = Instant::now();
        let refs = self
            .meter
            .time_network(self.client.list_refs())
            .await
            .map_err(|e| vault_error("", e))?;

        let fetched: Vec<(usize, DataRef, Result<Vec<u8>, VaultError>)> =
            stream::iter(refs.iter().copied().enumerate())
                .map(|(pos, r)| async move { (pos, r, self.get_blob(&r).await) })
                .buffer_unordered(RECOVERY_FANOUT)
                .collect()
                .await;

        let mut outcome = RecoveryOutcome {
            refs_listed: refs.len(),
            ..Default::default()
        };
        // (patient, kind) -> (ledger position, ref)
        let mut latest: HashMap<(String, RecordKind), (usize, DataRef)> = HashMap::new();
        let mut unreadable = Vec::new();
        for (pos, r, blob) in fetched {
            let blob = match blob {
                Ok(b) => b,
                // Deleted between listing and fetching.
                Err(VaultError::NotFound) => continue,
                Err(e) => return Err(vault_error("", e)),
            };
            let opened = match self.meter.time_decrypt(|| open(&self.key, &blob)) {
                Ok(o) => o,
                Err(_) => {
                    unreadable.push(r);
                    continue;
                }
            };
            let slot = (opened.patient_id, opened.kind);
            match latest.get(&slot) {
                Some(&(p, _)) if p > pos => outcome.superseded.push(r),
                Some(&(_, old)) => {
                    outcome.superseded.push(old);
                    latest.insert(slot, (pos, r));
                }
                None => {
                    latest.insert(slot, (pos, r));
                }
            }
        }

        // Wrong identity or a damaged vault: rebuilding from the rest would
        // silently drop patients.
        if !unreadable.is_empty() {
            unreadable.sort();
            let refs: Vec<String> = unreadable.iter().map(DataRef::to_string).collect();
            return Err(StorageError::AuthenticationFailure(format!(
                "{} of {} vault blobs failed to open: {}",
                refs.len(),
                outcome.refs_listed,
                refs.join(", ")
            )));
        }

        let mut entries = BTreeMap::new();
        let mut pii_only = Vec::new();
        for ((id, kind), (_, r)) in &latest {
            if *kind == RecordKind::Pii {
                match latest.get(&(id.clone(), RecordKind::Financial)) {
                    Some(&(_, fin)) => {
                        entries.insert(
                            id.clone(),
                            IndexEntry {
                                pii: *r,
                                financial: fin,
                            },
                        );
                    }
                    None => pii_only.push(*r),
                }
            } else if !latest.contains_key(&(id.clone(), RecordKind::Pii)) {
                outcome.orphans.push(*r);
            }
        }
        outcome.orphans.extend(pii_only);
        outcome.orphans.sort();
        outcome.superseded.sort();
        outcome.patients_restored = entries.len();
        outcome.records_restored = entries.len() * 2;

        self.install(entries)?;
        outcome.elapsed = started.elapsed();
        Ok(outcome)
    }

    fn install(&self, entries: BTreeMap<String, IndexEntry>) -> Result<(), StorageError> {
        let path = self.dir.join(INDEX_FILE);
        let tmp = self.dir.join(format!("{INDEX_FILE}.tmp"));
        {
            let mut f = File::create(&tmp).map_err(io)?;
            let mut buf = Vec::new();
            for (patient_id, e) in &entries {
                serde_json::to_writer(
                    &mut buf,
                    &JournalLine::Put {
                        patient_id: patient_id.clone(),
                        pii: e.pii,
                        financial: e.financial,
                    },
                )
                .map_err(io)?;
                buf.push(b'\n');
            }
            f.write_all(&buf).map_err(io)?;
            f.sync_all().map_err(io)?;
        }
        let mut index = self.index.lock().expect("index lock");
        std::fs::rename(&tmp, &path).map_err(io)?;
        if let Ok(d) = File::open(&self.dir) {
            let _ = d.sync_all();
        }
        index.journal = append_journal(&path)?;
        index.entries = entries;
        Ok(())
    }
}

#[async_trait]
impl RecordStore for VaultBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::ProposedVault
    }

    async fn create(&self, record: &PatientRecord) -> Result<RecordHandle, StorageError> {
        record
            .validate()
            .map_err(|e| StorageError::InvalidRecord(e.to_string()))?;
        self.meter.count(Op::Create);
        let id = record.patient_id.as_str();
        let _guard = self.locks.lock(id).await;
        if self.index_entry(id).is_some() {
            return Err(StorageError::DuplicatePatient(id.to_owned()));
        }
        let entry = self.put_pair(record).await?;
        self.commit(JournalLine::Put {
            patient_id: id.to_owned(),
            pii: entry.pii,
            financial: entry.financial,
        })?;
        Ok(RecordHandle {
            pii: entry.pii.to_string(),
            financial: entry.financial.to_string(),
        })
    }

    async fn read(&self, patient_id: &str) -> Result<PatientRecord, StorageError> {
        check_id(patient_id)?;
        self.meter.count(Op::Read);
        let entry = self
            .index_entry(patient_id)
            .ok_or_else(|| StorageError::NotFound(patient_id.to_owned()))?;
        let (pii, fin) = futures::try_join!(self.get_blob(&entry.pii), self.get_blob(&entry.financial))
            .map_err(|e| vault_error(patient_id, e))?;
        let pii = self.open_row(patient_id, RecordKind::Pii, &pii)?;
        let fin = self.open_row(patient_id, RecordKind::Financial, &fin)?;
        Ok(PatientRecord::from_rows(patient_id, pii, fin))
    }

    async fn update(&self, patient_id: &str, record: &PatientRecord) -> Result<(), StorageError> {
        check_update_target(patient_id, record)?;
        self.meter.count(Op::Update);
        let _guard = self.locks.lock(patient_id).await;
        let old = self
            .index_entry(patient_id)
            .ok_or_else(|| StorageError::NotFound(patient_id.to_owned()))?;
        let new = self.put_pair(record).await?;
        self.commit(JournalLine::Put {
            patient_id: patient_id.to_owned(),
            pii: new.pii,
            financial: new.financial,
        })?;
        // Leftovers are harmless: recovery prefers the later blobs.
        for r in [old.pii, old.financial] {
            if let Err(e) = self.delete_blob(&r).await {
                log::warn!("stale vault blob {r} of {patient_id} not removed: {e}");
            }
        }
        Ok(())
    }

    async fn delete(&self, patient_id: &str) -> Result<(), StorageError> {
        check_id(patient_id)?;
        self.meter.count(Op::Delete);
        let _guard = self.locks.lock(patient_id).await;
        let entry = self
            .index_entry(patient_id)
            .ok_or_else(|| StorageError::NotFound(patient_id.to_owned()))?;
        for r in [entry.pii, entry.financial] {
            self.delete_blob(&r)
                .await
                .map_err(|e| vault_error(patient_id, e))?;
        }
        self.commit(JournalLine::Del {
            patient_id: patient_id.to_owned(),
        })
    }

    async fn list(&self) -> Result<Vec<String>, StorageError> {
        self.meter.count(Op::List);
        Ok(self
            .index
            .lock()
            .expect("index lock")
            .entries
            .keys()
            .cloned()
            .collect())
    }

    fn metrics(&self) -> BackendMetrics {
        self.meter.snapshot()
    }

    fn reset_metrics(&self) {
        self.meter.reset()
    }

    /// Only the local index; the vault itself is out of reach.
    fn attack_surface(&self) -> Vec<AttackSurface> {
        vec![AttackSurface::LocalPaths(vec![self.dir.clone()])]
    }

    fn as_vault(&self) -> Option<&VaultBackend> {
        Some(self)
    }
}
