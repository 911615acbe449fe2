//! The six conventional approaches: a [`RowStore`] plus a row codec.

use std::sync::Arc;

use async_trait::async_trait;
use vaultline_core::{
    open, parse_row, seal, serialize_row, DerivedKey, EnvelopeError, PatientRecord, RecordKind,
};

use crate::locks::PatientLocks;
use crate::metrics::{Meter, Op};
use crate::rows::{RowError, RowStore};
use crate::{
    check_id, check_update_target, AttackSurface, BackendKind, BackendMetrics, RecordHandle, RecordStore,
    StorageError,
};

/// How a row is turned into stored bytes.
#[derive(Clone)]
pub enum Codec {
    /// The `?`-delimited row as UTF-8.
    Plain,
    /// The row sealed in an envelope bound to its kind and patient id.
    Sealed(DerivedKey),
}

pub struct TabularStore {
    kind: BackendKind,
    rows: Arc<dyn RowStore>,
    codec: Codec,
    meter: Arc<Meter>,
    locks: PatientLocks,
    handle_prefix: String,
    surface: Vec<AttackSurface>,
}

impl TabularStore {
    /// `handle_prefix` is prepended to `{kind}/{patient_id}` to form the
    /// location strings returned by `create`.
    pub fn new(
        kind: BackendKind,
        rows: Arc<dyn RowStore>,
        codec: Codec,
        meter: Arc<Meter>,
        handle_prefix: impl Into<String>,
        surface: Vec<AttackSurface>,
    ) -> Self {
        TabularStore {
            kind,
            rows,
            codec,
            meter,
            locks: PatientLocks::default(),
            handle_prefix: handle_prefix.into(),
            surface,
        }
    }

    pub fn rows(&self) -> &Arc<dyn RowStore> {
        &self.rows
    }

    fn encode(&self, record: &PatientRecord, kind: RecordKind) -> Result<Vec<u8>, StorageError> {
        let row = serialize_row(record, kind).map_err(|e| StorageError::InvalidRecord(e.to_string()))?;
        match &self.codec {
            Codec::Plain => Ok(row.into_bytes()),
            Codec::Sealed(key) => self
                .meter
                .time_encrypt(|| seal(key, kind, &record.patient_id, &row))
                .map_err(|e| StorageError::InvalidRecord(e.to_string())),
        }
    }

    fn decode(&self, id: &str, kind: RecordKind, bytes: Vec<u8>) -> Result<[String; 3], StorageError> {
        let row = match &self.codec {
            Codec::Plain => String::from_utf8(bytes)
                .map_err(|_| StorageError::Corrupt(format!("{kind} row of {id} is not utf-8")))?,
            Codec::Sealed(key) => {
                let opened = self
                    .meter
                    .time_decrypt(|| open(key, &bytes))
                    .map_err(|e| envelope_error(id, e))?;
                if opened.kind != kind || opened.patient_id != id {
                    return Err(StorageError::AuthenticationFailure(format!(
                        "{kind} row of {id} holds an envelope for {} {}",
                        opened.kind, opened.patient_id
                    )));
                }
                opened.row
            }
        };
        parse_row(&row, kind).map_err(|e| StorageError::Corrupt(format!("{kind} row of {id}: {e}")))
    }

    fn handle(&self, kind: RecordKind, id: &str) -> String {
        format!("{}{}/{}", self.handle_prefix, kind, id)
    }
}

fn envelope_error(id: &str, e: EnvelopeError) -> StorageError {
    match e {
        EnvelopeError::AuthenticationFailure => {
            StorageError::AuthenticationFailure(format!("row of {id}: {e}"))
        }
        other => StorageError::Corrupt(format!("row of {id}: {other}")),
    }
}

fn row_error(id: &str, e: RowError) -> StorageError {
    match e {
        RowError::Exists => StorageError::DuplicatePatient(id.to_owned()),
        RowError::Missing => StorageError::NotFound(id.to_owned()),
        RowError::Unavailable(m) => StorageError::BackendUnavailable(m),
        RowError::Io(m) => StorageError::Io(m),
    }
}

/// The PII row is the patient's primary row; a financial row without one is
/// a leftover and a PII row without one is damage.
fn second_row_error(id: &str, e: RowError) -> StorageError {
    match e {
        RowError::Missing => StorageError::Corrupt(format!("financial row of {id} is missing")),
        other => row_error(id, other),
    }
}

#[async_trait]
impl RecordStore for TabularStore {
    fn kind(&self) -> BackendKind {
        self.kind
    }

    async fn create(&self, record: &PatientRecord) -> Result<RecordHandle, StorageError> {
        record
            .validate()
            .map_err(|e| StorageError::InvalidRecord(e.to_string()))?;
        self.meter.count(Op::Create);
        let id = record.patient_id.as_str();
        let pii = self.encode(record, RecordKind::Pii)?;
        let fin = self.encode(record, RecordKind::Financial)?;

        let _guard = self.locks.lock(id).await;
        self.rows
            .insert(RecordKind::Pii, id, &pii)
            .await
            .map_err(|e| row_error(id, e))?;
        if let Err(e) = self.rows.insert(RecordKind::Financial, id, &fin).await {
            let e = match e {
                // A stray financial row left by an earlier failure.
                RowError::Exists => self.rows.replace(RecordKind::Financial, id, &fin).await.err(),
                other => Some(other),
            };
            if let Some(e) = e {
                if let Err(undo) = self.rows.remove(RecordKind::Pii, id).await {
                    log::warn!("could not roll back pii row of {id}: {undo}");
                }
                return Err(row_error(id, e));
            }
        }
        Ok(RecordHandle {
            pii: self.handle(RecordKind::Pii, id),
            financial: self.handle(RecordKind::Financial, id),
        })
    }

    async fn read(&self, patient_id: &str) -> Result<PatientRecord, StorageError> {
        check_id(patient_id)?;
        self.meter.count(Op::Read);
        let pii = self
            .rows
            .fetch(RecordKind::Pii, patient_id)
            .await
            .map_err(|e| row_error(patient_id, e))?;
        let fin = self
            .rows
            .fetch(RecordKind::Financial, patient_id)
            .await
            .map_err(|e| second_row_error(patient_id, e))?;
        let pii = self.decode(patient_id, RecordKind::Pii, pii)?;
        let fin = self.decode(patient_id, RecordKind::Financial, fin)?;
        Ok(PatientRecord::from_rows(patient_id, pii, fin))
    }

    async fn update(&self, patient_id: &str, record: &PatientRecord) -> Result<(), StorageError> {
        check_update_target(patient_id, record)?;
        self.meter.count(Op::Update);
        let pii = self.encode(record, RecordKind::Pii)?;
        let fin = self.encode(record, RecordKind::Financial)?;

        let _guard = self.locks.lock(patient_id).await;
        self.rows
            .replace(RecordKind::Pii, patient_id, &pii)
            .await
            .map_err(|e| row_error(patient_id, e))?;
        match self.rows.replace(RecordKind::Financial, patient_id, &fin).await {
            Ok(()) => Ok(()),
            Err(RowError::Missing) => self
                .rows
                .insert(RecordKind::Financial, patient_id, &fin)
                .await
                .map_err(|e| row_error(patient_id, e)),
            Err(e) => Err(row_error(patient_id, e)),
        }
    }

    async fn delete(&self, patient_id: &str) -> Result<(), StorageError> {
        check_id(patient_id)?;
        self.meter.count(Op::Delete);
        let _guard = self.locks.lock(patient_id).await;
        self.rows
            .remove(RecordKind::Pii, patient_id)
            .await
            .map_err(|e| row_error(patient_id, e))?;
        match self.rows.remove(RecordKind::Financial, patient_id).await {
            Ok(()) | Err(RowError::Missing) => Ok(()),
            Err(e) => Err(row_error(patient_id, e)),
        }
    }

    async fn list(&self) -> Result<Vec<String>, StorageError> {
        self.meter.count(Op::List);
        self.rows.ids(RecordKind::Pii).await.map_err(|e| row_error("", e))
    }

    fn metrics(&self) -> BackendMetrics {
        self.meter.snapshot()
    }

    fn reset_metrics(&self) {
        self.meter.reset()
    }

    fn attack_surface(&self) -> Vec<AttackSurface> {
        self.surface.clone()
    }
}
