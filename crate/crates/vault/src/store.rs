//! Durable vault state.
//!
//! Everything lives in one append-only log, `vault.log`. Each frame is
//!
//! ```text
//! len: u32 LE | crc32(payload): u32 LE | payload
//! payload = 0x01 | ref (16) | stored_at_ms: i64 LE | owner_len: u16 LE | owner | blob_len: u32 LE | blob
//!         | 0x02 | ref (16)
//! ```
//!
//! The in-memory index keeps, per live ref, the owner and the blob's offset
//! in the log; ledgers keep each owner's live refs in insertion order. A
//! frame is synced to disk before the call that wrote it returns. On open
//! the log is replayed and any torn tail is cut off.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufReader, Read, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use uuid::Uuid;

use crate::{DataRef, VaultError};

const LOG_FILE: &str = "vault.log";
const OP_PUT: u8 = 1;
const OP_DELETE: u8 = 2;
const FRAME_HEADER: u64 = 8;
/// Upper bound on a single frame, guards replay against garbage lengths.
const MAX_FRAME: u32 = 64 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VaultEntry {
    pub data_ref: DataRef,
    pub owner_instance_id: String,
    pub blob: Vec<u8>,
    /// Milliseconds since the Unix epoch.
    pub stored_at: i64,
}

#[derive(Debug, Clone)]
struct Slot {
    owner: String,
    offset: u64,
    len: u32,
    stored_at: i64,
}

/// Live refs of one owner in insertion order.
#[derive(Debug, Default)]
struct Ledger {
    by_seq: BTreeMap<u64, DataRef>,
    seq_of: HashMap<DataRef, u64>,
}

impl Ledger {
    fn push(&mut self, seq: u64, r: DataRef) {
        self.by_seq.insert(seq, r);
        self.seq_of.insert(r, seq);
    }

    fn remove(&mut self, r: &DataRef) {
        if let Some(seq) = self.seq_of.remove(r) {
            self.by_seq.remove(&seq);
        }
    }

    fn refs(&self) -> Vec<DataRef> {
        self.by_seq.values().copied().collect()
    }
}

struct State {
    log: File,
    end: u64,
    next_seq: u64,
    slots: HashMap<DataRef, Slot>,
    ledgers: HashMap<String, Ledger>,
}

pub struct VaultStore {
    dir: PathBuf,
    reader: File,
    state: Mutex<State>,
}

fn storage(e: std::io::Error) -> VaultError {
    VaultError::StorageFailure(e.to_string())
}

fn now_ms() -> i64 {
    chrono::Utc::now().timestamp_millis()
}

impl VaultStore {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, VaultError> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(storage)?;
        let path = dir.join(LOG_FILE);
        let log = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(storage)?;

        let mut state = State {
            log,
            end: 0,
            next_seq: 0,
            slots: HashMap::new(),
            ledgers: HashMap::new(),
        };
        let valid = replay(&path, &mut state).map_err(storage)?;
        let actual = state.log.metadata().map_err(storage)?.len();
        if actual > valid {
            log::warn!("truncating {} torn bytes from {}", actual - valid, path.display());
            state.log.set_len(valid).map_err(storage)?;
            state.log.sync_all().map_err(storage)?;
        }
        state.end = valid;

        let reader = File::open(&path).map_err(storage)?;
        Ok(VaultStore {
            dir,
            reader,
            state: Mutex::new(state),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Stores `blob` for `owner` and returns its new reference. The entry
    /// and the ledger append become visible together, after the frame is on
    /// disk.
    pub fn create(&self, owner: &str, blob: &[u8]) -> Result<DataRef, VaultError> {
        let owner_len =
            u16::try_from(owner.len()).map_err(|_| VaultError::BadRequest("owner id too long".into()))?;
        let blob_len = u32::try_from(blob.len())
            .ok()
            .filter(|l| *l < MAX_FRAME - 64 - owner_len as u32)
            .ok_or_else(|| VaultError::BadRequest("blob too large".into()))?;

        let mut state = self.state.lock().expect("vault lock poisoned");
        let data_ref = loop {
            let r = DataRef::new_random();
            if !state.slots.contains_key(&r) {
                break r;
            }
        };
        let stored_at = now_ms();

        let mut payload = Vec::with_capacity(31 + owner.len() + blob.len());
        payload.push(OP_PUT);
        payload.extend_from_slice(data_ref.0.as_bytes());
        payload.extend_from_slice(&stored_at.to_le_bytes());
        payload.extend_from_slice(&owner_len.to_le_bytes());
        payload.extend_from_slice(owner.as_bytes());
        payload.extend_from_slice(&blob_len.to_le_bytes());
        let blob_offset_in_payload = payload.len() as u64;
        payload.extend_from_slice(blob);

        let frame_start = append_frame(&mut state, &payload)?;
        let seq = state.next_seq;
        state.next_seq += 1;
        state.slots.insert(
            data_ref,
            Slot {
                owner: owner.to_owned(),
                offset: frame_start + FRAME_HEADER + blob_offset_in_payload,
                len: blob_len,
                stored_at,
            },
        );
        state
            .ledgers
            .entry(owner.to_owned())
            .or_default()
            .push(seq, data_ref);
        Ok(data_ref)
    }

    pub fn get(&self, data_ref: &DataRef) -> Result<VaultEntry, VaultError> {
        let slot = {
            let state = self.state.lock().expect("vault lock poisoned");
            state.slots.get(data_ref).cloned().ok_or(VaultError::NotFound)?
        };
        // Frames are immutable once written, so the read can happen unlocked.
        let mut blob = vec![0u8; slot.len as usize];
        self.reader
            .read_exact_at(&mut blob, slot.offset)
            .map_err(storage)?;
        Ok(VaultEntry {
            data_ref: *data_ref,
            owner_instance_id: slot.owner,
            blob,
            stored_at: slot.stored_at,
        })
    }

    pub fn owner_of(&self, data_ref: &DataRef) -> Option<String> {
        let state = self.state.lock().expect("vault lock poisoned");
        state.slots.get(data_ref).map(|s| s.owner.clone())
    }

    /// Purges `data_ref` and removes it from its owner's ledger.
    pub fn delete(&self, data_ref: &DataRef) -> Result<(), VaultError> {
        let mut state = self.state.lock().expect("vault lock poisoned");
        let owner = match state.slots.get(data_ref) {
            Some(slot) => slot.owner.clone(),
            None => return Err(VaultError::NotFound),
        };
        let mut payload = Vec::with_capacity(17);
        payload.push(OP_DELETE);
        payload.extend_from_slice(data_ref.0.as_bytes());
        append_frame(&mut state, &payload)?;
        state.slots.remove(data_ref);
        if let Some(ledger) = state.ledgers.get_mut(&owner) {
            ledger.remove(data_ref);
        }
        Ok(())
    }

    /// Live refs of `owner`, oldest first.
    pub fn list_refs(&self, owner: &str) -> Vec<DataRef> {
        let state = self.state.lock().expect("vault lock poisoned");
        state.ledgers.get(owner).map(Ledger::refs).unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("vault lock poisoned").slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn append_frame(state: &mut State, payload: &[u8]) -> Result<u64, VaultError> {
    let start = state.end;
    let mut frame = Vec::with_capacity(payload.len() + FRAME_HEADER as usize);
    frame.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    frame.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
    frame.extend_from_slice(payload);
    let res = state.log.write_all(&frame).and_then(|_| state.log.sync_data());
    if let Err(e) = res {
        // Cut whatever part of the frame made it out so the next append
        // starts on a frame boundary.
        let _ = state.log.set_len(start);
        return Err(storage(e));
    }
    state.end = start + frame.len() as u64;
    Ok(start)
}

/// Replays the log into `state`; returns the length of the valid prefix.
fn replay(path: &Path, state: &mut State) -> std::io::Result<u64> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut pos = 0u64;
    loop {
        let mut header = [0u8; 8];
        if !read_full(&mut reader, &mut header)? {
            return Ok(pos);
        }
        let len = u32::from_le_bytes(header[..4].try_into().unwrap());
        let crc = u32::from_le_bytes(header[4..].try_into().unwrap());
        if len == 0 || len > MAX_FRAME {
            return Ok(pos);
        }
        let mut payload = vec![0u8; len as usize];
        if !read_full(&mut reader, &mut payload)? || crc32fast::hash(&payload) != crc {
            return Ok(pos);
        }
        if !apply(state, pos, &payload) {
            return Ok(pos);
        }
        pos += FRAME_HEADER + len as u64;
    }
}

fn read_full(reader: &mut impl Read, buf: &mut [u8]) -> std::io::Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        match reader.read(&mut buf[filled..])? {
            0 => return Ok(false),
            n => filled += n,
        }
    }
    Ok(true)
}

fn apply(state: &mut State, frame_start: u64, p: &[u8]) -> bool {
    if p.len() < 17 {
        return false;
    }
    let data_ref = DataRef(Uuid::from_bytes(p[1..17].try_into().unwrap()));
    match p[0] {
        OP_PUT => {
            let Some(rest) = p.get(17..) else { return false };
            if rest.len() < 14 {
                return false;
            }
            let stored_at = i64::from_le_bytes(rest[..8].try_into().unwrap());
            let owner_len = u16::from_le_bytes(rest[8..10].try_into().unwrap()) as usize;
            let Some(owner) = rest.get(10..10 + owner_len) else {
                return false;
            };
            let Ok(owner) = std::str::from_utf8(owner) else {
                return false;
            };
            let Some(len_bytes) = rest.get(10 + owner_len..14 + owner_len) else {
                return false;
            };
            let blob_len = u32::from_le_bytes(len_bytes.try_into().unwrap());
            let blob_start = 17 + 14 + owner_len;
            if p.len() != blob_start + blob_len as usize {
                return false;
            }
            let seq = state.next_seq;
            state.next_seq += 1;
            state.slots.insert(
                data_ref,
                Slot {
                    owner: owner.to_owned(),
                    offset: frame_start + FRAME_HEADER + blob_start as u64,
                    len: blob_len,
                    stored_at,
                },
            );
            state
                .ledgers
                .entry(owner.to_owned())
                .or_default()
                .push(seq, data_ref);
            true
        }
        OP_DELETE => {
            if let Some(slot) = state.slots.remove(&data_ref) {
                if let Some(ledger) = state.ledgers.get_mut(&slot.owner) {
                    ledger.remove(&data_ref);
                }
            }
            true
        }
        _ => false,
    }
}
