//! Sealed envelopes: AES-256-GCM blobs that carry a record row together with
//! its context (record kind and patient id).
//!
//! Layout, version 1:
//!
//! ```text
//! +---------+-----------+-------------------------+----------+
//! | version | nonce     | ciphertext              | tag      |
//! | 1 byte  | 12 bytes  | len(plaintext) bytes    | 16 bytes |
//! +---------+-----------+-------------------------+----------+
//! ```
//!
//! The plaintext is `kind_tag (1) || id_len (u16 BE) || patient_id || row`
//! and the version byte is bound as associated data. Everything that could
//! identify a person lives inside the ciphertext, so a holder of the blob
//! without the key learns nothing but its length.

use aes_gcm::aead::{Aead, Payload};
use aes_gcm::{Aes256Gcm, KeyInit, Nonce};
use rand::RngCore;
use thiserror::Error;

use crate::kdf::DerivedKey;
use crate::model::RecordKind;

pub const ENVELOPE_VERSION: u8 = 1;
pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;
pub const HEADER_LEN: usize = 1 + NONCE_LEN;
/// Smallest well-formed envelope: header, the 3-byte plaintext prefix, tag.
pub const MIN_ENVELOPE_LEN: usize = HEADER_LEN + 3 + TAG_LEN;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnvelopeError {
    #[error("envelope failed authentication (tampered or wrong key)")]
    AuthenticationFailure,
    #[error("malformed envelope: {0}")]
    MalformedEnvelope(&'static str),
    #[error("patient id too long for envelope ({0} bytes)")]
    PatientIdTooLong(usize),
}

/// The triple recovered from an envelope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Opened {
    pub kind: RecordKind,
    pub patient_id: String,
    pub row: String,
}

/// Encrypts `(kind, patient_id, row)` under `key` with a fresh random nonce.
pub fn seal(
    key: &DerivedKey,
    kind: RecordKind,
    patient_id: &str,
    row: &str,
) -> Result<Vec<u8>, EnvelopeError> {
    let mut nonce = [0u8; NONCE_LEN];
    rand::rng().fill_bytes(&mut nonce);
    seal_with_nonce(key, nonce, kind, patient_id, row)
}

/// Deterministic sealing with a caller-chosen nonce. Only for fixtures: a
/// nonce must never be reused under the same key.
pub fn seal_with_nonce(
    key: &DerivedKey,
    nonce: [u8; NONCE_LEN],
    kind: RecordKind,
    patient_id: &str,
    row: &str,
) -> Result<Vec<u8>, EnvelopeError> {
    let id_len =
        u16::try_from(patient_id.len()).map_err(|_| EnvelopeError::PatientIdTooLong(patient_id.len()))?;

    let mut plaintext = Vec::with_capacity(3 + patient_id.len() + row.len());
    plaintext.push(kind.tag());
    plaintext.extend_from_slice(&id_len.to_be_bytes());
    plaintext.extend_from_slice(patient_id.as_bytes());
    plaintext.extend_from_slice(row.as_bytes());

    let cipher = cipher(key);
    let sealed = cipher
        .encrypt(
            &Nonce::from(nonce),
            Payload {
                msg: &plaintext,
                aad: &[ENVELOPE_VERSION],
            },
        )
        .expect("AES-GCM encryption of in-memory buffers cannot fail");

    let mut out = Vec::with_capacity(HEADER_LEN + sealed.len());
    out.push(ENVELOPE_VERSION);
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&sealed);
    Ok(out)
}

pub fn open(key: &DerivedKey, blob: &[u8]) -> Result<Opened, EnvelopeError> {
    if blob.len() < MIN_ENVELOPE_LEN {
        return Err(EnvelopeError::MalformedEnvelope("truncated"));
    }
    if blob[0] != ENVELOPE_VERSION {
        return Err(EnvelopeError::MalformedEnvelope("unknown version"));
    }
    let nonce: [u8; NONCE_LEN] = blob[1..HEADER_LEN].try_into().expect("length checked");
    let plaintext = cipher(key)
        .decrypt(
            &Nonce::from(nonce),
            Payload {
                msg: &blob[HEADER_LEN..],
                aad: &blob[..1],
            },
        )
        .map_err(|_| EnvelopeError::AuthenticationFailure)?;

    // Authenticated plaintext that does not decode means the sealing side
    // wrote a bad layout, not that someone tampered with it.
    let kind =
        RecordKind::from_tag(plaintext[0]).ok_or(EnvelopeError::MalformedEnvelope("unknown record kind"))?;
    let id_len = u16::from_be_bytes([plaintext[1], plaintext[2]]) as usize;
    let rest = &plaintext[3..];
    if rest.len() < id_len {
        return Err(EnvelopeError::MalformedEnvelope("patient id overruns payload"));
    }
    let (id, row) = rest.split_at(id_len);
    let patient_id = String::from_utf8(id.to_vec())
        .map_err(|_| EnvelopeError::MalformedEnvelope("patient id not utf-8"))?;
    let row =
        String::from_utf8(row.to_vec()).map_err(|_| EnvelopeError::MalformedEnvelope("row not utf-8"))?;
    Ok(Opened {
        kind,
        patient_id,
        row,
    })
}

fn cipher(key: &DerivedKey) -> Aes256Gcm {
    Aes256Gcm::new_from_slice(key.as_bytes()).expect("32-byte key")
}
