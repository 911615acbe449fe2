//! Core building blocks shared by every vaultline service.
//!
//! * [`model`]: the patient record, its two record kinds and the
//!   `?`-delimited row format used by every storage approach.
//! * [`synth`]: deterministic synthetic patient data.
//! * [`kdf`]: instance credentials and the per-instance encryption key.
//! * [`envelope`]: authenticated, context-carrying ciphertext blobs. This is
//!   the only representation of a record that ever leaves the application.

pub mod envelope;
pub mod kdf;
pub mod model;
pub mod synth;

pub use envelope::{open, seal, EnvelopeError, Opened};
pub use kdf::{derive_key, owner_token, DerivedKey, InstanceCredentials, KdfError};
pub use model::{parse_row, serialize_row, ModelError, PatientRecord, RecordKind, Row};
pub use synth::generate_synthetic;
