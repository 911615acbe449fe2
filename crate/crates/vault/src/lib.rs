//! The vault: a remote store for sealed blobs.
//!
//! The vault never interprets what it stores. Every blob is filed under a
//! fresh UUID ([`DataRef`]) and that UUID is appended to the owning
//! instance's reference ledger, which is what a rebuilt instance reads to
//! find its data again. Four operations are exposed: create, get, delete
//! and list_refs.

mod auth;
mod client;
mod http;
mod store;

pub use auth::{CachingVerifier, OwnerVerifier};
pub use client::VaultClient;
pub use http::{parse_bearer, router, CreateRequest, CreateResponse, GetResponse, ListResponse};
pub use store::{VaultEntry, VaultStore};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

/// Handle to one stored blob. Rendered as a canonical hyphenated UUID.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DataRef(pub Uuid);

impl DataRef {
    pub fn new_random() -> Self {
        DataRef(Uuid::new_v4())
    }
}

impl fmt::Display for DataRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0.hyphenated(), f)
    }
}

impl FromStr for DataRef {
    type Err = VaultError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Uuid::try_parse(s)
            .map(DataRef)
            .map_err(|_| VaultError::BadRequest(format!("not a uuid: {s:?}")))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VaultError {
    #[error("no such data reference")]
    NotFound,
    #[error("owner credentials rejected")]
    UnauthorizedOwner,
    #[error("vault storage failure: {0}")]
    StorageFailure(String),
    #[error("owner verification unavailable: {0}")]
    VerifierUnavailable(String),
    #[error("vault unreachable: {0}")]
    Unreachable(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("unexpected vault response: {0}")]
    Protocol(String),
}

impl VaultError {
    pub fn kind(&self) -> &'static str {
        match self {
            VaultError::NotFound => "not_found",
            VaultError::UnauthorizedOwner => "unauthorized_owner",
            VaultError::StorageFailure(_) => "storage_failure",
            VaultError::VerifierUnavailable(_) => "verifier_unavailable",
            VaultError::Unreachable(_) => "unreachable",
            VaultError::BadRequest(_) => "bad_request",
            VaultError::Protocol(_) => "protocol",
        }
    }
}
