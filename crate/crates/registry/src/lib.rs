//! The central registry.
//!
//! An application instance registers once and receives an instance id and a
//! license key. The pair never changes, so an instance rebuilt after a
//! compromise can ask for the same credentials again (`reregister`) and
//! recompute its record key. Both calls are gated by an operator admin token
//! handed out of band.

mod client;
mod http;
mod store;

pub use client::RegistryClient;
pub use http::{router, RegisterRequest, ReregisterRequest, VerifyRequest, VerifyResponse};
pub use store::{Registry, RegistryEntry};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegistryError {
    #[error("admin token rejected")]
    Unauthorized,
    #[error("instance name {0:?} is already registered")]
    NameTaken(String),
    #[error("unknown instance {0:?}")]
    UnknownInstance(String),
    #[error("invalid instance name {0:?}")]
    InvalidName(String),
    #[error("registry storage failure: {0}")]
    Storage(String),
    #[error("registry unreachable: {0}")]
    Unreachable(String),
    #[error("unexpected registry response: {0}")]
    Protocol(String),
}

impl RegistryError {
    /// Stable machine-readable name used in HTTP error bodies.
    pub fn kind(&self) -> &'static str {
        match self {
            RegistryError::Unauthorized => "unauthorized",
            RegistryError::NameTaken(_) => "name_taken",
            RegistryError::UnknownInstance(_) => "unknown_instance",
            RegistryError::InvalidName(_) => "invalid_name",
            RegistryError::Storage(_) => "storage_failure",
            RegistryError::Unreachable(_) => "unreachable",
            RegistryError::Protocol(_) => "protocol",
        }
    }
}
