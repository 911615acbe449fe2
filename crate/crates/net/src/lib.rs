//! Network plumbing shared by the registry, vault, data host and
//! application services.

mod error;
mod host;
mod tls;

pub use error::{ErrorBody, NetError};
pub use host::ServiceHost;
pub use tls::{self_signed_pem, TlsSettings};

/// Tells a client-side failure apart: `true` when the request never got an
/// answer from the peer (refused, reset, timed out).
pub fn is_unreachable(err: &reqwest::Error) -> bool {
    !(err.is_decode() || err.is_builder() || err.status().is_some())
}
