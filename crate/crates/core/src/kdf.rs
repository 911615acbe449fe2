//! Per-instance key derivation.
//!
//! The registry issues every application instance an instance id and a
//! license key. The salted input is their plain concatenation
//! `instance_id || license_key`, which is strengthened with
//! PBKDF2-HMAC-SHA256 under the fixed salt [`KDF_VERSION`] for a
//! configurable number of iterations. The construction is pinned by that
//! version tag; changing any part of it requires a new tag.
//!
//! A recovering instance that obtains the same credentials from the registry
//! recomputes the same key, which is what makes vault blobs readable again.

use std::fmt;

use hmac::{Hmac, KeyInit, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;
use zeroize::Zeroizing;

pub const KDF_VERSION: &str = "vaultline-kdf-v1";
pub const DEFAULT_ITERATIONS: u32 = 100_000;
pub const KEY_LEN: usize = 32;
pub const MIN_LICENSE_KEY_LEN: usize = 32;

const OWNER_TOKEN_CONTEXT: &[u8] = b"vaultline-owner-token-v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KdfError {
    #[error("invalid credentials: {0}")]
    InvalidCredentials(&'static str),
    #[error("iteration count must be at least 1")]
    ZeroIterations,
}

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceCredentials {
    pub instance_id: String,
    pub license_key: String,
}

impl InstanceCredentials {
    pub fn new(instance_id: impl Into<String>, license_key: impl Into<String>) -> Result<Self, KdfError> {
        let creds = InstanceCredentials {
            instance_id: instance_id.into(),
            license_key: license_key.into(),
        };
        creds.validate()?;
        Ok(creds)
    }

    pub fn validate(&self) -> Result<(), KdfError> {
        if self.instance_id.is_empty() {
            return Err(KdfError::InvalidCredentials("empty instance id"));
        }
        if self.license_key.is_empty() {
            return Err(KdfError::InvalidCredentials("empty license key"));
        }
        if self.license_key.len() < MIN_LICENSE_KEY_LEN {
            return Err(KdfError::InvalidCredentials(
                "license key shorter than 32 characters",
            ));
        }
        Ok(())
    }

    /// `instance_id || license_key`, the input to strengthening.
    pub fn salted_input(&self) -> Zeroizing<Vec<u8>> {
        let mut buf = Vec::with_capacity(self.instance_id.len() + self.license_key.len());
        buf.extend_from_slice(self.instance_id.as_bytes());
        buf.extend_from_slice(self.license_key.as_bytes());
        Zeroizing::new(buf)
    }
}

impl fmt::Debug for InstanceCredentials {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InstanceCredentials")
            .field("instance_id", &self.instance_id)
            .field("license_key", &"<redacted>")
            .finish()
    }
}

/// A 256-bit record encryption key. Deliberately not serializable.
#[derive(Clone, PartialEq, Eq)]
pub struct DerivedKey {
    bytes: Zeroizing<[u8; KEY_LEN]>,
    iterations: u32,
}

impl DerivedKey {
    /// Wraps raw key material. Used by tests and tooling that need a fixed key.
    pub fn from_bytes(bytes: [u8; KEY_LEN], iterations: u32) -> Self {
        DerivedKey {
            bytes: Zeroizing::new(bytes),
            iterations,
        }
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.bytes
    }

    pub fn iterations(&self) -> u32 {
        self.iterations
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.bytes.as_ref())
    }
}

impl fmt::Debug for DerivedKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DerivedKey")
            .field("iterations", &self.iterations)
            .finish_non_exhaustive()
    }
}

pub fn derive_key(creds: &InstanceCredentials, iterations: u32) -> Result<DerivedKey, KdfError> {
    if creds.instance_id.is_empty() || creds.license_key.is_empty() {
        return Err(KdfError::InvalidCredentials("empty field"));
    }
    if iterations == 0 {
        return Err(KdfError::ZeroIterations);
    }
    let mut out = Zeroizing::new([0u8; KEY_LEN]);
    pbkdf2::pbkdf2_hmac::<Sha256>(
        &creds.salted_input(),
        KDF_VERSION.as_bytes(),
        iterations,
        out.as_mut(),
    );
    Ok(DerivedKey {
        bytes: out,
        iterations,
    })
}

/// Bearer secret an instance presents to the vault. It is an HMAC of the
/// instance id keyed by the license key, so the vault never learns the
/// license key or the record key.
pub fn owner_token(creds: &InstanceCredentials) -> String {
    let mut mac = <Hmac<Sha256> as KeyInit>::new_from_slice(creds.license_key.as_bytes())
        .expect("hmac accepts any key length");
    mac.update(OWNER_TOKEN_CONTEXT);
    mac.update(creds.instance_id.as_bytes());
    hex::encode(mac.finalize().into_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LICENSE: &str = "0123456789abcdef0123456789abcdef0123456789abcdef0123456789abcdef";

    fn creds() -> InstanceCredentials {
        InstanceCredentials::new("clinic-north-01", LICENSE).unwrap()
    }

    // Expected values computed independently with Python's
    // hashlib.pbkdf2_hmac / hmac modules.
    #[test]
    fn known_answers() {
        let c = creds();
        assert_eq!(
            derive_key(&c, 1).unwrap().to_hex(),
            "e937753e742c6f3519fc4f431ebeac06632ba840445f93865acbd5217b26bf62"
        );
        assert_eq!(
            derive_key(&c, 1000).unwrap().to_hex(),
            "0a40e4fb80aa11545c4e8386dcb3dd0b58ac64b626639413172502ba7f8ab903"
        );
        assert_eq!(
            owner_token(&c),
            "1ac247818f4308614bdb3ce3539f4bf4fa258ffa403b01c469ff378e0e515246"
        );
    }

    #[test]
    fn default_iteration_known_answer() {
        assert_eq!(
            derive_key(&creds(), DEFAULT_ITERATIONS).unwrap().to_hex(),
            "23f99b2484c683072f17b96a85ba987f2316e76dcb2356019e47ee8e78ed53d3"
        );
    }

    #[test]
    fn deterministic_and_iteration_sensitive() {
        let c = creds();
        let a = derive_key(&c, 500).unwrap();
        assert_eq!(a, derive_key(&c, 500).unwrap());
        assert_ne!(a.as_bytes(), derive_key(&c, 501).unwrap().as_bytes());
        assert_eq!(a.iterations(), 500);
    }

    #[test]
    fn salted_input_is_plain_concatenation() {
        let c = creds();
        assert_eq!(
            c.salted_input().as_slice(),
            format!("clinic-north-01{LICENSE}").as_bytes()
        );
    }

    #[test]
    fn rejects_bad_credentials() {
        assert!(InstanceCredentials::new("", LICENSE).is_err());
        assert!(InstanceCredentials::new("a", "").is_err());
        assert!(InstanceCredentials::new("a", "short").is_err());
        let empty = InstanceCredentials {
            instance_id: String::new(),
            license_key: LICENSE.into(),
        };
        assert!(matches!(
            derive_key(&empty, 1),
            Err(KdfError::InvalidCredentials(_))
        ));
        assert_eq!(derive_key(&creds(), 0), Err(KdfError::ZeroIterations));
    }

    #[test]
    fn debug_output_hides_secrets() {
        let c = creds();
        let k = derive_key(&c, 1).unwrap();
        assert!(!format!("{c:?}").contains(LICENSE));
        assert!(!format!("{k:?}").contains(&k.to_hex()));
    }
}
