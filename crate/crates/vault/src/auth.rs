use std::collections::HashSet;
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use vaultline_registry::{Registry, RegistryClient, RegistryError};

use crate::VaultError;

/// Decides whether a bearer token belongs to the named instance.
#[async_trait]
pub trait OwnerVerifier: Send + Sync {
    async fn verify(&self, instance_id: &str, token: &str) -> Result<bool, VaultError>;
}

#[async_trait]
impl OwnerVerifier for Registry {
    async fn verify(&self, instance_id: &str, token: &str) -> Result<bool, VaultError> {
        Ok(self.verify_owner(instance_id, token))
    }
}

#[async_trait]
impl OwnerVerifier for RegistryClient {
    async fn verify(&self, instance_id: &str, token: &str) -> Result<bool, VaultError> {
        RegistryClient::verify(self, instance_id, token)
            .await
            .map_err(|e| match e {
                RegistryError::Unreachable(m) => VaultError::VerifierUnavailable(m),
                other => VaultError::VerifierUnavailable(other.to_string()),
            })
    }
}

#[async_trait]
impl<T: OwnerVerifier + ?Sized> OwnerVerifier for Arc<T> {
    async fn verify(&self, instance_id: &str, token: &str) -> Result<bool, VaultError> {
        (**self).verify(instance_id, token).await
    }
}

/// Remembers positive answers so the registry is consulted once per owner.
/// Owner tokens never change, so a positive answer stays valid.
pub struct CachingVerifier<V> {
    inner: V,
    accepted: Mutex<HashSet<(String, String)>>,
}

impl<V: OwnerVerifier> CachingVerifier<V> {
    pub fn new(inner: V) -> Self {
        CachingVerifier {
            inner,
            accepted: Mutex::new(HashSet::new()),
        }
    }
}

#[async_trait]
impl<V: OwnerVerifier> OwnerVerifier for CachingVerifier<V> {
    async fn verify(&self, instance_id: &str, token: &str) -> Result<bool, VaultError> {
        let key = (instance_id.to_owned(), token.to_owned());
        if self.accepted.lock().expect("cache lock").contains(&key) {
            return Ok(true);
        }
        let ok = self.inner.verify(instance_id, token).await?;
        if ok {
            self.accepted.lock().expect("cache lock").insert(key);
        }
        Ok(ok)
    }
}
