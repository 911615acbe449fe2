use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use reqwest::{Response, StatusCode};
use vaultline_core::{owner_token, InstanceCredentials};
use vaultline_net::ErrorBody;

use crate::{CreateRequest, CreateResponse, DataRef, GetResponse, ListResponse, VaultError};

/// HTTP client for one owner.
#[derive(Debug, Clone)]
pub struct VaultClient {
    base_url: String,
    http: reqwest::Client,
    owner: String,
    authorization: String,
}

impl VaultClient {
    pub fn new(base_url: impl Into<String>, http: reqwest::Client, creds: &InstanceCredentials) -> Self {
        Self::with_token(base_url, http, &creds.instance_id, &owner_token(creds))
    }

    /// Builds a client from an explicit owner token (tests use this to
    /// present bad credentials).
    pub fn with_token(base_url: impl Into<String>, http: reqwest::Client, owner: &str, token: &str) -> Self {
        VaultClient {
            base_url: base_url.into().trim_end_matches('/').to_owned(),
            http,
            owner: owner.to_owned(),
            authorization: format!("Bearer {owner}:{token}"),
        }
    }

    pub fn owner(&self) -> &str {
        &self.owner
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub async fn create(&self, blob: &[u8]) -> Result<DataRef, VaultError> {
        let resp = self
            .http
            .post(format!("{}/data", self.base_url))
            .header(reqwest::header::AUTHORIZATION, &self.authorization)
            .json(&CreateRequest {
                blob: B64.encode(blob),
            })
            .send()
            .await
            .map_err(unreachable)?;
        let body: CreateResponse = decode(resp).await?;
        Ok(body.data_ref)
    }

    pub async fn get(&self, data_ref: &DataRef) -> Result<Vec<u8>, VaultError> {
        let resp = self
            .http
            .get(format!("{}/data/{}", self.base_url, data_ref))
            .header(reqwest::header::AUTHORIZATION, &self.authorization)
            .send()
            .await
            .map_err(unreachable)?;
        let body: GetResponse = decode(resp).await?;
        B64.decode(body.blob.as_bytes())
            .map_err(|e| VaultError::Protocol(e.to_string()))
    }

    pub async fn delete(&self, data_ref: &DataRef) -> Result<(), VaultError> {
        let resp = self
            .http
            .delete(format!("{}/data/{}", self.base_url, data_ref))
            .header(reqwest::header::AUTHORIZATION, &self.authorization)
            .send()
            .await
            .map_err(unreachable)?;
        check(resp).await.map(drop)
    }

    pub async fn list_refs(&self) -> Result<Vec<DataRef>, VaultError> {
        let resp = self
            .http
            .get(format!("{}/references", self.base_url))
            .header(reqwest::header::AUTHORIZATION, &self.authorization)
            .send()
            .await
            .map_err(unreachable)?;
        let body: ListResponse = decode(resp).await?;
        Ok(body.refs)
    }
}

fn unreachable(e: reqwest::Error) -> VaultError {
    VaultError::Unreachable(e.to_string())
}

async fn check(resp: Response) -> Result<Response, VaultError> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let message = resp
        .json::<ErrorBody>()
        .await
        .map(|b| b.message)
        .unwrap_or_default();
    Err(match status {
        StatusCode::NOT_FOUND => VaultError::NotFound,
        StatusCode::UNAUTHORIZED => VaultError::UnauthorizedOwner,
        StatusCode::BAD_REQUEST => VaultError::BadRequest(message),
        StatusCode::SERVICE_UNAVAILABLE => VaultError::VerifierUnavailable(message),
        StatusCode::INTERNAL_SERVER_ERROR => VaultError::StorageFailure(message),
        other => VaultError::Protocol(format!("{other}: {message}")),
    })
}

async fn decode<T: serde::de::DeserializeOwned>(resp: Response) -> Result<T, VaultError> {
    let resp = check(resp).await?;
    // A body cut off mid-transfer is a dead peer, not a protocol violation.
    let bytes = resp.bytes().await.map_err(unreachable)?;
    serde_json::from_slice(&bytes).map_err(|e| VaultError::Protocol(e.to_string()))
}
