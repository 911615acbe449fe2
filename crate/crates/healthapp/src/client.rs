use std::time::Duration;

use reqwest::{Method, Response};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;
use vaultline_core::PatientRecord;
use vaultline_net::ErrorBody;

use crate::{CreatedResponse, ListResponse, RecoverRequest, RecoverResponse};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ApiError {
    /// A non-2xx answer; `kind` is the error name from the body.
    #[error("{status} {kind}: {message}")]
    Status {
        status: u16,
        kind: String,
        message: String,
    },
    #[error("application unreachable: {0}")]
    Unreachable(String),
    #[error("unexpected response: {0}")]
    Protocol(String),
}

impl ApiError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ApiError::Status { status, .. } => Some(*status),
            _ => None,
        }
    }

    pub fn kind(&self) -> &str {
        match self {
            ApiError::Status { kind, .. } => kind,
            ApiError::Unreachable(_) => "unreachable",
            ApiError::Protocol(_) => "protocol",
        }
    }
}

/// Recovery reads back every blob the instance owns, which takes far longer
/// than a patient request.
const RECOVER_TIMEOUT: Duration = Duration::from_secs(900);

/// HTTP client for the application's patient API.
#[derive(Debug, Clone)]
pub struct AppClient {
    base_url: String,
    http: reqwest::Client,
}

impl AppClient {
    pub fn new(base_url: impl Into<String>, http: reqwest::Client) -> Self {
        AppClient {
            base_url: base_url.into().trim_end_matches('/').to_owned(),
            http,
        }
    }

    async fn send<B: Serialize>(
        &self,
        method: Method,
        path: &str,
        body: Option<&B>,
    ) -> Result<Response, ApiError> {
        self.send_within(method, path, body, None).await
    }

    async fn send_within<B: Serialize>(
        &self,
        method: Method,
        path: &str,
        body: Option<&B>,
        timeout: Option<Duration>,
    ) -> Result<Response, ApiError> {
        let mut req = self.http.request(method, format!("{}{}", self.base_url, path));
        if let Some(t) = timeout {
            req = req.timeout(t);
        }
        if let Some(body) = body {
            req = req.json(body);
        }
        let resp = req
            .send()
            .await
            .map_err(|e| ApiError::Unreachable(e.to_string()))?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let bytes = resp.bytes().await.unwrap_or_default();
        let (kind, message) = match serde_json::from_slice::<ErrorBody>(&bytes) {
            Ok(b) => (b.error, b.message),
            Err(_) => ("http".to_owned(), String::from_utf8_lossy(&bytes).into_owned()),
        };
        Err(ApiError::Status {
            status: status.as_u16(),
            kind,
            message,
        })
    }

    async fn json<T: DeserializeOwned>(resp: Response) -> Result<T, ApiError> {
        let bytes = resp
            .bytes()
            .await
            .map_err(|e| ApiError::Unreachable(e.to_string()))?;
        serde_json::from_slice(&bytes).map_err(|e| ApiError::Protocol(e.to_string()))
    }

    pub async fn create(&self, record: &PatientRecord) -> Result<CreatedResponse, ApiError> {
        Self::json(self.send(Method::POST, "/patients", Some(record)).await?).await
    }

    pub async fn read(&self, patient_id: &str) -> Result<PatientRecord, ApiError> {
        let path = format!("/patients/{patient_id}");
        Self::json(self.send::<()>(Method::GET, &path, None).await?).await
    }

    pub async fn update(&self, patient_id: &str, record: &PatientRecord) -> Result<(), ApiError> {
        let path = format!("/patients/{patient_id}");
        self.send(Method::PUT, &path, Some(record)).await.map(drop)
    }

    pub async fn delete(&self, patient_id: &str) -> Result<(), ApiError> {
        let path = format!("/patients/{patient_id}");
        self.send::<()>(Method::DELETE, &path, None).await.map(drop)
    }

    pub async fn list(&self) -> Result<Vec<String>, ApiError> {
        let resp: ListResponse = Self::json(self.send::<()>(Method::GET, "/patients", None).await?).await?;
        Ok(resp.patient_ids)
    }

    pub async fn recover(&self, instance_id: &str, admin_token: &str) -> Result<RecoverResponse, ApiError> {
        let req = RecoverRequest {
            instance_id: instance_id.to_owned(),
            admin_token: admin_token.to_owned(),
        };
        let resp = self
            .send_within(Method::POST, "/admin/recover", Some(&req), Some(RECOVER_TIMEOUT))
            .await?;
        Self::json(resp).await
    }
}
