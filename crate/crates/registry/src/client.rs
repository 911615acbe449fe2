use reqwest::StatusCode;
use serde::Serialize;
use vaultline_core::InstanceCredentials;
use vaultline_net::{ErrorBody, TlsSettings};

use crate::{RegisterRequest, RegistryError, ReregisterRequest, VerifyRequest, VerifyResponse};

#[derive(Debug, Clone)]
pub struct RegistryClient {
    base_url: String,
    http: reqwest::Client,
}

impl RegistryClient {
    pub fn new(base_url: impl Into<String>, http: reqwest::Client) -> Self {
        RegistryClient {
            base_url: base_url.into().trim_end_matches('/').to_owned(),
            http,
        }
    }

    pub fn with_tls(base_url: impl Into<String>, tls: &TlsSettings) -> Result<Self, RegistryError> {
        let http = tls.client().map_err(|e| RegistryError::Protocol(e.to_string()))?;
        Ok(Self::new(base_url, http))
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub async fn register(
        &self,
        name: Option<&str>,
        admin_token: &str,
    ) -> Result<InstanceCredentials, RegistryError> {
        let req = RegisterRequest {
            name: name.map(str::to_owned),
            admin_token: admin_token.to_owned(),
        };
        self.post("/register", &req).await.map_err(|e| match e {
            RegistryError::NameTaken(_) | RegistryError::InvalidName(_) if name.is_some() => {
                let name = name.unwrap_or_default().to_owned();
                if matches!(e, RegistryError::NameTaken(_)) {
                    RegistryError::NameTaken(name)
                } else {
                    RegistryError::InvalidName(name)
                }
            }
            other => other,
        })
    }

    pub async fn reregister(
        &self,
        instance_id: &str,
        admin_token: &str,
    ) -> Result<InstanceCredentials, RegistryError> {
        let req = ReregisterRequest {
            instance_id: instance_id.to_owned(),
            admin_token: admin_token.to_owned(),
        };
        self.post("/reregister", &req).await.map_err(|e| match e {
            RegistryError::UnknownInstance(_) => RegistryError::UnknownInstance(instance_id.into()),
            other => other,
        })
    }

    pub async fn verify(&self, instance_id: &str, token: &str) -> Result<bool, RegistryError> {
        let req = VerifyRequest {
            instance_id: instance_id.to_owned(),
            token: token.to_owned(),
        };
        let resp: VerifyResponse = self.post("/verify", &req).await?;
        Ok(resp.valid)
    }

    async fn post<B, T>(&self, path: &str, body: &B) -> Result<T, RegistryError>
    where
        B: Serialize + ?Sized,
        T: serde::de::DeserializeOwned,
    {
        let resp = self
            .http
            .post(format!("{}{}", self.base_url, path))
            .json(body)
            .send()
            .await
            .map_err(|e| RegistryError::Unreachable(e.to_string()))?;
        let status = resp.status();
        if status.is_success() {
            return resp
                .json()
                .await
                .map_err(|e| RegistryError::Protocol(e.to_string()));
        }
        let body: Option<ErrorBody> = resp.json().await.ok();
        let message = body.map(|b| b.message).unwrap_or_default();
        Err(match status {
            StatusCode::UNAUTHORIZED => RegistryError::Unauthorized,
            StatusCode::CONFLICT => RegistryError::NameTaken(message),
            StatusCode::NOT_FOUND => RegistryError::UnknownInstance(message),
            StatusCode::BAD_REQUEST => RegistryError::InvalidName(message),
            other => RegistryError::Protocol(format!("{other}: {message}")),
        })
    }
}
