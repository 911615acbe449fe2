use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use vaultline_core::InstanceCredentials;
use vaultline_net::ErrorBody;

use crate::{Registry, RegistryError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegisterRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub admin_token: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReregisterRequest {
    pub instance_id: String,
    pub admin_token: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyRequest {
    pub instance_id: String,
    pub token: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifyResponse {
    pub valid: bool,
}

impl IntoResponse for RegistryError {
    fn into_response(self) -> Response {
        let status = match self {
            RegistryError::Unauthorized => StatusCode::UNAUTHORIZED,
            RegistryError::NameTaken(_) => StatusCode::CONFLICT,
            RegistryError::UnknownInstance(_) => StatusCode::NOT_FOUND,
            RegistryError::InvalidName(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ErrorBody::new(self.kind(), self.to_string()).into_response_with(status)
    }
}

/// `POST /register`, `POST /reregister`, `POST /verify`, `GET /health`.
pub fn router(registry: Arc<Registry>) -> Router {
    Router::new()
        .route("/register", post(register))
        .route("/reregister", post(reregister))
        .route("/verify", post(verify))
        .route("/health", get(|| async { "ok" }))
        .with_state(registry)
}

// Registration appends and fsyncs, so it runs on the blocking pool.
async fn register(
    State(registry): State<Arc<Registry>>,
    Json(req): Json<RegisterRequest>,
) -> Result<Json<InstanceCredentials>, RegistryError> {
    let creds = tokio_blocking(move || registry.register(req.name.as_deref(), &req.admin_token)).await?;
    Ok(Json(creds))
}

async fn reregister(
    State(registry): State<Arc<Registry>>,
    Json(req): Json<ReregisterRequest>,
) -> Result<Json<InstanceCredentials>, RegistryError> {
    registry.reregister(&req.instance_id, &req.admin_token).map(Json)
}

async fn verify(
    State(registry): State<Arc<Registry>>,
    Json(req): Json<VerifyRequest>,
) -> Json<VerifyResponse> {
    Json(VerifyResponse {
        valid: registry.verify_owner(&req.instance_id, &req.token),
    })
}

async fn tokio_blocking<T, F>(f: F) -> Result<T, RegistryError>
where
    F: FnOnce() -> Result<T, RegistryError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| RegistryError::Storage(e.to_string()))?
}
