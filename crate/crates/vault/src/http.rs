use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use vaultline_net::ErrorBody;

use crate::{DataRef, OwnerVerifier, VaultError, VaultStore};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateRequest {
    /// Base64 (standard alphabet, padded).
    pub blob: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateResponse {
    #[serde(rename = "ref")]
    pub data_ref: DataRef,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GetResponse {
    pub blob: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ListResponse {
    pub refs: Vec<DataRef>,
}

impl IntoResponse for VaultError {
    fn into_response(self) -> Response {
        let status = match self {
            VaultError::NotFound => StatusCode::NOT_FOUND,
            VaultError::UnauthorizedOwner => StatusCode::UNAUTHORIZED,
            VaultError::BadRequest(_) => StatusCode::BAD_REQUEST,
            VaultError::VerifierUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ErrorBody::new(self.kind(), self.to_string()).into_response_with(status)
    }
}

#[derive(Clone)]
struct AppState {
    store: Arc<VaultStore>,
    verifier: Arc<dyn OwnerVerifier>,
}

/// Routes: `POST /data`, `GET /data/{ref}`, `DELETE /data/{ref}`,
/// `GET /references`. Every call carries `Authorization: Bearer
/// <instance_id>:<owner_token>`; get and delete only see the caller's own
/// refs and answer 404 for anyone else's.
pub fn router(store: Arc<VaultStore>, verifier: Arc<dyn OwnerVerifier>) -> Router {
    Router::new()
        .route("/data", post(create))
        .route("/data/{data_ref}", get(fetch).delete(remove))
        .route("/references", get(list))
        .route("/health", get(|| async { "ok" }))
        .with_state(AppState { store, verifier })
}

/// Splits `Bearer <instance_id>:<token>`. The token is hex, so the last
/// colon separates the two parts.
pub fn parse_bearer(value: &str) -> Option<(&str, &str)> {
    let credential = value.strip_prefix("Bearer ")?;
    let (owner, token) = credential.rsplit_once(':')?;
    (!owner.is_empty() && !token.is_empty()).then_some((owner, token))
}

async fn authenticate(state: &AppState, headers: &HeaderMap) -> Result<String, VaultError> {
    let value = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .ok_or(VaultError::UnauthorizedOwner)?;
    let (owner, token) = parse_bearer(value).ok_or(VaultError::UnauthorizedOwner)?;
    if state.verifier.verify(owner, token).await? {
        Ok(owner.to_owned())
    } else {
        Err(VaultError::UnauthorizedOwner)
    }
}

async fn blocking<T, F>(f: F) -> Result<T, VaultError>
where
    F: FnOnce() -> Result<T, VaultError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| VaultError::StorageFailure(e.to_string()))?
}

async fn create(
    State(state): State<AppState>,
    headers: HeaderMap,
    Json(req): Json<CreateRequest>,
) -> Result<(StatusCode, Json<CreateResponse>), VaultError> {
    let owner = authenticate(&state, &headers).await?;
    let blob = B64
        .decode(req.blob.as_bytes())
        .map_err(|e| VaultError::BadRequest(format!("blob is not base64: {e}")))?;
    let store = state.store.clone();
    let data_ref = blocking(move || store.create(&owner, &blob)).await?;
    Ok((StatusCode::CREATED, Json(CreateResponse { data_ref })))
}

async fn fetch(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(data_ref): Path<String>,
) -> Result<Json<GetResponse>, VaultError> {
    let owner = authenticate(&state, &headers).await?;
    let data_ref: DataRef = data_ref.parse()?;
    let store = state.store.clone();
    let entry = blocking(move || store.get(&data_ref)).await?;
    if entry.owner_instance_id != owner {
        return Err(VaultError::NotFound);
    }
    Ok(Json(GetResponse {
        blob: B64.encode(entry.blob),
    }))
}

async fn remove(
    State(state): State<AppState>,
    headers: HeaderMap,
    Path(data_ref): Path<String>,
) -> Result<StatusCode, VaultError> {
    let owner = authenticate(&state, &headers).await?;
    let data_ref: DataRef = data_ref.parse()?;
    let store = state.store.clone();
    blocking(move || {
        if store.owner_of(&data_ref).as_deref() != Some(owner.as_str()) {
            return Err(VaultError::NotFound);
        }
        store.delete(&data_ref)
    })
    .await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn list(State(state): State<AppState>, headers: HeaderMap) -> Result<Json<ListResponse>, VaultError> {
    let owner = authenticate(&state, &headers).await?;
    Ok(Json(ListResponse {
        refs: state.store.list_refs(&owner),
    }))
}

#[cfg(test)]
mod tests {
    use super::parse_bearer;

    #[test]
    fn bearer_parsing() {
        assert_eq!(parse_bearer("Bearer inst-1:abcd"), Some(("inst-1", "abcd")));
        assert_eq!(parse_bearer("Bearer a:b:cd"), Some(("a:b", "cd")));
        assert_eq!(parse_bearer("Basic a:b"), None);
        assert_eq!(parse_bearer("Bearer nocolon"), None);
        assert_eq!(parse_bearer("Bearer :tok"), None);
    }
}
