//! Routes:
//!
//! | method | path               | body / reply                                   |
//! |--------|--------------------|------------------------------------------------|
//! | POST   | `/patients`        | record → 201 `{patient_id, pii, financial}`    |
//! | GET    | `/patients`        | `{patient_ids: [...]}`                         |
//! | GET    | `/patients/{id}`   | record                                         |
//! | PUT    | `/patients/{id}`   | record → 204                                   |
//! | DELETE | `/patients/{id}`   | 204                                            |
//! | POST   | `/admin/recover`   | `{instance_id, admin_token}` → recovery report |
//! | GET    | `/health`          | `ok`                                           |

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use vaultline_core::PatientRecord;
use vaultline_net::ErrorBody;
use vaultline_registry::RegistryError;
use vaultline_storage::{RecordStore, StorageError};

use crate::{AppError, AppState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CreatedResponse {
    pub patient_id: String,
    pub pii: String,
    pub financial: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListResponse {
    pub patient_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoverRequest {
    pub instance_id: String,
    pub admin_token: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoverResponse {
    pub instance_id: String,
    pub refs_listed: usize,
    /// Vault blobs placed in the rebuilt index.
    pub records_restored: usize,
    pub patients_restored: usize,
    pub orphans: Vec<String>,
    pub superseded: usize,
    pub elapsed_ms: f64,
}

pub struct Failure(StatusCode, ErrorBody);

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        self.1.into_response_with(self.0)
    }
}

impl From<StorageError> for Failure {
    fn from(e: StorageError) -> Self {
        let status = match e {
            StorageError::DuplicatePatient(_) => StatusCode::CONFLICT,
            StorageError::NotFound(_) => StatusCode::NOT_FOUND,
            StorageError::InvalidRecord(_) => StatusCode::BAD_REQUEST,
            StorageError::BackendUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            StorageError::AuthenticationFailure(_) | StorageError::Corrupt(_) | StorageError::Io(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        Failure(status, ErrorBody::new(e.kind(), e.to_string()))
    }
}

impl From<AppError> for Failure {
    fn from(e: AppError) -> Self {
        let (status, kind) = match &e {
            AppError::Storage(s) => return s.clone().into(),
            AppError::RegistryUnreachable(_) => (StatusCode::SERVICE_UNAVAILABLE, "registry_unreachable"),
            AppError::Unauthorized => (StatusCode::UNAUTHORIZED, "unauthorized"),
            AppError::Registry(RegistryError::UnknownInstance(_)) => {
                (StatusCode::NOT_FOUND, "unknown_instance")
            }
            AppError::Registry(r) => (StatusCode::BAD_GATEWAY, r.kind()),
            AppError::Unsupported(_) => (StatusCode::NOT_IMPLEMENTED, "unsupported"),
            AppError::Busy => (StatusCode::CONFLICT, "recovery_in_progress"),
            AppError::Kdf(_) | AppError::Net(_) | AppError::Config(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        Failure(status, ErrorBody::new(kind, e.to_string()))
    }
}

fn bad_json(e: JsonRejection) -> Failure {
    Failure(
        StatusCode::BAD_REQUEST,
        ErrorBody::new("bad_request", e.body_text()),
    )
}

type Reply<T> = Result<T, Failure>;

/// The backend, unless a recovery is rebuilding it.
fn backend(state: &AppState) -> Reply<Arc<dyn RecordStore>> {
    if state.is_recovering() {
        return Err(Failure(
            StatusCode::SERVICE_UNAVAILABLE,
            ErrorBody::new("recovering", "recovery in progress"),
        ));
    }
    Ok(state.backend())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/patients", post(create).get(list))
        .route("/patients/{id}", get(read).put(update).delete(remove))
        .route("/admin/recover", post(recover))
        .route("/health", get(|| async { "ok" }))
        .with_state(state)
}

async fn create(
    State(state): State<Arc<AppState>>,
    body: Result<Json<PatientRecord>, JsonRejection>,
) -> Reply<(StatusCode, Json<CreatedResponse>)> {
    let Json(record) = body.map_err(bad_json)?;
    let handle = backend(&state)?.create(&record).await?;
    Ok((
        StatusCode::CREATED,
        Json(CreatedResponse {
            patient_id: record.patient_id,
            pii: handle.pii,
            financial: handle.financial,
        }),
    ))
}

async fn list(State(state): State<Arc<AppState>>) -> Reply<Json<ListResponse>> {
    let patient_ids = backend(&state)?.list().await?;
    Ok(Json(ListResponse { patient_ids }))
}

async fn read(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Reply<Json<PatientRecord>> {
    Ok(Json(backend(&state)?.read(&id).await?))
}

async fn update(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<PatientRecord>, JsonRejection>,
) -> Reply<StatusCode> {
    let Json(record) = body.map_err(bad_json)?;
    backend(&state)?.update(&id, &record).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn remove(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Reply<StatusCode> {
    backend(&state)?.delete(&id).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn recover(
    State(state): State<Arc<AppState>>,
    body: Result<Json<RecoverRequest>, JsonRejection>,
) -> Reply<Json<RecoverResponse>> {
    let Json(req) = body.map_err(bad_json)?;
    let (instance_id, outcome) = state.recover(&req.instance_id, &req.admin_token).await?;
    log::info!(
        "recovered {} patients ({} blobs) in {:?}",
        outcome.patients_restored,
        outcome.records_restored,
        outcome.elapsed
    );
    Ok(Json(RecoverResponse {
        instance_id,
        refs_listed: outcome.refs_listed,
        records_restored: outcome.records_restored,
        patients_restored: outcome.patients_restored,
        orphans: outcome.orphans.iter().map(|r| r.to_string()).collect(),
        superseded: outcome.superseded.len(),
        elapsed_ms: outcome.elapsed.as_secs_f64() * 1e3,
    }))
}
