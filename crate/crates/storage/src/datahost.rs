//! The remote data host: a network service in front of a shared file tree
//! and a SQLite database, used by the `RemoteFile*` and `RemoteDatabase`
//! approaches.
//!
//! Routes, with `{area}` one of `files` / `db`, `{kind}` one of
//! `pii` / `financial`:
//!
//! | method | path                          | effect                      |
//! |--------|-------------------------------|-----------------------------|
//! | POST   | `/{area}/{ns}/{kind}/{id}`    | insert row (409 if present) |
//! | PUT    | `/{area}/{ns}/{kind}/{id}`    | replace row (404 if absent) |
//! | GET    | `/{area}/{ns}/{kind}/{id}`    | raw row bytes               |
//! | DELETE | `/{area}/{ns}/{kind}/{id}`    | remove row                  |
//! | GET    | `/{area}/{ns}/{kind}`         | `{"ids": [...]}`            |

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use vaultline_core::model::validate_patient_id;
use vaultline_core::RecordKind;
use vaultline_net::ErrorBody;

use crate::remote::{Area, IdsResponse};
use crate::rows::{LocalDir, RowError, RowStore, SqliteRows};

pub struct DataHost {
    data_dir: PathBuf,
    stores: Mutex<HashMap<(Area, String), Arc<dyn RowStore>>>,
}

impl DataHost {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        DataHost {
            data_dir: data_dir.into(),
            stores: Mutex::new(HashMap::new()),
        }
    }

    fn store(&self, area: Area, ns: &str) -> Result<Arc<dyn RowStore>, RowError> {
        let mut stores = self.stores.lock().expect("datahost lock poisoned");
        if let Some(s) = stores.get(&(area, ns.to_owned())) {
            return Ok(s.clone());
        }
        let store: Arc<dyn RowStore> = match area {
            Area::Files => Arc::new(LocalDir::open(self.data_dir.join("files").join(ns))?),
            Area::Db => Arc::new(SqliteRows::open(
                self.data_dir.join("db").join(format!("{ns}.sqlite")),
            )?),
        };
        stores.insert((area, ns.to_owned()), store.clone());
        Ok(store)
    }
}

struct Failure(StatusCode, ErrorBody);

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        self.1.into_response_with(self.0)
    }
}

impl From<RowError> for Failure {
    fn from(e: RowError) -> Self {
        let (status, kind) = match e {
            RowError::Exists => (StatusCode::CONFLICT, "exists"),
            RowError::Missing => (StatusCode::NOT_FOUND, "missing"),
            RowError::Unavailable(_) => (StatusCode::SERVICE_UNAVAILABLE, "unavailable"),
            RowError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "io"),
        };
        Failure(status, ErrorBody::new(kind, e.to_string()))
    }
}

fn bad_request(msg: String) -> Failure {
    Failure(StatusCode::BAD_REQUEST, ErrorBody::new("bad_request", msg))
}

fn resolve(
    host: &DataHost,
    area: &str,
    ns: &str,
    kind: &str,
) -> Result<(Arc<dyn RowStore>, RecordKind), Failure> {
    let area = match area {
        "files" => Area::Files,
        "db" => Area::Db,
        other => return Err(bad_request(format!("unknown area {other:?}"))),
    };
    validate_patient_id(ns).map_err(|e| bad_request(e.to_string()))?;
    let kind: RecordKind = kind
        .parse()
        .map_err(|e: vaultline_core::ModelError| bad_request(e.to_string()))?;
    Ok((host.store(area, ns)?, kind))
}

pub fn router(host: Arc<DataHost>) -> Router {
    Router::new()
        .route("/{area}/{ns}/{kind}", get(list_ids))
        .route(
            "/{area}/{ns}/{kind}/{id}",
            get(fetch).post(insert).put(replace).delete(remove),
        )
        .route("/health", get(|| async { "ok" }))
        .with_state(host)
}

type Target = Path<(String, String, String, String)>;

async fn list_ids(
    State(host): State<Arc<DataHost>>,
    Path((area, ns, kind)): Path<(String, String, String)>,
) -> Result<Json<IdsResponse>, Failure> {
    let (store, kind) = resolve(&host, &area, &ns, &kind)?;
    Ok(Json(IdsResponse {
        ids: store.ids(kind).await?,
    }))
}

async fn fetch(
    State(host): State<Arc<DataHost>>,
    Path((area, ns, kind, id)): Target,
) -> Result<Vec<u8>, Failure> {
    let (store, kind) = resolve(&host, &area, &ns, &kind)?;
    Ok(store.fetch(kind, &id).await?)
}

async fn insert(
    State(host): State<Arc<DataHost>>,
    Path((area, ns, kind, id)): Target,
    body: Bytes,
) -> Result<StatusCode, Failure> {
    let (store, kind) = resolve(&host, &area, &ns, &kind)?;
    store.insert(kind, &id, &body).await?;
    Ok(StatusCode::CREATED)
}

async fn replace(
    State(host): State<Arc<DataHost>>,
    Path((area, ns, kind, id)): Target,
    body: Bytes,
) -> Result<StatusCode, Failure> {
    let (store, kind) = resolve(&host, &area, &ns, &kind)?;
    store.replace(kind, &id, &body).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn remove(
    State(host): State<Arc<DataHost>>,
    Path((area, ns, kind, id)): Target,
) -> Result<StatusCode, Failure> {
    let (store, kind) = resolve(&host, &area, &ns, &kind)?;
    store.remove(kind, &id).await?;
    Ok(StatusCode::NO_CONTENT)
}
