use std::sync::Arc;

use async_trait::async_trait;
use reqwest::{Method, StatusCode};
use serde::{Deserialize, Serialize};
use vaultline_core::RecordKind;
use vaultline_net::ErrorBody;

use crate::metrics::Meter;
use crate::rows::{RowError, RowStore};

/// Which of the data host's two storage engines a client talks to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Area {
    /// A shared directory tree, laid out like [`LocalDir`](crate::rows::LocalDir).
    Files,
    /// A SQLite database, laid out like [`SqliteRows`](crate::rows::SqliteRows).
    Db,
}

impl Area {
    pub fn as_str(self) -> &'static str {
        match self {
            Area::Files => "files",
            Area::Db => "db",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdsResponse {
    pub ids: Vec<String>,
}

/// [`RowStore`] backed by the data host's HTTP service. Every request's
/// round trip is charged to the shared meter's network channel.
#[derive(Clone)]
pub struct RemoteRows {
    base_url: String,
    http: reqwest::Client,
    area: Area,
    namespace: String,
    meter: Arc<Meter>,
}

impl RemoteRows {
    pub fn new(
        base_url: impl Into<String>,
        http: reqwest::Client,
        area: Area,
        namespace: impl Into<String>,
        meter: Arc<Meter>,
    ) -> Self {
        RemoteRows {
            base_url: base_url.into().trim_end_matches('/').to_owned(),
            http,
            area,
            namespace: namespace.into(),
            meter,
        }
    }

    pub fn area(&self) -> Area {
        self.area
    }

    fn url(&self, kind: RecordKind, id: Option<&str>) -> String {
        let mut url = format!(
            "{}/{}/{}/{}",
            self.base_url,
            self.area.as_str(),
            self.namespace,
            kind.as_str()
        );
        if let Some(id) = id {
            url.push('/');
            url.push_str(id);
        }
        url
    }

    async fn call(&self, method: Method, url: String, body: Option<&[u8]>) -> Result<Vec<u8>, RowError> {
        let mut req = self.http.request(method, url);
        if let Some(body) = body {
            req = req
                .header(reqwest::header::CONTENT_TYPE, "application/octet-stream")
                .body(body.to_vec());
        }
        self.meter
            .time_network(async {
                let resp = req
                    .send()
                    .await
                    .map_err(|e| RowError::Unavailable(e.to_string()))?;
                let status = resp.status();
                let bytes = resp
                    .bytes()
                    .await
                    .map_err(|e| RowError::Unavailable(e.to_string()))?;
                if status.is_success() {
                    return Ok(bytes.to_vec());
                }
                let message = serde_json::from_slice::<ErrorBody>(&bytes)
                    .map(|b| b.message)
                    .unwrap_or_else(|_| status.to_string());
                Err(match status {
                    StatusCode::CONFLICT => RowError::Exists,
                    StatusCode::NOT_FOUND => RowError::Missing,
                    _ => RowError::Io(message),
                })
            })
            .await
    }
}

#[async_trait]
impl RowStore for RemoteRows {
    async fn insert(&self, kind: RecordKind, id: &str, row: &[u8]) -> Result<(), RowError> {
        self.call(Method::POST, self.url(kind, Some(id)), Some(row))
            .await
            .map(drop)
    }

    async fn replace(&self, kind: RecordKind, id: &str, row: &[u8]) -> Result<(), RowError> {
        self.call(Method::PUT, self.url(kind, Some(id)), Some(row))
            .await
            .map(drop)
    }

    async fn fetch(&self, kind: RecordKind, id: &str) -> Result<Vec<u8>, RowError> {
        self.call(Method::GET, self.url(kind, Some(id)), None).await
    }

    async fn remove(&self, kind: RecordKind, id: &str) -> Result<(), RowError> {
        self.call(Method::DELETE, self.url(kind, Some(id)), None)
            .await
            .map(drop)
    }

    async fn ids(&self, kind: RecordKind) -> Result<Vec<String>, RowError> {
        let body = self.call(Method::GET, self.url(kind, None), None).await?;
        let resp: IdsResponse = serde_json::from_slice(&body).map_err(|e| RowError::Io(e.to_string()))?;
        Ok(resp.ids)
    }
}
