use std::path::PathBuf;
use std::time::Duration;

use axum_server::tls_rustls::RustlsConfig;
use serde::{Deserialize, Serialize};

use crate::NetError;

/// `[tls]` section of a service config. With `enabled = false` everything
/// runs over plain HTTP, which is what the test suites use.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TlsSettings {
    pub enabled: bool,
    /// Server certificate chain (PEM).
    pub cert_file: Option<PathBuf>,
    /// Server private key (PEM).
    pub key_file: Option<PathBuf>,
    /// Extra root certificate trusted by clients (PEM), e.g. a self-signed one.
    pub ca_file: Option<PathBuf>,
}

impl TlsSettings {
    pub fn scheme(&self) -> &'static str {
        if self.enabled {
            "https"
        } else {
            "http"
        }
    }

    pub async fn server_config(&self) -> Result<Option<RustlsConfig>, NetError> {
        if !self.enabled {
            return Ok(None);
        }
        let (Some(cert), Some(key)) = (&self.cert_file, &self.key_file) else {
            return Err(NetError::Tls(
                "tls.enabled requires cert_file and key_file".into(),
            ));
        };
        let config = RustlsConfig::from_pem_file(cert, key).await?;
        Ok(Some(config))
    }

    pub fn client(&self) -> Result<reqwest::Client, NetError> {
        let mut builder = reqwest::Client::builder()
            .no_proxy()
            .connect_timeout(Duration::from_secs(2))
            .timeout(Duration::from_secs(30))
            .pool_max_idle_per_host(64);
        if let Some(ca) = &self.ca_file {
            let pem = std::fs::read(ca)?;
            let cert = reqwest::Certificate::from_pem(&pem)?;
            builder = builder.tls_certs_merge([cert]);
        }
        Ok(builder.build()?)
    }
}

/// Generates a self-signed certificate and key (both PEM) valid for `hosts`.
pub fn self_signed_pem(hosts: &[&str]) -> Result<(String, String), NetError> {
    let names: Vec<String> = hosts.iter().map(|h| h.to_string()).collect();
    let certified = rcgen::generate_simple_self_signed(names).map_err(|e| NetError::Tls(e.to_string()))?;
    Ok((certified.cert.pem(), certified.signing_key.serialize_pem()))
}
