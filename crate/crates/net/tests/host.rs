use std::net::SocketAddr;

use axum::routing::get;
use axum::Router;
use vaultline_net::{is_unreachable, self_signed_pem, ServiceHost, TlsSettings};

fn app() -> Router {
    Router::new().route("/ping", get(|| async { "pong" }))
}

fn loopback() -> SocketAddr {
    "127.0.0.1:0".parse().unwrap()
}

#[tokio::test]
async fn sever_and_restore_on_same_address() {
    let mut host = ServiceHost::start("svc", app(), loopback(), None).await.unwrap();
    let client = TlsSettings::default().client().unwrap();
    let url = format!("{}/ping", host.base_url());

    assert_eq!(
        client.get(&url).send().await.unwrap().text().await.unwrap(),
        "pong"
    );
    let addr = host.local_addr();

    host.sever().await.unwrap();
    assert!(!host.is_running());
    let err = client.get(&url).send().await.unwrap_err();
    assert!(is_unreachable(&err), "{err:?}");
    assert!(host.sever().await.is_err(), "severing twice reports not running");

    host.restore().await.unwrap();
    assert_eq!(host.local_addr(), addr);
    assert_eq!(
        client.get(&url).send().await.unwrap().text().await.unwrap(),
        "pong"
    );
}

#[tokio::test]
async fn serves_https_with_self_signed_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let (cert, key) = self_signed_pem(&["localhost", "127.0.0.1"]).unwrap();
    let cert_file = dir.path().join("cert.pem");
    let key_file = dir.path().join("key.pem");
    std::fs::write(&cert_file, cert).unwrap();
    std::fs::write(&key_file, key).unwrap();
    let tls = TlsSettings {
        enabled: true,
        cert_file: Some(cert_file.clone()),
        key_file: Some(key_file),
        ca_file: Some(cert_file),
    };

    let host = ServiceHost::start("tls", app(), loopback(), tls.server_config().await.unwrap())
        .await
        .unwrap();
    assert!(host.base_url().starts_with("https://"));
    let url = format!("{}/ping", host.base_url());

    let body = tls
        .client()
        .unwrap()
        .get(&url)
        .send()
        .await
        .unwrap()
        .text()
        .await
        .unwrap();
    assert_eq!(body, "pong");

    // A client that does not trust the certificate cannot connect.
    assert!(TlsSettings::default()
        .client()
        .unwrap()
        .get(&url)
        .send()
        .await
        .is_err());
}

#[tokio::test]
async fn enabled_tls_without_files_is_an_error() {
    let tls = TlsSettings {
        enabled: true,
        ..Default::default()
    };
    assert!(tls.server_config().await.is_err());
}
