use std::sync::Arc;

use vaultline_core::{derive_key, owner_token};
use vaultline_net::{ServiceHost, TlsSettings};
use vaultline_registry::{router, Registry, RegistryClient, RegistryError};

const ADMIN: &str = "ops-token";

async fn serve(path: &std::path::Path) -> (ServiceHost, RegistryClient) {
    let registry = Arc::new(Registry::open(path, ADMIN).unwrap());
    let host = ServiceHost::start("registry", router(registry), "127.0.0.1:0".parse().unwrap(), None)
        .await
        .unwrap();
    let client = RegistryClient::with_tls(host.base_url(), &TlsSettings::default()).unwrap();
    (host, client)
}

#[tokio::test]
async fn register_and_reregister_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let (_host, client) = serve(&dir.path().join("reg.jsonl")).await;

    let a = client.register(None, ADMIN).await.unwrap();
    let b = client.register(Some("clinic-b"), ADMIN).await.unwrap();
    assert_ne!(a.instance_id, b.instance_id);
    assert_ne!(a.license_key, b.license_key);
    assert_eq!(b.instance_id, "clinic-b");

    assert_eq!(client.reregister(&a.instance_id, ADMIN).await.unwrap(), a);
    assert_eq!(
        derive_key(&client.reregister("clinic-b", ADMIN).await.unwrap(), 10).unwrap(),
        derive_key(&b, 10).unwrap()
    );

    assert_eq!(
        client.register(None, "wrong").await,
        Err(RegistryError::Unauthorized)
    );
    assert_eq!(
        client.register(Some("clinic-b"), ADMIN).await,
        Err(RegistryError::NameTaken("clinic-b".into()))
    );
    assert_eq!(
        client.reregister("nobody", ADMIN).await,
        Err(RegistryError::UnknownInstance("nobody".into()))
    );
    assert!(client.verify(&a.instance_id, &owner_token(&a)).await.unwrap());
    assert!(!client.verify(&a.instance_id, &owner_token(&b)).await.unwrap());
}

#[tokio::test]
async fn credentials_survive_service_restart() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reg.jsonl");
    let original = {
        let (_host, client) = serve(&path).await;
        client.register(Some("clinic-c"), ADMIN).await.unwrap()
    };
    let (_host, client) = serve(&path).await;
    assert_eq!(client.reregister("clinic-c", ADMIN).await.unwrap(), original);
}

#[tokio::test]
async fn unreachable_registry_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (mut host, client) = serve(&dir.path().join("reg.jsonl")).await;
    host.sever().await.unwrap();
    assert!(matches!(
        client.register(None, ADMIN).await,
        Err(RegistryError::Unreachable(_))
    ));
}

#[tokio::test]
async fn concurrent_same_name_registrations_admit_one() {
    let dir = tempfile::tempdir().unwrap();
    let (_host, client) = serve(&dir.path().join("reg.jsonl")).await;
    let attempts = (0..16).map(|_| {
        let c = client.clone();
        tokio::spawn(async move { c.register(Some("contested"), ADMIN).await })
    });
    let mut ok = 0;
    for a in attempts {
        match a.await.unwrap() {
            Ok(_) => ok += 1,
            Err(RegistryError::NameTaken(_)) => {}
            Err(e) => panic!("{e}"),
        }
    }
    assert_eq!(ok, 1);
}
