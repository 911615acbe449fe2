use std::path::PathBuf;
use std::sync::Arc;

use axum::Router;
use vaultline_core::{derive_key, generate_synthetic, PatientRecord};
use vaultline_healthapp::{
    AppClient, AppConfig, AppError, AppSection, HealthApp, KdfSection, RegistrySection, VaultSection,
    INSTANCE_ID_FILE,
};
use vaultline_net::{ServiceHost, TlsSettings};
use vaultline_registry::Registry;
use vaultline_storage::{datahost_router, BackendKind, DataHost, StorageSettings};
use vaultline_vault::{router as vault_router, CachingVerifier, VaultStore};

const ADMIN: &str = "operator-secret";
const ITERATIONS: u32 = 2_000;

struct Env {
    dir: tempfile::TempDir,
    registry: ServiceHost,
    data: ServiceHost,
    http: reqwest::Client,
}

impl Env {
    async fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let reg = Arc::new(Registry::open(dir.path().join("registry.jsonl"), ADMIN).unwrap());
        let registry = ServiceHost::start(
            "registry",
            vaultline_registry::router(reg.clone()),
            "127.0.0.1:0".parse().unwrap(),
            None,
        )
        .await
        .unwrap();
        let vault = Arc::new(VaultStore::open(dir.path().join("vault")).unwrap());
        let rows = Arc::new(DataHost::new(dir.path().join("datahost")));
        let app = Router::new()
            .nest("/rows", datahost_router(rows))
            .merge(vault_router(vault, Arc::new(CachingVerifier::new(reg))));
        let data = ServiceHost::start("data", app, "127.0.0.1:0".parse().unwrap(), None)
            .await
            .unwrap();
        Env {
            dir,
            registry,
            data,
            http: TlsSettings::default().client().unwrap(),
        }
    }

    fn app_dir(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, kind: BackendKind, dir: &str, instance_id: Option<&str>) -> AppConfig {
        AppConfig {
            registry: RegistrySection {
                url: self.registry.base_url(),
                admin_token: ADMIN.into(),
                instance_id: instance_id.map(str::to_owned),
                name: None,
            },
            vault: VaultSection {
                url: Some(self.data.base_url()),
            },
            storage: StorageSettings {
                kind,
                data_dir: self.app_dir(dir),
                remote_url: Some(format!("{}/rows", self.data.base_url())),
                namespace: None,
            },
            kdf: KdfSection {
                iterations: ITERATIONS,
            },
            tls: TlsSettings::default(),
            app: AppSection {
                listen: "127.0.0.1:0".parse().unwrap(),
            },
        }
    }

    fn client(&self, app: &HealthApp) -> AppClient {
        AppClient::new(app.base_url(), self.http.clone())
    }
}

#[tokio::test]
async fn crud_over_http() {
    let env = Env::new().await;
    let app = HealthApp::start(env.config(BackendKind::ProposedVault, "a", None))
        .await
        .unwrap();
    let api = env.client(&app);
    let recs = generate_synthetic(3, 1);

    assert!(api.list().await.unwrap().is_empty());
    let created = api.create(&recs[0]).await.unwrap();
    assert_eq!(created.patient_id, recs[0].patient_id);
    assert_eq!(api.read(&recs[0].patient_id).await.unwrap(), recs[0]);
    assert_eq!(api.create(&recs[0]).await.unwrap_err().status(), Some(409));
    assert_eq!(api.read("PT999").await.unwrap_err().status(), Some(404));
    assert_eq!(api.read("PT999").await.unwrap_err().kind(), "not_found");

    let mut changed = recs[0].clone();
    changed.expiration_date = "12/2031".into();
    api.update(&changed.patient_id, &changed).await.unwrap();
    assert_eq!(api.read(&changed.patient_id).await.unwrap(), changed);
    assert_eq!(
        api.update(&recs[1].patient_id, &recs[1])
            .await
            .unwrap_err()
            .status(),
        Some(404)
    );
    assert_eq!(
        api.update("other", &recs[0]).await.unwrap_err().status(),
        Some(400)
    );

    let mut bad = recs[1].clone();
    bad.social_security_number = "123?45".into();
    assert_eq!(api.create(&bad).await.unwrap_err().kind(), "invalid_record");

    api.create(&recs[1]).await.unwrap();
    api.create(&recs[2]).await.unwrap();
    api.delete(&recs[1].patient_id).await.unwrap();
    assert_eq!(
        api.delete(&recs[1].patient_id).await.unwrap_err().status(),
        Some(404)
    );
    assert_eq!(
        api.list().await.unwrap(),
        vec![recs[0].patient_id.clone(), recs[2].patient_id.clone()]
    );

    let raw = env
        .http
        .post(format!("{}/patients", app.base_url()))
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .await
        .unwrap();
    assert_eq!(raw.status().as_u16(), 400);
}

#[tokio::test]
async fn restart_with_instance_id_derives_the_same_key() {
    let env = Env::new().await;
    let first = HealthApp::start(env.config(BackendKind::ProposedVault, "a", None))
        .await
        .unwrap();
    let creds = first.creds();
    let key = first.state().instance().key.clone();
    assert_eq!(key, derive_key(&creds, ITERATIONS).unwrap());
    assert_eq!(
        std::fs::read_to_string(env.app_dir("a").join(INSTANCE_ID_FILE)).unwrap(),
        creds.instance_id
    );
    drop(first);

    // Named explicitly, on a different host directory.
    let second = HealthApp::start(env.config(BackendKind::ProposedVault, "b", Some(&creds.instance_id)))
        .await
        .unwrap();
    assert_eq!(second.creds(), creds);
    assert!(second.state().instance().key == key);

    // Remembered from the data directory.
    let third = HealthApp::start(env.config(BackendKind::ProposedVault, "a", None))
        .await
        .unwrap();
    assert_eq!(third.creds(), creds);

    // A fresh directory without an id registers a new instance.
    let other = HealthApp::start(env.config(BackendKind::ProposedVault, "c", None))
        .await
        .unwrap();
    assert_ne!(other.creds().instance_id, creds.instance_id);
}

#[tokio::test]
async fn registry_down_on_first_boot_starts_nothing() {
    let mut env = Env::new().await;
    env.registry.sever().await.unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let mut cfg = env.config(BackendKind::ProposedVault, "a", None);
    cfg.app.listen = format!("127.0.0.1:{port}").parse().unwrap();

    let err = HealthApp::start(cfg).await.err().expect("start must fail");
    assert!(matches!(err, AppError::RegistryUnreachable(_)), "{err:?}");
    assert!(std::net::TcpStream::connect(("127.0.0.1", port)).is_err());

    let mut cfg = env.config(BackendKind::ProposedVault, "a", None);
    env.registry.restore().await.unwrap();
    cfg.registry.admin_token = "wrong".into();
    assert!(matches!(HealthApp::start(cfg).await, Err(AppError::Unauthorized)));
}

#[tokio::test]
async fn severed_data_host_gives_service_unavailable() {
    let mut env = Env::new().await;
    let recs = generate_synthetic(2, 4);
    for kind in [BackendKind::RemoteDatabase, BackendKind::ProposedVault] {
        let app = HealthApp::start(env.config(kind, kind.as_str(), None))
            .await
            .unwrap();
        let api = env.client(&app);
        api.create(&recs[0]).await.unwrap();
        env.data.sever().await.unwrap();
        let err = api.create(&recs[1]).await.unwrap_err();
        assert_eq!(err.status(), Some(503), "{kind}: {err}");
        assert_eq!(err.kind(), "backend_unavailable");
        assert_eq!(
            api.read(&recs[0].patient_id).await.unwrap_err().status(),
            Some(503)
        );
        env.data.restore().await.unwrap();
        // Nothing half-written is visible afterwards.
        assert_eq!(
            api.list().await.unwrap(),
            vec![recs[0].patient_id.clone()],
            "{kind}"
        );
        assert_eq!(
            api.read(&recs[1].patient_id).await.unwrap_err().status(),
            Some(404)
        );
        api.create(&recs[1]).await.unwrap();
    }
}

async fn snapshot(api: &AppClient, ids: &[String]) -> Vec<PatientRecord> {
    let mut out = Vec::new();
    for id in ids {
        out.push(api.read(id).await.unwrap());
    }
    out
}

#[tokio::test]
async fn recovery_rebuilds_a_destroyed_instance() {
    let env = Env::new().await;
    let recs = generate_synthetic(40, 9);
    let app = HealthApp::start(env.config(BackendKind::ProposedVault, "old", None))
        .await
        .unwrap();
    let api = env.client(&app);
    for r in &recs {
        api.create(r).await.unwrap();
    }
    let mut changed = recs[7].clone();
    changed.address = "1 Relocated Rd, Salem, MA 01970".into();
    api.update(&changed.patient_id, &changed).await.unwrap();
    api.delete(&recs[8].patient_id).await.unwrap();
    let ids = api.list().await.unwrap();
    let before = snapshot(&api, &ids).await;
    let instance_id = app.creds().instance_id;

    drop(app);
    std::fs::remove_dir_all(env.app_dir("old")).unwrap();

    let fresh = HealthApp::start(env.config(BackendKind::ProposedVault, "new", Some(&instance_id)))
        .await
        .unwrap();
    let api = env.client(&fresh);
    assert!(api.list().await.unwrap().is_empty());

    assert_eq!(
        api.recover(&instance_id, "wrong").await.unwrap_err().status(),
        Some(401)
    );
    assert_eq!(
        api.recover("nobody", ADMIN).await.unwrap_err().status(),
        Some(404)
    );

    let report = api.recover(&instance_id, ADMIN).await.unwrap();
    assert_eq!(report.patients_restored, 39);
    assert_eq!(report.records_restored, 78);
    assert!(report.orphans.is_empty());
    assert!(report.elapsed_ms > 0.0);
    assert_eq!(api.list().await.unwrap(), ids);
    assert_eq!(snapshot(&api, &ids).await, before);

    // Idempotent.
    let again = api.recover(&instance_id, ADMIN).await.unwrap();
    assert_eq!(again.patients_restored, 39);
    assert_eq!(snapshot(&api, &ids).await, before);

    // Business as usual afterwards.
    api.delete(&ids[0]).await.unwrap();
    api.create(&recs[8]).await.unwrap();
    assert_eq!(api.read(&recs[8].patient_id).await.unwrap(), recs[8]);
}

#[tokio::test]
async fn recovery_into_another_identity_sees_only_its_data() {
    let env = Env::new().await;
    let recs = generate_synthetic(5, 2);
    let a = HealthApp::start(env.config(BackendKind::ProposedVault, "a", None))
        .await
        .unwrap();
    for r in &recs {
        env.client(&a).create(r).await.unwrap();
    }
    let b = HealthApp::start(env.config(BackendKind::ProposedVault, "b", None))
        .await
        .unwrap();
    let b_id = b.creds().instance_id;
    let a_id = a.creds().instance_id;

    let api = env.client(&b);
    let report = api.recover(&b_id, ADMIN).await.unwrap();
    assert_eq!((report.refs_listed, report.patients_restored), (0, 0));

    // Taking over instance a from b's host restores a's data under a's key.
    let report = api.recover(&a_id, ADMIN).await.unwrap();
    assert_eq!(report.instance_id, a_id);
    assert_eq!(report.patients_restored, 5);
    assert_eq!(b.creds().instance_id, a_id);
    assert_eq!(api.read(&recs[2].patient_id).await.unwrap(), recs[2]);
}

#[tokio::test]
async fn recovery_is_refused_off_the_vault() {
    let env = Env::new().await;
    let app = HealthApp::start(env.config(BackendKind::LocalFileEncrypted, "a", None))
        .await
        .unwrap();
    let err = env
        .client(&app)
        .recover(&app.creds().instance_id, ADMIN)
        .await
        .unwrap_err();
    assert_eq!(err.status(), Some(501));
}
