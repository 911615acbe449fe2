use std::sync::Arc;

use axum::Router;
use vaultline_core::{derive_key, generate_synthetic, InstanceCredentials, PatientRecord};
use vaultline_net::{ServiceHost, TlsSettings};
use vaultline_registry::Registry;
use vaultline_storage::{
    datahost_router, open_backend, AttackSurface, BackendContext, BackendKind, DataHost, RecordStore,
    StorageError, StorageSettings, LOCAL_DB_FILE, LOCAL_ROWS_DIR, VAULT_INDEX_DIR,
};
use vaultline_vault::{router as vault_router, CachingVerifier, VaultStore};

const ADMIN: &str = "ops";

struct Env {
    dir: tempfile::TempDir,
    creds: InstanceCredentials,
    host: ServiceHost,
    ctx: BackendContext,
}

impl Env {
    async fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let registry = Arc::new(Registry::open(dir.path().join("registry.jsonl"), ADMIN).unwrap());
        let creds = registry.register(Some("clinic-a"), ADMIN).unwrap();
        let vault = Arc::new(VaultStore::open(dir.path().join("vault")).unwrap());
        let data = Arc::new(DataHost::new(dir.path().join("datahost")));
        let app = Router::new()
            .nest("/rows", datahost_router(data))
            .merge(vault_router(vault, Arc::new(CachingVerifier::new(registry))));
        let host = ServiceHost::start("data", app, "127.0.0.1:0".parse().unwrap(), None)
            .await
            .unwrap();
        let ctx = BackendContext {
            key: derive_key(&creds, 1_000).unwrap(),
            creds: creds.clone(),
            http: TlsSettings::default().client().unwrap(),
            vault_url: Some(host.base_url()),
        };
        Env {
            dir,
            creds,
            host,
            ctx,
        }
    }

    fn settings(&self, kind: BackendKind) -> StorageSettings {
        StorageSettings {
            kind,
            data_dir: self.dir.path().join("app").join(kind.as_str()),
            remote_url: Some(format!("{}/rows", self.host.base_url())),
            namespace: None,
        }
    }

    fn open(&self, kind: BackendKind) -> Arc<dyn RecordStore> {
        open_backend(&self.settings(kind), &self.ctx).unwrap()
    }
}

fn edited(r: &PatientRecord) -> PatientRecord {
    let mut r = r.clone();
    r.address = format!("{} Apt 2", r.address);
    r.auth_code = "ZZZZZZ".into();
    r
}

#[tokio::test]
async fn every_backend_behaves_the_same() {
    let env = Env::new().await;
    let records = generate_synthetic(20, 11);
    for kind in BackendKind::ALL {
        let store = env.open(kind);
        assert_eq!(store.kind(), kind);
        for r in &records {
            let h = store.create(r).await.unwrap();
            assert_ne!(h.pii, h.financial);
        }
        assert!(matches!(
            store.create(&records[0]).await,
            Err(StorageError::DuplicatePatient(_))
        ));
        for r in &records {
            assert_eq!(&store.read(&r.patient_id).await.unwrap(), r, "{kind}");
        }
        let changed = edited(&records[3]);
        store.update(&changed.patient_id, &changed).await.unwrap();
        assert_eq!(store.read(&changed.patient_id).await.unwrap(), changed);

        store.delete(&records[5].patient_id).await.unwrap();
        assert!(matches!(
            store.read(&records[5].patient_id).await,
            Err(StorageError::NotFound(_))
        ));
        assert!(matches!(
            store.delete(&records[5].patient_id).await,
            Err(StorageError::NotFound(_))
        ));
        assert!(matches!(
            store.update(&records[5].patient_id, &records[5]).await,
            Err(StorageError::NotFound(_))
        ));

        let mut expected: Vec<String> = records.iter().map(|r| r.patient_id.clone()).collect();
        expected.remove(5);
        expected.sort();
        assert_eq!(store.list().await.unwrap(), expected, "{kind}");

        let mut bad = records[1].clone();
        bad.address = "a?b".into();
        assert!(matches!(
            store.update(&bad.patient_id, &bad).await,
            Err(StorageError::InvalidRecord(_))
        ));
        assert!(matches!(
            store.update("someone-else", &records[1]).await,
            Err(StorageError::InvalidRecord(_))
        ));
        assert!(matches!(
            store.read("../x").await,
            Err(StorageError::InvalidRecord(_))
        ));
    }
}

#[tokio::test]
async fn metrics_follow_locality_and_encryption() {
    let env = Env::new().await;
    let records = generate_synthetic(5, 3);
    for kind in BackendKind::ALL {
        let store = env.open(kind);
        for r in &records {
            store.create(r).await.unwrap();
            store.read(&r.patient_id).await.unwrap();
        }
        let m = store.metrics();
        assert_eq!(m.op_counts.create, 5);
        assert_eq!(m.op_counts.read, 5);
        assert_eq!(m.network_time_total.is_zero(), !kind.is_remote(), "{kind}");
        assert_eq!(m.round_trips > 0, kind.is_remote(), "{kind}");
        assert_eq!(m.encrypt_time_total.is_zero(), !kind.is_encrypted(), "{kind}");
        assert_eq!(m.decrypt_time_total.is_zero(), !kind.is_encrypted(), "{kind}");
        store.reset_metrics();
        assert_eq!(store.metrics(), Default::default());
    }
}

#[tokio::test]
async fn local_layouts_and_surfaces() {
    let env = Env::new().await;
    let r = &generate_synthetic(1, 5)[0];

    let plain = env.open(BackendKind::LocalFilePlain);
    plain.create(r).await.unwrap();
    let root = env
        .settings(BackendKind::LocalFilePlain)
        .data_dir
        .join(LOCAL_ROWS_DIR);
    let pii = std::fs::read_to_string(root.join("pii").join(&r.patient_id)).unwrap();
    assert_eq!(
        pii,
        format!("{}?{}?{}", r.date_of_birth, r.social_security_number, r.address)
    );
    let fin = std::fs::read_to_string(root.join("financial").join(&r.patient_id)).unwrap();
    assert_eq!(
        fin,
        format!("{}?{}?{}", r.credit_card_number, r.expiration_date, r.auth_code)
    );

    let enc = env.open(BackendKind::LocalFileEncrypted);
    enc.create(r).await.unwrap();
    let root = env
        .settings(BackendKind::LocalFileEncrypted)
        .data_dir
        .join(LOCAL_ROWS_DIR);
    let sealed = std::fs::read(root.join("pii").join(&r.patient_id)).unwrap();
    assert_eq!(sealed[0], 1);
    assert!(!String::from_utf8_lossy(&sealed).contains(&r.social_security_number));

    let db = env.open(BackendKind::LocalDatabase);
    db.create(r).await.unwrap();
    assert!(env
        .settings(BackendKind::LocalDatabase)
        .data_dir
        .join(LOCAL_DB_FILE)
        .is_file());

    for kind in BackendKind::ALL {
        let surface = env.open(kind).attack_surface();
        assert!(!surface.is_empty());
        for s in surface {
            match s {
                AttackSurface::LocalPaths(paths) => {
                    assert!(!kind.is_remote() || kind == BackendKind::ProposedVault, "{kind}");
                    for p in paths {
                        assert!(p.starts_with(&env.settings(kind).data_dir));
                    }
                }
                AttackSurface::RemoteRows(_) => {
                    assert!(kind.is_remote() && kind != BackendKind::ProposedVault)
                }
            }
        }
    }
}

#[tokio::test]
async fn tampered_encrypted_rows_are_rejected() {
    let env = Env::new().await;
    let recs = generate_synthetic(2, 8);
    let store = env.open(BackendKind::LocalFileEncrypted);
    for r in &recs {
        store.create(r).await.unwrap();
    }
    let root = env
        .settings(BackendKind::LocalFileEncrypted)
        .data_dir
        .join(LOCAL_ROWS_DIR)
        .join("pii");
    let a = root.join(&recs[0].patient_id);
    let b = root.join(&recs[1].patient_id);

    // Swapping two patients' sealed rows is caught by the bound context.
    let (ba, bb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    std::fs::write(&a, &bb).unwrap();
    assert!(matches!(
        store.read(&recs[0].patient_id).await,
        Err(StorageError::AuthenticationFailure(_))
    ));

    let mut flipped = ba.clone();
    flipped[20] ^= 1;
    std::fs::write(&a, &flipped).unwrap();
    assert!(matches!(
        store.read(&recs[0].patient_id).await,
        Err(StorageError::AuthenticationFailure(_))
    ));
}

#[tokio::test]
async fn severed_data_host_is_unavailable_and_comes_back() {
    let mut env = Env::new().await;
    let r = &generate_synthetic(1, 9)[0];
    let remote: Vec<_> = BackendKind::ALL.into_iter().filter(|k| k.is_remote()).collect();
    let stores: Vec<_> = remote.iter().map(|&k| env.open(k)).collect();
    for s in &stores {
        s.create(r).await.unwrap();
    }
    env.host.sever().await.unwrap();
    for s in &stores {
        let err = s.read(&r.patient_id).await.unwrap_err();
        assert!(
            matches!(err, StorageError::BackendUnavailable(_)),
            "{}: {err:?}",
            s.kind()
        );
    }
    env.host.restore().await.unwrap();
    for s in &stores {
        assert_eq!(&s.read(&r.patient_id).await.unwrap(), r);
    }
}

#[tokio::test]
async fn vault_index_rebuilds_from_the_vault() {
    let env = Env::new().await;
    let records = generate_synthetic(30, 21);
    let store = env.open(BackendKind::ProposedVault);
    for r in &records {
        store.create(r).await.unwrap();
    }
    let changed = edited(&records[0]);
    store.update(&changed.patient_id, &changed).await.unwrap();
    store.delete(&records[1].patient_id).await.unwrap();
    drop(store);

    // A fresh host with no index at all.
    let mut settings = env.settings(BackendKind::ProposedVault);
    settings.data_dir = env.dir.path().join("rebuilt");
    let fresh = open_backend(&settings, &env.ctx).unwrap();
    assert!(fresh.list().await.unwrap().is_empty());
    let outcome = fresh.as_vault().unwrap().recover().await.unwrap();
    assert_eq!(outcome.patients_restored, 29);
    assert_eq!(outcome.records_restored, 58);
    assert_eq!(outcome.refs_listed, 58);
    assert!(outcome.orphans.is_empty() && outcome.superseded.is_empty());

    assert_eq!(fresh.read(&changed.patient_id).await.unwrap(), changed);
    for r in &records[2..] {
        assert_eq!(&fresh.read(&r.patient_id).await.unwrap(), r);
    }
    // The rebuilt index persists.
    drop(fresh);
    let again = open_backend(&settings, &env.ctx).unwrap();
    assert_eq!(again.list().await.unwrap().len(), 29);
    assert!(settings
        .data_dir
        .join(VAULT_INDEX_DIR)
        .join("index.jsonl")
        .is_file());
}

#[tokio::test]
async fn recovery_prefers_later_blobs_and_reports_orphans() {
    use vaultline_core::{seal, RecordKind};

    let env = Env::new().await;
    let recs = generate_synthetic(2, 4);
    let store = env.open(BackendKind::ProposedVault);
    store.create(&recs[0]).await.unwrap();

    let vault = store.as_vault().unwrap().client().clone();
    // A newer copy of the pii row left behind without an index update.
    let newer = edited(&recs[0]);
    let row = format!(
        "{}?{}?{}",
        newer.date_of_birth, newer.social_security_number, newer.address
    );
    vault
        .create(&seal(&env.ctx.key, RecordKind::Pii, &newer.patient_id, &row).unwrap())
        .await
        .unwrap();
    // A financial row with no pii partner.
    let row = format!(
        "{}?{}?{}",
        recs[1].credit_card_number, recs[1].expiration_date, recs[1].auth_code
    );
    let orphan = vault
        .create(&seal(&env.ctx.key, RecordKind::Financial, &recs[1].patient_id, &row).unwrap())
        .await
        .unwrap();

    let outcome = store.as_vault().unwrap().recover().await.unwrap();
    assert_eq!(outcome.refs_listed, 4);
    assert_eq!(outcome.patients_restored, 1);
    assert_eq!(outcome.orphans, vec![orphan]);
    assert_eq!(outcome.superseded.len(), 1);
    let got = store.read(&recs[0].patient_id).await.unwrap();
    assert_eq!(got.address, newer.address);
    assert_eq!(got.auth_code, recs[0].auth_code);
    assert_eq!(env.creds.instance_id, "clinic-a");
}

#[tokio::test]
async fn recovery_aborts_on_blobs_that_do_not_open() {
    use vaultline_core::{seal, RecordKind};

    let env = Env::new().await;
    let recs = generate_synthetic(3, 6);
    let store = env.open(BackendKind::ProposedVault);
    for r in &recs {
        store.create(r).await.unwrap();
    }
    let stranger = derive_key(&InstanceCredentials::new("x", "f".repeat(64)).unwrap(), 1).unwrap();
    let alien = store
        .as_vault()
        .unwrap()
        .client()
        .create(&seal(&stranger, RecordKind::Pii, "x", "a?b?c").unwrap())
        .await
        .unwrap();

    let mut settings = env.settings(BackendKind::ProposedVault);
    settings.data_dir = env.dir.path().join("rebuilt");
    let fresh = open_backend(&settings, &env.ctx).unwrap();
    match fresh.as_vault().unwrap().recover().await {
        Err(StorageError::AuthenticationFailure(msg)) => assert!(msg.contains(&alien.to_string()), "{msg}"),
        other => panic!("expected authentication failure, got {other:?}"),
    }
    assert!(fresh.list().await.unwrap().is_empty());

    // The original instance key under a different identity opens nothing.
    let mut wrong = env.ctx.clone();
    wrong.key = derive_key(
        &InstanceCredentials::new("clinic-b", env.creds.license_key.clone()).unwrap(),
        1_000,
    )
    .unwrap();
    settings.data_dir = env.dir.path().join("wrong");
    let fresh = open_backend(&settings, &wrong).unwrap();
    assert!(matches!(
        fresh.as_vault().unwrap().recover().await,
        Err(StorageError::AuthenticationFailure(_))
    ));
}
