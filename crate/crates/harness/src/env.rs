//! A complete deployment inside one process: the registry host, the data
//! host (vault plus the file share and database used by the remote
//! approaches) and any number of application instances.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use axum::Router;
use vaultline_core::kdf::DEFAULT_ITERATIONS;
use vaultline_healthapp::{
    AppConfig, AppError, AppSection, HealthApp, KdfSection, RegistrySection, VaultSection,
};
use vaultline_net::{self_signed_pem, ServiceHost, TlsSettings};
use vaultline_registry::Registry;
use vaultline_storage::{datahost_router, BackendKind, DataHost, StorageSettings};
use vaultline_vault::{router as vault_router, CachingVerifier, VaultStore};

use crate::attack::AttackTarget;

/// Path under the data host where the remote file share and database live.
pub const ROWS_PREFIX: &str = "/rows";

#[derive(Debug, Clone)]
pub struct EnvOptions {
    /// Keep all state here instead of a temporary directory.
    pub root: Option<PathBuf>,
    pub tls: bool,
    pub kdf_iterations: u32,
    pub admin_token: String,
}

impl Default for EnvOptions {
    fn default() -> Self {
        EnvOptions {
            root: None,
            tls: false,
            kdf_iterations: DEFAULT_ITERATIONS,
            admin_token: "harness-admin".into(),
        }
    }
}

pub struct Environment {
    root: PathBuf,
    _tmp: Option<tempfile::TempDir>,
    opts: EnvOptions,
    tls: TlsSettings,
    registry_host: ServiceHost,
    data_host: ServiceHost,
    http: reqwest::Client,
}

fn loopback() -> SocketAddr {
    "127.0.0.1:0".parse().expect("static address")
}

impl Environment {
    pub async fn start(opts: EnvOptions) -> anyhow::Result<Self> {
        let (root, tmp) = match &opts.root {
            Some(root) => {
                std::fs::create_dir_all(root)?;
                (root.clone(), None)
            }
            None => {
                let tmp = tempfile::tempdir()?;
                (tmp.path().to_owned(), Some(tmp))
            }
        };

        let tls = if opts.tls {
            let dir = root.join("tls");
            std::fs::create_dir_all(&dir)?;
            let (cert, key) = self_signed_pem(&["localhost", "127.0.0.1"])?;
            let (cert_file, key_file) = (dir.join("cert.pem"), dir.join("key.pem"));
            std::fs::write(&cert_file, cert)?;
            std::fs::write(&key_file, key)?;
            TlsSettings {
                enabled: true,
                cert_file: Some(cert_file.clone()),
                key_file: Some(key_file),
                ca_file: Some(cert_file),
            }
        } else {
            TlsSettings::default()
        };
        let server_tls = tls.server_config().await?;

        let registry = Arc::new(
            Registry::open(
                root.join("registry-host").join("registry.jsonl"),
                &opts.admin_token,
            )
            .context("opening registry")?,
        );
        let registry_host = ServiceHost::start(
            "registry",
            vaultline_registry::router(registry.clone()),
            loopback(),
            server_tls.clone(),
        )
        .await?;

        let vault =
            Arc::new(VaultStore::open(root.join("data-host").join("vault")).context("opening vault")?);
        let rows = Arc::new(DataHost::new(root.join("data-host").join("rows")));
        let data = Router::new()
            .nest(ROWS_PREFIX, datahost_router(rows))
            .merge(vault_router(vault, Arc::new(CachingVerifier::new(registry))));
        let data_host = ServiceHost::start("data", data, loopback(), server_tls).await?;

        Ok(Environment {
            http: tls.client()?,
            root,
            _tmp: tmp,
            opts,
            tls,
            registry_host,
            data_host,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn admin_token(&self) -> &str {
        &self.opts.admin_token
    }

    pub fn kdf_iterations(&self) -> u32 {
        self.opts.kdf_iterations
    }

    pub fn http(&self) -> &reqwest::Client {
        &self.http
    }

    pub fn registry_url(&self) -> String {
        self.registry_host.base_url()
    }

    pub fn data_url(&self) -> String {
        self.data_host.base_url()
    }

    /// Persistence of the vault service.
    pub fn vault_dir(&self) -> PathBuf {
        self.root.join("data-host").join("vault")
    }

    /// Where application instances keep their local state.
    pub fn app_root(&self) -> PathBuf {
        self.root.join("app-hosts")
    }

    pub fn app_config(&self, kind: BackendKind, host_name: &str, instance_id: Option<&str>) -> AppConfig {
        AppConfig {
            registry: RegistrySection {
                url: self.registry_url(),
                admin_token: self.opts.admin_token.clone(),
                instance_id: instance_id.map(str::to_owned),
                name: None,
            },
            vault: VaultSection {
                url: Some(self.data_url()),
            },
            storage: StorageSettings {
                kind,
                data_dir: self.app_root().join(host_name),
                remote_url: Some(format!("{}{}", self.data_url(), ROWS_PREFIX)),
                namespace: None,
            },
            kdf: KdfSection {
                iterations: self.opts.kdf_iterations,
            },
            tls: self.tls.clone(),
            app: AppSection { listen: loopback() },
        }
    }

    /// Boots an application instance on a fresh (or reused) host directory.
    pub async fn start_app(
        &self,
        kind: BackendKind,
        host_name: &str,
        instance_id: Option<&str>,
    ) -> Result<HealthApp, AppError> {
        HealthApp::start(self.app_config(kind, host_name, instance_id)).await
    }

    /// Takes a shared host off the network. Application hosts are severed
    /// by dropping their [`HealthApp`].
    pub async fn sever(&mut self, target: AttackTarget) -> anyhow::Result<()> {
        match target {
            AttackTarget::DataHost => Ok(self.data_host.sever().await?),
            AttackTarget::AppHost => anyhow::bail!("application hosts are severed by dropping them"),
        }
    }

    pub async fn restore(&mut self, target: AttackTarget) -> anyhow::Result<()> {
        match target {
            AttackTarget::DataHost => Ok(self.data_host.restore().await?),
            AttackTarget::AppHost => anyhow::bail!("application hosts are replaced, not restored"),
        }
    }

    pub fn data_host_running(&self) -> bool {
        self.data_host.is_running()
    }

    pub async fn sever_registry(&mut self) -> anyhow::Result<()> {
        Ok(self.registry_host.sever().await?)
    }

    pub async fn restore_registry(&mut self) -> anyhow::Result<()> {
        Ok(self.registry_host.restore().await?)
    }
}
