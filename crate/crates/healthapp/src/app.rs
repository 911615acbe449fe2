use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};

use vaultline_core::{derive_key, DerivedKey, InstanceCredentials};
use vaultline_net::ServiceHost;
use vaultline_registry::RegistryClient;
use vaultline_storage::{open_backend, BackendContext, BackendKind, RecordStore, RecoveryOutcome};

use crate::http::router;
use crate::{AppConfig, AppError};

/// File in `storage.data_dir` remembering the instance id between restarts.
pub const INSTANCE_ID_FILE: &str = "instance.id";

/// One identity of the application: credentials, the key derived from
/// them, and the backend that key opens.
pub struct Instance {
    pub creds: InstanceCredentials,
    pub key: DerivedKey,
    pub backend: Arc<dyn RecordStore>,
}

pub struct AppState {
    config: AppConfig,
    http: reqwest::Client,
    registry: RegistryClient,
    current: RwLock<Arc<Instance>>,
    recovering: AtomicBool,
}

/// Clears the recovery flag however the recovery ends.
struct RecoveryGuard<'a>(&'a AtomicBool);

impl Drop for RecoveryGuard<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::SeqCst);
    }
}

async fn derive(creds: &InstanceCredentials, iterations: u32) -> Result<DerivedKey, AppError> {
    let creds = creds.clone();
    tokio::task::spawn_blocking(move || derive_key(&creds, iterations))
        .await
        .map_err(|e| AppError::Config(format!("key derivation task failed: {e}")))?
        .map_err(AppError::from)
}

fn remember_instance(dir: &Path, instance_id: &str) -> Result<(), AppError> {
    std::fs::create_dir_all(dir)
        .and_then(|_| std::fs::write(dir.join(INSTANCE_ID_FILE), instance_id))
        .map_err(|e| AppError::Config(format!("{}: {e}", dir.display())))
}

fn remembered_instance(dir: &Path) -> Option<String> {
    std::fs::read_to_string(dir.join(INSTANCE_ID_FILE))
        .ok()
        .map(|s| s.trim().to_owned())
        .filter(|s| !s.is_empty())
}

impl AppState {
    /// Obtains credentials, derives the key and opens the backend.
    pub async fn init(config: AppConfig) -> Result<Self, AppError> {
        let http = config.tls.client()?;
        let registry = RegistryClient::new(&config.registry.url, http.clone());
        let dir = &config.storage.data_dir;
        let known = config
            .registry
            .instance_id
            .clone()
            .or_else(|| remembered_instance(dir));
        let creds = match &known {
            Some(id) => registry.reregister(id, &config.registry.admin_token).await?,
            None => {
                registry
                    .register(config.registry.name.as_deref(), &config.registry.admin_token)
                    .await?
            }
        };
        log::info!("running as instance {}", creds.instance_id);
        let instance = Self::open_instance(&config, &http, creds).await?;
        remember_instance(dir, &instance.creds.instance_id)?;
        Ok(AppState {
            config,
            http,
            registry,
            current: RwLock::new(Arc::new(instance)),
            recovering: AtomicBool::new(false),
        })
    }

    async fn open_instance(
        config: &AppConfig,
        http: &reqwest::Client,
        creds: InstanceCredentials,
    ) -> Result<Instance, AppError> {
        let key = derive(&creds, config.kdf.iterations).await?;
        let ctx = BackendContext {
            creds: creds.clone(),
            key: key.clone(),
            http: http.clone(),
            vault_url: config.vault.url.clone(),
        };
        let backend = open_backend(&config.storage, &ctx)?;
        Ok(Instance { creds, key, backend })
    }

    pub fn config(&self) -> &AppConfig {
        &self.config
    }

    pub fn instance(&self) -> Arc<Instance> {
        self.current.read().expect("instance lock").clone()
    }

    pub fn backend(&self) -> Arc<dyn RecordStore> {
        self.instance().backend.clone()
    }

    pub fn is_recovering(&self) -> bool {
        self.recovering.load(Ordering::SeqCst)
    }

    /// Re-obtains the credentials of `instance_id`, recomputes the key and
    /// rebuilds the local index from the vault. Patient CRUD is refused
    /// while this runs.
    pub async fn recover(
        &self,
        instance_id: &str,
        admin_token: &str,
    ) -> Result<(String, RecoveryOutcome), AppError> {
        let kind = self.config.storage.kind;
        if kind != BackendKind::ProposedVault {
            return Err(AppError::Unsupported(format!(
                "{kind} keeps no recoverable copy outside the application host"
            )));
        }
        if self
            .recovering
            .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
            .is_err()
        {
            return Err(AppError::Busy);
        }
        let _guard = RecoveryGuard(&self.recovering);

        let creds = self.registry.reregister(instance_id, admin_token).await?;
        let current = self.instance();
        let instance = if creds == current.creds {
            let key = derive(&creds, self.config.kdf.iterations).await?;
            if key != current.key {
                return Err(AppError::Config(
                    "recomputed key differs from the running key".into(),
                ));
            }
            current
        } else {
            Arc::new(Self::open_instance(&self.config, &self.http, creds).await?)
        };
        let vault = instance
            .backend
            .as_vault()
            .expect("proposed-vault backend is a vault backend");
        let outcome = vault.recover().await?;
        remember_instance(&self.config.storage.data_dir, &instance.creds.instance_id)?;
        let id = instance.creds.instance_id.clone();
        *self.current.write().expect("instance lock") = instance;
        Ok((id, outcome))
    }
}

/// A running application instance.
pub struct HealthApp {
    state: Arc<AppState>,
    host: ServiceHost,
}

impl HealthApp {
    /// Fails without opening a listener if the registry cannot be reached.
    pub async fn start(config: AppConfig) -> Result<Self, AppError> {
        let tls = config.tls.server_config().await?;
        let listen = config.app.listen;
        let state = Arc::new(AppState::init(config).await?);
        let host = ServiceHost::start("app", router(state.clone()), listen, tls).await?;
        Ok(HealthApp { state, host })
    }

    pub fn base_url(&self) -> String {
        self.host.base_url()
    }

    pub fn state(&self) -> &Arc<AppState> {
        &self.state
    }

    pub fn creds(&self) -> InstanceCredentials {
        self.state.instance().creds.clone()
    }

    pub fn backend(&self) -> Arc<dyn RecordStore> {
        self.state.backend()
    }

    pub fn host_mut(&mut self) -> &mut ServiceHost {
        &mut self.host
    }

    pub async fn wait(self) -> Result<(), AppError> {
        Ok(self.host.wait().await?)
    }
}
