use std::net::SocketAddr;
use std::path::Path;

use serde::{Deserialize, Serialize};
use vaultline_core::kdf::DEFAULT_ITERATIONS;
use vaultline_net::TlsSettings;
use vaultline_storage::StorageSettings;

use crate::AppError;

/// Contents of the application's TOML config file.
///
/// ```toml
/// [registry]
/// url = "https://127.0.0.1:7100"
/// admin_token = "change-me"
/// instance_id = "clinic-north-01"   # omit on first boot
///
/// [vault]
/// url = "https://127.0.0.1:7200"
///
/// [storage]
/// kind = "proposed-vault"
/// data_dir = "/var/lib/vaultline/app"
///
/// [kdf]
/// iterations = 100000
///
/// [tls]
/// enabled = true
/// cert_file = "app.pem"
/// key_file = "app.key"
/// ca_file = "ca.pem"
///
/// [app]
/// listen = "127.0.0.1:7300"
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppConfig {
    pub registry: RegistrySection,
    #[serde(default)]
    pub vault: VaultSection,
    #[serde(default)]
    pub storage: StorageSettings,
    #[serde(default)]
    pub kdf: KdfSection,
    #[serde(default)]
    pub tls: TlsSettings,
    #[serde(default)]
    pub app: AppSection,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistrySection {
    pub url: String,
    pub admin_token: String,
    /// Identity to take over with `reregister`. When absent the instance
    /// reuses the id remembered in its data directory, or registers anew.
    #[serde(default)]
    pub instance_id: Option<String>,
    /// Name requested on first registration.
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaultSection {
    pub url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KdfSection {
    pub iterations: u32,
}

impl Default for KdfSection {
    fn default() -> Self {
        KdfSection {
            iterations: DEFAULT_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppSection {
    pub listen: SocketAddr,
}

impl Default for AppSection {
    fn default() -> Self {
        AppSection {
            listen: "127.0.0.1:7300".parse().expect("static address"),
        }
    }
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self, AppError> {
        toml::from_str(text).map_err(|e| AppError::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AppError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use vaultline_storage::BackendKind;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = AppConfig::from_toml(
            r#"
            [registry]
            url = "http://127.0.0.1:1"
            admin_token = "t"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.kdf.iterations, 100_000);
        assert_eq!(cfg.storage.kind, BackendKind::ProposedVault);
        assert!(!cfg.tls.enabled);
        assert_eq!(cfg.registry.instance_id, None);
    }

    #[test]
    fn full_config() {
        let cfg = AppConfig::from_toml(
            r#"
            [registry]
            url = "https://10.0.0.2:7100"
            admin_token = "t"
            instance_id = "clinic-north-01"

            [vault]
            url = "https://10.0.0.3:7200"

            [storage]
            kind = "remote-database"
            data_dir = "/tmp/app"
            remote_url = "https://10.0.0.3:7200/rows"

            [kdf]
            iterations = 5000

            [tls]
            enabled = true
            cert_file = "a.pem"
            key_file = "a.key"

            [app]
            listen = "0.0.0.0:8443"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.storage.kind, BackendKind::RemoteDatabase);
        assert_eq!(cfg.kdf.iterations, 5000);
        assert_eq!(cfg.registry.instance_id.as_deref(), Some("clinic-north-01"));
        assert_eq!(cfg.app.listen.port(), 8443);
        assert!(cfg.tls.enabled);
    }

    #[test]
    fn unknown_keys_and_kinds_are_rejected() {
        let base = "[registry]\nurl = \"x\"\nadmin_token = \"t\"\n";
        assert!(AppConfig::from_toml(&format!("{base}[storage]\nkind = \"tape\"\n")).is_err());
        assert!(AppConfig::from_toml(&format!("{base}[kdf]\niterationz = 1\n")).is_err());
        assert!(AppConfig::from_toml("[registry]\nurl = \"x\"\n").is_err());
    }
}
