//! Kernel configuration: an attribute-value document listing the builtin
//! services to enable, resource file paths, and the listen address.
//!
//! Relative resource paths resolve against the config file's directory.
//! Environment overrides: `CWS_CACHE_TTL` (seconds) and `CWS_TOKEN`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::coordinator::CoordinatorConfig;
use crate::kernel::{Kernel, Resources};
use crate::nlp::{
    train_profile, LanguageProfile, Lexicon, NlpError, ResourceError, StopList, TermLexicon,
};
use crate::registry::RegistryError;
use crate::store::{JournalBackend, Store, StoreError};
use crate::vectors::{VectorError, VectorModel};

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourcePaths {
    pub stoplist: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub term_lexicon: Option<PathBuf>,
    /// Pre-built profile documents (`{"lang":..,"ngrams":{..}}`).
    #[serde(default)]
    pub profiles: Vec<PathBuf>,
    /// Plain-text corpora to train profiles from at startup, keyed by
    /// language code.
    #[serde(default)]
    pub profile_corpora: BTreeMap<String, PathBuf>,
    pub vectors: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreSettings {
    /// `memory` or `journal`.
    pub backend: String,
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeConfig {
    pub listen: Option<String>,
    pub node_id: Option<String>,
    pub cache_ttl_secs: Option<u64>,
    pub token: Option<String>,
    /// Builtin services to enable; absent means all of them.
    pub builtins: Option<Vec<String>>,
    #[serde(default)]
    pub abbreviations: Vec<String>,
    pub resources: Option<ResourcePaths>,
    pub store: Option<StoreSettings>,
}

impl ServeConfig {
    pub fn listen_addr(&self) -> &str {
        self.listen.as_deref().unwrap_or(DEFAULT_LISTEN)
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Parse { path: String, reason: String },
    #[error(transparent)]
    Resource(#[from] ResourceError),
    #[error("profile training: {0}")]
    Training(#[from] NlpError),
    #[error(transparent)]
    Vectors(#[from] VectorError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Read and parse a config file. Returns the config and the directory
/// against which relative resource paths resolve.
pub fn load_config(path: impl AsRef<Path>) -> Result<(ServeConfig, PathBuf), ConfigError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let content = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: display.clone(),
        source,
    })?;
    let config: ServeConfig = serde_json::from_str(&content).map_err(|e| ConfigError::Parse {
        path: display,
        reason: e.to_string(),
    })?;
    let base = path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((config, base))
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// Build a kernel from a config, applying `CWS_CACHE_TTL` and `CWS_TOKEN`
/// environment overrides.
pub fn build_kernel(config: &ServeConfig, base: &Path) -> Result<Kernel, ConfigError> {
    let mut resources = Resources {
        abbreviations: config.abbreviations.clone(),
        ..Resources::default()
    };

    if let Some(paths) = &config.resources {
        if let Some(p) = &paths.stoplist {
            resources.stoplist = Some(StopList::load(resolve(base, p))?);
        }
        if let Some(p) = &paths.lexicon {
            resources.lexicon = Some(Lexicon::load(resolve(base, p))?);
        }
        if let Some(p) = &paths.term_lexicon {
            resources.term_lexicon = Some(TermLexicon::load(resolve(base, p))?);
        }
        for p in &paths.profiles {
            resources
                .profiles
                .push(LanguageProfile::load(resolve(base, p))?);
        }
        for (lang, p) in &paths.profile_corpora {
            let corpus_path = resolve(base, p);
            let corpus =
                std::fs::read_to_string(&corpus_path).map_err(|source| ConfigError::Io {
                    path: corpus_path.display().to_string(),
                    source,
                })?;
            resources.profiles.push(train_profile(&corpus, lang)?);
        }
    }

    let cache_ttl = match std::env::var("CWS_CACHE_TTL") {
        Ok(raw) => Some(raw.parse::<u64>().map_err(|_| {
            ConfigError::Invalid(format!(
                "CWS_CACHE_TTL must be a number of seconds, got {raw:?}"
            ))
        })?),
        Err(_) => config.cache_ttl_secs,
    };
    let token = std::env::var("CWS_TOKEN")
        .ok()
        .filter(|t| !t.is_empty())
        .or_else(|| config.token.clone());

    let node_id = config
        .node_id
        .clone()
        .unwrap_or_else(|| format!("node-{}", &uuid::Uuid::new_v4().to_string()[..8]));

    let store = match &config.store {
        None => Store::in_memory(node_id.clone()),
        Some(settings) => match settings.backend.as_str() {
            "memory" => Store::in_memory(node_id.clone()),
            "journal" => {
                let path = settings.path.as_ref().ok_or_else(|| {
                    ConfigError::Invalid("journal store requires a path".to_string())
                })?;
                Store::new(
                    node_id.clone(),
                    Box::new(JournalBackend::open(resolve(base, path))?),
                )
            }
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown store backend {other:?} (expected memory or journal)"
                )))
            }
        },
    };

    let mut coordinator_config = CoordinatorConfig::default();
    if let Some(secs) = cache_ttl {
        coordinator_config.cache_ttl = Duration::from_secs(secs);
    }

    let mut builder = Kernel::builder()
        .resources(resources)
        .store(store)
        .node_id(node_id)
        .token(token)
        .coordinator_config(coordinator_config)
        .builtins(config.builtins.clone());
    if let Some(paths) = &config.resources {
        if let Some(p) = &paths.vectors {
            builder = builder.vectors(VectorModel::load(resolve(base, p))?);
        }
    }
    Ok(builder.build()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_builds_a_kernel() {
        let config = ServeConfig::default();
        let kernel = build_kernel(&config, Path::new(".")).unwrap();
        assert_eq!(
            kernel.list_services().len(),
            crate::kernel::builtin_catalog().len()
        );
        assert_eq!(config.listen_addr(), DEFAULT_LISTEN);
    }

    #[test]
    fn config_with_resources_loads_them() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("stop.txt"), "# stops\nthe\n").unwrap();
        std::fs::write(dir.path().join("lex.tsv"), "cats\tcat\tNOUN\n").unwrap();
        std::fs::write(dir.path().join("terms.txt"), "machine learning\n").unwrap();
        std::fs::write(
            dir.path().join("corpus_en.txt"),
            "the quick brown fox jumps over the lazy dog ".repeat(20),
        )
        .unwrap();
        std::fs::write(dir.path().join("vec.txt"), "2 2\na 1 0\nb 0 1\n").unwrap();
        let config_path = dir.path().join("config.json");
        std::fs::write(
            &config_path,
            serde_json::json!({
                "listen": "127.0.0.1:0",
                "node_id": "cfg-test",
                "abbreviations": ["Dr"],
                "resources": {
                    "stoplist": "stop.txt",
                    "lexicon": "lex.tsv",
                    "term_lexicon": "terms.txt",
                    "profile_corpora": {"en": "corpus_en.txt"},
                    "vectors": "vec.txt"
                },
                "store": {"backend": "journal", "path": "docs.journal"}
            })
            .to_string(),
        )
        .unwrap();

        let (config, base) = load_config(&config_path).unwrap();
        let kernel = build_kernel(&config, &base).unwrap();
        assert!(kernel.resources().stoplist.as_ref().unwrap().contains("the"));
        assert!(kernel.resources().lexicon.is_some());
        assert_eq!(kernel.resources().profiles.len(), 1);
        assert!(kernel.vectors().is_some());
        assert_eq!(kernel.settings().node_id, "cfg-test");
        kernel.put_document("d", serde_json::json!({})).unwrap();
        assert!(dir.path().join("docs.journal").exists());
    }

    #[test]
    fn unknown_backend_is_rejected() {
        let config: ServeConfig =
            serde_json::from_str(r#"{"store": {"backend": "cloud"}}"#).unwrap();
        assert!(matches!(
            build_kernel(&config, Path::new(".")),
            Err(ConfigError::Invalid(_))
        ));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<ServeConfig>(r#"{"listne": "x"}"#).is_err());
    }
}
