//! The registry of atomic services: descriptors, replicas, and health.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transport::Transport;

/// How a service is invoked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServiceKind {
    /// Runs in-process, exposing the same envelope contract as a remote
    /// service, so the coordinator path is identical.
    Builtin,
    /// Invoked over HTTP at one of its replica URLs.
    Remote,
}

/// Descriptor of one atomic service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceDescriptor {
    pub name: String,
    pub kind: ServiceKind,
    /// Ordered endpoint URLs; empty for builtin services.
    #[serde(default)]
    pub replicas: Vec<String>,
    /// Envelope fields the service reads.
    #[serde(default)]
    pub requires: BTreeSet<String>,
    /// Envelope fields the service writes. Non-empty; may overlap with
    /// `requires` for in-place rewrites.
    pub provides: BTreeSet<String>,
    #[serde(default)]
    pub cacheable: bool,
    #[serde(default = "default_version")]
    pub version: String,
}

fn default_version() -> String {
    "0".to_string()
}

impl ServiceDescriptor {
    pub fn validate(&self) -> Result<(), RegistryError> {
        if self.name.is_empty() {
            return Err(RegistryError::InvalidDescriptor(
                "name must be non-empty".to_string(),
            ));
        }
        match self.kind {
            ServiceKind::Remote if self.replicas.is_empty() => {
                return Err(RegistryError::InvalidDescriptor(format!(
                    "remote service {:?} needs at least one replica",
                    self.name
                )));
            }
            ServiceKind::Builtin if !self.replicas.is_empty() => {
                return Err(RegistryError::InvalidDescriptor(format!(
                    "builtin service {:?} must not declare replicas",
                    self.name
                )));
            }
            _ => {}
        }
        if self.provides.is_empty() {
            return Err(RegistryError::InvalidDescriptor(format!(
                "service {:?} must provide at least one field",
                self.name
            )));
        }
        Ok(())
    }
}

/// Probe outcome for one replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Health {
    Healthy,
    Unhealthy,
    Unknown,
}

/// Health state of one replica with the time it was last probed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthRecord {
    pub state: Health,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checked_at: Option<String>,
}

impl HealthRecord {
    fn unknown() -> Self {
        HealthRecord {
            state: Health::Unknown,
            checked_at: None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum RegistryError {
    #[error("service {0:?} is already registered")]
    DuplicateName(String),
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("unknown service {0:?}")]
    UnknownService(String),
    #[error("service {service:?} is referenced by composition {composition:?}")]
    ReferencedByComposition { service: String, composition: String },
}

impl RegistryError {
    pub fn code(&self) -> &'static str {
        match self {
            RegistryError::DuplicateName(_) => "duplicate_name",
            RegistryError::InvalidDescriptor(_) => "invalid_descriptor",
            RegistryError::UnknownService(_) => "unknown_service",
            RegistryError::ReferencedByComposition { .. } => "referenced_by_composition",
        }
    }
}

/// Default timeout for one health probe.
pub const DEFAULT_PROBE_TIMEOUT: Duration = Duration::from_secs(2);

/// Thread-safe service registry: concurrent reads, serialized writes,
/// read-your-writes on a single node. Stored descriptors are immutable.
#[derive(Default)]
pub struct ServiceRegistry {
    services: RwLock<BTreeMap<String, Arc<ServiceDescriptor>>>,
    health: RwLock<HashMap<(String, usize), HealthRecord>>,
}

impl ServiceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Register a descriptor. Replicas start in health state unknown.
    pub fn register(&self, descriptor: ServiceDescriptor) -> Result<String, RegistryError> {
        descriptor.validate()?;
        let mut services = self.services.write().expect("registry lock");
        if services.contains_key(&descriptor.name) {
            return Err(RegistryError::DuplicateName(descriptor.name));
        }
        let name = descriptor.name.clone();
        let replica_count = descriptor.replicas.len();
        services.insert(name.clone(), Arc::new(descriptor));
        drop(services);

        let mut health = self.health.write().expect("registry lock");
        for i in 0..replica_count {
            health.insert((name.clone(), i), HealthRecord::unknown());
        }
        Ok(name)
    }

    /// The registered descriptor, unchanged.
    pub fn resolve(&self, name: &str) -> Result<Arc<ServiceDescriptor>, RegistryError> {
        self.services
            .read()
            .expect("registry lock")
            .get(name)
            .cloned()
            .ok_or_else(|| RegistryError::UnknownService(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.services.read().expect("registry lock").contains_key(name)
    }

    pub fn list(&self) -> Vec<Arc<ServiceDescriptor>> {
        self.services
            .read()
            .expect("registry lock")
            .values()
            .cloned()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.services.read().expect("registry lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn deregister(&self, name: &str) -> Result<(), RegistryError> {
        let mut services = self.services.write().expect("registry lock");
        if services.remove(name).is_none() {
            return Err(RegistryError::UnknownService(name.to_string()));
        }
        drop(services);
        self.health
            .write()
            .expect("registry lock")
            .retain(|(n, _), _| n != name);
        Ok(())
    }

    /// Current health records in replica order. Builtin services report a
    /// single healthy entry.
    pub fn health_of(&self, name: &str) -> Result<Vec<HealthRecord>, RegistryError> {
        let descriptor = self.resolve(name)?;
        if descriptor.kind == ServiceKind::Builtin {
            return Ok(vec![HealthRecord {
                state: Health::Healthy,
                checked_at: None,
            }]);
        }
        let health = self.health.read().expect("registry lock");
        Ok((0..descriptor.replicas.len())
            .map(|i| {
                health
                    .get(&(name.to_string(), i))
                    .cloned()
                    .unwrap_or_else(HealthRecord::unknown)
            })
            .collect())
    }

    /// Mark one replica's health. Descriptors are never altered.
    pub fn set_health(&self, name: &str, replica: usize, state: Health) {
        let mut health = self.health.write().expect("registry lock");
        health.insert(
            (name.to_string(), replica),
            HealthRecord {
                state,
                checked_at: Some(now_rfc3339()),
            },
        );
    }

    /// Probe each replica's `/health` endpoint and update the health map.
    /// Any 2xx answer within the timeout counts as healthy.
    pub fn health_check(
        &self,
        name: &str,
        transport: &dyn Transport,
        timeout: Duration,
    ) -> Result<Vec<HealthRecord>, RegistryError> {
        let descriptor = self.resolve(name)?;
        if descriptor.kind == ServiceKind::Builtin {
            return self.health_of(name);
        }
        for (i, replica) in descriptor.replicas.iter().enumerate() {
            let url = format!("{}/health", replica.trim_end_matches('/'));
            let state = match transport.get(&url, timeout) {
                Ok(response) if response.is_success() => Health::Healthy,
                _ => Health::Unhealthy,
            };
            self.set_health(name, i, state);
        }
        self.health_of(name)
    }
}

pub(crate) fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true)
}
