//! Named compositions over registered services: validation and planning.
//!
//! A composition is a strictly linear stage sequence. Validation checks two
//! things: every stage resolves in the registry, and each stage's required
//! fields are covered by the caller-supplied initial fields plus what
//! earlier stages provide.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::registry::{RegistryError, ServiceKind, ServiceRegistry};

/// Per-stage parameters, passed to the service at invocation time.
pub type StageParams = BTreeMap<String, Value>;

/// One stage of a composition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageDef {
    pub service: String,
    #[serde(default)]
    pub params: StageParams,
}

impl StageDef {
    pub fn new(service: impl Into<String>) -> Self {
        StageDef {
            service: service.into(),
            params: StageParams::new(),
        }
    }
}

/// A named composition definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionDef {
    pub name: String,
    #[serde(default)]
    pub stages: Vec<StageDef>,
    /// Envelope fields the caller must supply.
    #[serde(default)]
    pub initial_fields: BTreeSet<String>,
}

/// One stage of an execution plan, with the invocation mode resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedStage {
    pub service: String,
    pub mode: ServiceKind,
    #[serde(default)]
    pub params: StageParams,
}

/// The ordered invocation plan for one composition. Remote stages carry the
/// replica-selection policy, not a fixed replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionPlan {
    pub composition: String,
    pub stages: Vec<PlannedStage>,
    pub created_at: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum CompositionError {
    #[error("composition name must be non-empty")]
    InvalidName,
    #[error("stage {stage}: unknown service {service:?}")]
    UnknownService { stage: usize, service: String },
    #[error("stage {stage} ({service:?}): required fields not yet available: {missing:?}")]
    IncompatibleStages {
        stage: usize,
        service: String,
        missing: Vec<String>,
    },
    #[error("unknown composition {0:?}")]
    UnknownComposition(String),
}

impl CompositionError {
    pub fn code(&self) -> &'static str {
        match self {
            CompositionError::InvalidName => "invalid_name",
            CompositionError::UnknownService { .. } => "unknown_service",
            CompositionError::IncompatibleStages { .. } => "incompatible_stages",
            CompositionError::UnknownComposition(_) => "unknown_composition",
        }
    }
}

/// Validated composition catalog: concurrent reads, serialized writes,
/// atomic replacement on redefinition.
#[derive(Default)]
pub struct CompositionStore {
    defs: RwLock<BTreeMap<String, Arc<CompositionDef>>>,
}

impl CompositionStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Validate the definition against the registry and store it.
    /// Redefinition replaces the previous definition atomically; no
    /// partially stored composition is ever observable.
    pub fn define(
        &self,
        def: CompositionDef,
        registry: &ServiceRegistry,
    ) -> Result<String, CompositionError> {
        if def.name.is_empty() {
            return Err(CompositionError::InvalidName);
        }
        validate_stages(&def, registry)?;
        let name = def.name.clone();
        self.defs
            .write()
            .expect("composition lock")
            .insert(name.clone(), Arc::new(def));
        Ok(name)
    }

    pub fn get(&self, name: &str) -> Result<Arc<CompositionDef>, CompositionError> {
        self.defs
            .read()
            .expect("composition lock")
            .get(name)
            .cloned()
            .ok_or_else(|| CompositionError::UnknownComposition(name.to_string()))
    }

    pub fn list(&self) -> Vec<Arc<CompositionDef>> {
        self.defs
            .read()
            .expect("composition lock")
            .values()
            .cloned()
            .collect()
    }

    /// Whether any stored composition references the service.
    pub fn references(&self, service: &str) -> Option<String> {
        self.defs
            .read()
            .expect("composition lock")
            .values()
            .find(|def| def.stages.iter().any(|s| s.service == service))
            .map(|def| def.name.clone())
    }

    /// Produce an execution plan: stage order equals definition order; each
    /// stage carries its resolved invocation mode and parameters.
    pub fn plan(
        &self,
        name: &str,
        registry: &ServiceRegistry,
    ) -> Result<ExecutionPlan, CompositionError> {
        let def = self.get(name)?;
        let mut stages = Vec::with_capacity(def.stages.len());
        for (i, stage) in def.stages.iter().enumerate() {
            let descriptor = registry.resolve(&stage.service).map_err(|_| {
                CompositionError::UnknownService {
                    stage: i,
                    service: stage.service.clone(),
                }
            })?;
            stages.push(PlannedStage {
                service: stage.service.clone(),
                mode: descriptor.kind,
                params: stage.params.clone(),
            });
        }
        Ok(ExecutionPlan {
            composition: def.name.clone(),
            stages,
            created_at: crate::registry::now_rfc3339(),
        })
    }

    /// Install the preset compositions over the builtin reference services.
    /// Idempotent: reloading redefines the same four presets.
    pub fn load_presets(
        &self,
        registry: &ServiceRegistry,
    ) -> Result<Vec<String>, CompositionError> {
        let mut names = Vec::new();
        for def in preset_definitions() {
            names.push(self.define(def, registry)?);
        }
        Ok(names)
    }
}

fn validate_stages(
    def: &CompositionDef,
    registry: &ServiceRegistry,
) -> Result<(), CompositionError> {
    let mut available = def.initial_fields.clone();
    for (i, stage) in def.stages.iter().enumerate() {
        let descriptor = registry.resolve(&stage.service).map_err(|e| match e {
            RegistryError::UnknownService(service) => {
                CompositionError::UnknownService { stage: i, service }
            }
            other => CompositionError::UnknownService {
                stage: i,
                service: other.to_string(),
            },
        })?;
        let missing: Vec<String> = descriptor
            .requires
            .difference(&available)
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(CompositionError::IncompatibleStages {
                stage: i,
                service: stage.service.clone(),
                missing,
            });
        }
        available.extend(descriptor.provides.iter().cloned());
    }
    Ok(())
}

fn text_initial() -> BTreeSet<String> {
    ["text".to_string()].into_iter().collect()
}

/// The preset pipelines over the implemented reference services.
pub fn preset_definitions() -> Vec<CompositionDef> {
    vec![
        // End-to-end document preparation down to the full-text index.
        CompositionDef {
            name: "ontoprep".to_string(),
            stages: [
                "detect_language",
                "split_sentences",
                "tokenize",
                "lemmatize",
                "segment_terms",
                "stopfilter",
                "index_document",
            ]
            .iter()
            .map(|s| StageDef::new(*s))
            .collect(),
            initial_fields: text_initial(),
        },
        // Compositional language preprocessing.
        CompositionDef {
            name: "clp".to_string(),
            stages: ["split_sentences", "tokenize", "lemmatize", "stopfilter"]
                .iter()
                .map(|s| StageDef::new(*s))
                .collect(),
            initial_fields: text_initial(),
        },
        // Extractive summarization.
        CompositionDef {
            name: "summ".to_string(),
            stages: ["detect_language", "split_sentences", "summarize"]
                .iter()
                .map(|s| StageDef::new(*s))
                .collect(),
            initial_fields: text_initial(),
        },
        // Keyword detection.
        CompositionDef {
            name: "keywords".to_string(),
            stages: ["tokenize", "stopfilter", "extract_keywords"]
                .iter()
                .map(|s| StageDef::new(*s))
                .collect(),
            initial_fields: text_initial(),
        },
    ]
}
