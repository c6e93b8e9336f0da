//! The coordination kernel: one process owning the service registry, the
//! composition catalog, the coordinator, the builtin reference services and
//! their language resources, the full-text index, the document store, and
//! an optional vector model.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use crate::composition::{
    CompositionDef, CompositionError, CompositionStore, ExecutionPlan, StageParams,
};
use crate::coordinator::{
    AppError, BuiltinHost, Coordinator, CoordinatorConfig, ExecuteError, ExecutionTrace,
    InvokeError, RunOutput,
};
use crate::envelope::{envelope_from_value, envelope_to_value, DocumentEnvelope};
use crate::index::{index_envelope, query_lemmas, IndexError, IndexReport, InvertedIndex, SearchHit};
use crate::nlp::{
    detect_language, extract_keywords, filter_terms, filter_tokens, lemmatize, segment_terms,
    split_sentences, summarize, to_win1251, tokenize, ConversionMode, LanguageProfile, Lexicon,
    StopList, TermLexicon,
};
use crate::registry::{
    HealthRecord, RegistryError, ServiceDescriptor, ServiceKind, ServiceRegistry,
    DEFAULT_PROBE_TIMEOUT,
};
use crate::store::{MergeReport, Store, StoreError, StoredDocument, SyncBundle};
use crate::transport::{Transport, UreqTransport};
use crate::vectors::VectorModel;

/// Store id under which the serialized index is persisted.
pub const INDEX_DOC_ID: &str = "system:index";

/// Immutable language resources, loaded once and shared across concurrent
/// invocations.
#[derive(Default)]
pub struct Resources {
    pub profiles: Vec<LanguageProfile>,
    pub lexicon: Option<Lexicon>,
    pub term_lexicon: Option<TermLexicon>,
    pub stoplist: Option<StopList>,
    pub abbreviations: Vec<String>,
}

impl Resources {
    fn stops_or_empty(&self) -> StopList {
        self.stoplist.clone().unwrap_or_default()
    }
}

/// The builtin reference services: in-process implementations behind the
/// same envelope contract as remote services.
struct BuiltinSuite {
    resources: Arc<Resources>,
    index: Arc<RwLock<InvertedIndex>>,
}

fn missing_field(service: &str, field: &str) -> AppError {
    AppError::new(
        "missing_field",
        format!("service {service:?} requires envelope field {field:?}"),
    )
}

fn param_usize(params: &StageParams, key: &str, default: usize) -> Result<usize, AppError> {
    match params.get(key) {
        None => Ok(default),
        Some(Value::Number(n)) => n
            .as_u64()
            .map(|v| v as usize)
            .ok_or_else(|| AppError::new("bad_param", format!("{key} must be a non-negative integer"))),
        Some(Value::String(s)) => s
            .parse::<usize>()
            .map_err(|_| AppError::new("bad_param", format!("{key} must be a non-negative integer"))),
        Some(_) => Err(AppError::new(
            "bad_param",
            format!("{key} must be a non-negative integer"),
        )),
    }
}

fn param_str<'a>(params: &'a StageParams, key: &str, default: &'a str) -> Result<&'a str, AppError> {
    match params.get(key) {
        None => Ok(default),
        Some(Value::String(s)) => Ok(s.as_str()),
        Some(_) => Err(AppError::new("bad_param", format!("{key} must be a string"))),
    }
}

impl BuiltinSuite {
    fn text<'a>(service: &str, env: &'a DocumentEnvelope) -> Result<&'a str, AppError> {
        env.text
            .as_deref()
            .ok_or_else(|| missing_field(service, "text"))
    }

    fn apply(
        &self,
        service: &str,
        mut env: DocumentEnvelope,
        params: &StageParams,
    ) -> Result<DocumentEnvelope, AppError> {
        let resources = &self.resources;
        match service {
            "detect_language" => {
                let text = Self::text(service, &env)?;
                let (lang, confidence) = detect_language(text, &resources.profiles)
                    .map_err(|e| AppError::new(e.code(), e.to_string()))?;
                env.language = Some(lang);
                env.attrs
                    .insert("language_confidence".to_string(), json!(confidence));
                Ok(env)
            }
            "split_sentences" => {
                let text = Self::text(service, &env)?;
                env.sentences = Some(split_sentences(text, &resources.abbreviations));
                Ok(env)
            }
            "tokenize" => {
                let text = Self::text(service, &env)?;
                env.tokens = Some(tokenize(text));
                Ok(env)
            }
            "lemmatize" => {
                let lexicon = resources
                    .lexicon
                    .as_ref()
                    .ok_or_else(|| AppError::new("lexicon_missing", "no lexicon configured"))?;
                let tokens = env
                    .tokens
                    .take()
                    .ok_or_else(|| missing_field(service, "tokens"))?;
                env.tokens = Some(lemmatize(&tokens, lexicon));
                Ok(env)
            }
            "segment_terms" => {
                let tokens = env
                    .tokens
                    .as_ref()
                    .ok_or_else(|| missing_field(service, "tokens"))?;
                let empty = TermLexicon::new();
                let lexicon = resources.term_lexicon.as_ref().unwrap_or(&empty);
                env.terms = Some(segment_terms(tokens, lexicon));
                Ok(env)
            }
            "stopfilter" => {
                let stops = resources
                    .stoplist
                    .as_ref()
                    .ok_or_else(|| AppError::new("stoplist_missing", "no stop list configured"))?;
                let tokens = env
                    .tokens
                    .take()
                    .ok_or_else(|| missing_field(service, "tokens"))?;
                env.tokens = Some(filter_tokens(&tokens, stops));
                if let Some(terms) = env.terms.take() {
                    env.terms = Some(filter_terms(&terms, stops));
                }
                Ok(env)
            }
            "summarize" => {
                let k = param_usize(params, "k", 3)?;
                let sentences = env
                    .sentences
                    .clone()
                    .ok_or_else(|| missing_field(service, "sentences"))?;
                let lemmas: Vec<Vec<String>> = sentences
                    .iter()
                    .map(|s| {
                        let tokens = tokenize(s);
                        let tokens = match &resources.lexicon {
                            Some(lex) => lemmatize(&tokens, lex),
                            None => tokens,
                        };
                        tokens.iter().map(|t| t.lemma_or_surface()).collect()
                    })
                    .collect();
                env.summary = Some(summarize(
                    &sentences,
                    &lemmas,
                    &resources.stops_or_empty(),
                    k,
                ));
                Ok(env)
            }
            "extract_keywords" => {
                let n = param_usize(params, "n", 10)?;
                let tokens = env
                    .tokens
                    .as_ref()
                    .ok_or_else(|| missing_field(service, "tokens"))?;
                env.keywords = Some(extract_keywords(
                    tokens,
                    &resources.stops_or_empty(),
                    n,
                ));
                Ok(env)
            }
            "win1251" => {
                let mode = match param_str(params, "mode", "strict")? {
                    "strict" => ConversionMode::Strict,
                    "lossy" => ConversionMode::Lossy,
                    other => {
                        return Err(AppError::new(
                            "bad_param",
                            format!("mode must be strict or lossy, got {other:?}"),
                        ))
                    }
                };
                let text = Self::text(service, &env)?;
                let bytes =
                    to_win1251(text, mode).map_err(|e| AppError::new(e.code(), e.to_string()))?;
                env.encoded = Some(base64::engine::general_purpose::STANDARD.encode(bytes));
                Ok(env)
            }
            "index_document" => {
                let mut index = self.index.write().expect("index lock");
                let report = index_envelope(&mut index, &env, &resources.stops_or_empty())
                    .map_err(|e| AppError::new(e.code(), e.to_string()))?;
                env.attrs.insert(
                    "index_report".to_string(),
                    serde_json::to_value(&report).expect("report serializes"),
                );
                Ok(env)
            }
            other => Err(AppError::new(
                "unknown_builtin",
                format!("no builtin service named {other:?}"),
            )),
        }
    }
}

impl BuiltinHost for BuiltinSuite {
    fn invoke_builtin(
        &self,
        service: &str,
        envelope: DocumentEnvelope,
        params: &StageParams,
    ) -> Result<DocumentEnvelope, AppError> {
        self.apply(service, envelope, params)
    }
}

/// Descriptors of the builtin reference services: (name, requires,
/// provides, cacheable). All are deterministic; `index_document` mutates
/// the index and is therefore not cacheable.
pub fn builtin_catalog() -> Vec<(&'static str, &'static [&'static str], &'static [&'static str], bool)>
{
    vec![
        ("detect_language", &["text"], &["language"], true),
        ("split_sentences", &["text"], &["sentences"], true),
        ("tokenize", &["text"], &["tokens"], true),
        ("lemmatize", &["tokens"], &["tokens"], true),
        ("segment_terms", &["tokens"], &["terms"], true),
        ("stopfilter", &["tokens"], &["tokens"], true),
        ("summarize", &["sentences"], &["summary"], true),
        ("extract_keywords", &["tokens"], &["keywords"], true),
        ("win1251", &["text"], &["encoded"], true),
        ("index_document", &["tokens"], &["index_report"], false),
    ]
}

/// Kernel-level knobs that are not coordinator tuning.
#[derive(Debug, Clone)]
pub struct KernelSettings {
    pub node_id: String,
    /// Shared bearer token required on mutating HTTP endpoints when set.
    pub token: Option<String>,
    pub probe_timeout: Duration,
}

/// Builder for [`Kernel`].
pub struct KernelBuilder {
    resources: Resources,
    vectors: Option<VectorModel>,
    store: Option<Store>,
    node_id: Option<String>,
    token: Option<String>,
    coordinator_config: CoordinatorConfig,
    probe_timeout: Duration,
    transport: Option<Arc<dyn Transport>>,
    builtins: Option<Vec<String>>,
}

impl Default for KernelBuilder {
    fn default() -> Self {
        KernelBuilder {
            resources: Resources::default(),
            vectors: None,
            store: None,
            node_id: None,
            token: None,
            coordinator_config: CoordinatorConfig::default(),
            probe_timeout: DEFAULT_PROBE_TIMEOUT,
            transport: None,
            builtins: None,
        }
    }
}

impl KernelBuilder {
    pub fn resources(mut self, resources: Resources) -> Self {
        self.resources = resources;
        self
    }

    pub fn vectors(mut self, model: VectorModel) -> Self {
        self.vectors = Some(model);
        self
    }

    pub fn store(mut self, store: Store) -> Self {
        self.store = Some(store);
        self
    }

    pub fn node_id(mut self, id: impl Into<String>) -> Self {
        self.node_id = Some(id.into());
        self
    }

    pub fn token(mut self, token: Option<String>) -> Self {
        self.token = token;
        self
    }

    pub fn coordinator_config(mut self, config: CoordinatorConfig) -> Self {
        self.coordinator_config = config;
        self
    }

    pub fn probe_timeout(mut self, timeout: Duration) -> Self {
        self.probe_timeout = timeout;
        self
    }

    pub fn transport(mut self, transport: Arc<dyn Transport>) -> Self {
        self.transport = Some(transport);
        self
    }

    /// Restrict which builtin services are registered. `None` registers the
    /// whole catalog.
    pub fn builtins(mut self, names: Option<Vec<String>>) -> Self {
        self.builtins = names;
        self
    }

    pub fn build(self) -> Result<Kernel, RegistryError> {
        let node_id = self
            .node_id
            .unwrap_or_else(|| format!("node-{}", &uuid::Uuid::new_v4().to_string()[..8]));
        let registry = Arc::new(ServiceRegistry::new());
        let compositions = Arc::new(CompositionStore::new());
        let resources = Arc::new(self.resources);
        let index = Arc::new(RwLock::new(InvertedIndex::new()));
        let transport = self
            .transport
            .unwrap_or_else(|| Arc::new(UreqTransport::new(self.token.clone())));
        let host = Arc::new(BuiltinSuite {
            resources: Arc::clone(&resources),
            index: Arc::clone(&index),
        });
        let coordinator = Coordinator::new(
            Arc::clone(&registry),
            Arc::clone(&compositions),
            host,
            Arc::clone(&transport),
            self.coordinator_config,
        );
        let store = Arc::new(
            self.store
                .unwrap_or_else(|| Store::in_memory(node_id.clone())),
        );

        let version = env!("CARGO_PKG_VERSION").to_string();
        for (name, requires, provides, cacheable) in builtin_catalog() {
            if let Some(enabled) = &self.builtins {
                if !enabled.iter().any(|n| n == name) {
                    continue;
                }
            }
            registry.register(ServiceDescriptor {
                name: name.to_string(),
                kind: ServiceKind::Builtin,
                replicas: vec![],
                requires: requires.iter().map(|s| s.to_string()).collect(),
                provides: provides.iter().map(|s| s.to_string()).collect(),
                cacheable,
                version: version.clone(),
            })?;
        }

        Ok(Kernel {
            registry,
            compositions,
            coordinator,
            resources,
            index,
            store,
            vectors: self.vectors.map(Arc::new),
            transport,
            runs: RwLock::new(BTreeMap::new()),
            settings: KernelSettings {
                node_id,
                token: self.token,
                probe_timeout: self.probe_timeout,
            },
        })
    }
}

/// One coordination kernel instance.
pub struct Kernel {
    registry: Arc<ServiceRegistry>,
    compositions: Arc<CompositionStore>,
    coordinator: Coordinator,
    resources: Arc<Resources>,
    index: Arc<RwLock<InvertedIndex>>,
    store: Arc<Store>,
    vectors: Option<Arc<VectorModel>>,
    transport: Arc<dyn Transport>,
    runs: RwLock<BTreeMap<String, ExecutionTrace>>,
    settings: KernelSettings,
}

impl Kernel {
    pub fn builder() -> KernelBuilder {
        KernelBuilder::default()
    }

    pub fn settings(&self) -> &KernelSettings {
        &self.settings
    }

    pub fn resources(&self) -> &Resources {
        &self.resources
    }

    pub fn registry(&self) -> &ServiceRegistry {
        &self.registry
    }

    pub fn coordinator(&self) -> &Coordinator {
        &self.coordinator
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn vectors(&self) -> Option<&VectorModel> {
        self.vectors.as_deref()
    }

    // --- registry surface ---

    pub fn register_service(&self, descriptor: ServiceDescriptor) -> Result<String, RegistryError> {
        self.registry.register(descriptor)
    }

    pub fn resolve_service(&self, name: &str) -> Result<Arc<ServiceDescriptor>, RegistryError> {
        self.registry.resolve(name)
    }

    pub fn list_services(&self) -> Vec<Arc<ServiceDescriptor>> {
        self.registry.list()
    }

    /// Deregistration is rejected while any stored composition references
    /// the service, preserving the subset relation at all times.
    pub fn deregister_service(&self, name: &str) -> Result<(), RegistryError> {
        if let Some(composition) = self.compositions.references(name) {
            return Err(RegistryError::ReferencedByComposition {
                service: name.to_string(),
                composition,
            });
        }
        self.registry.deregister(name)
    }

    pub fn health_check(&self, name: &str) -> Result<Vec<HealthRecord>, RegistryError> {
        self.registry
            .health_check(name, self.transport.as_ref(), self.settings.probe_timeout)
    }

    // --- composition surface ---

    pub fn define_composition(&self, def: CompositionDef) -> Result<String, CompositionError> {
        self.compositions.define(def, &self.registry)
    }

    pub fn get_composition(&self, name: &str) -> Result<Arc<CompositionDef>, CompositionError> {
        self.compositions.get(name)
    }

    pub fn list_compositions(&self) -> Vec<Arc<CompositionDef>> {
        self.compositions.list()
    }

    pub fn plan(&self, name: &str) -> Result<ExecutionPlan, CompositionError> {
        self.compositions.plan(name, &self.registry)
    }

    pub fn load_presets(&self) -> Result<Vec<String>, CompositionError> {
        self.compositions.load_presets(&self.registry)
    }

    // --- execution surface ---

    /// Execute a composition and record its trace in the run log, kept on
    /// both success and failure.
    pub fn execute(
        &self,
        name: &str,
        envelope: DocumentEnvelope,
    ) -> Result<RunOutput, ExecuteError> {
        let outcome = self.coordinator.execute(name, envelope);
        match &outcome {
            Ok(run) => self.record_run(run.trace.clone()),
            Err(ExecuteError::Stage { trace, .. }) => self.record_run((**trace).clone()),
            Err(_) => {}
        }
        outcome
    }

    fn record_run(&self, trace: ExecutionTrace) {
        let mut runs = self.runs.write().expect("run log lock");
        // Desk-scale retention: keep the most recent 1024 runs.
        if runs.len() >= 1024 {
            let oldest = runs.keys().next().cloned();
            if let Some(key) = oldest {
                runs.remove(&key);
            }
        }
        runs.insert(trace.run_id.clone(), trace);
    }

    pub fn run_trace(&self, run_id: &str) -> Option<ExecutionTrace> {
        self.runs.read().expect("run log lock").get(run_id).cloned()
    }

    pub fn invoke_atomic(
        &self,
        service: &str,
        envelope: DocumentEnvelope,
    ) -> Result<DocumentEnvelope, InvokeError> {
        self.coordinator.invoke_atomic(service, envelope)
    }

    pub fn cached_invoke(
        &self,
        service: &str,
        envelope: DocumentEnvelope,
    ) -> Result<(DocumentEnvelope, bool), InvokeError> {
        self.coordinator.cached_invoke(service, envelope)
    }

    /// Apply a builtin service directly, without provenance or caching: the
    /// raw transformation behind `POST /svc/{name}/process`.
    pub fn apply_builtin(
        &self,
        service: &str,
        envelope: DocumentEnvelope,
        params: &StageParams,
    ) -> Result<DocumentEnvelope, AppError> {
        let suite = BuiltinSuite {
            resources: Arc::clone(&self.resources),
            index: Arc::clone(&self.index),
        };
        suite.apply(service, envelope, params)
    }

    // --- index surface ---

    pub fn index_envelope(&self, env: &DocumentEnvelope) -> Result<IndexReport, IndexError> {
        let mut index = self.index.write().expect("index lock");
        index_envelope(&mut index, env, &self.resources.stops_or_empty())
    }

    /// Tokenize, lemmatize and stop-filter the query, then rank documents.
    pub fn search(&self, query: &str, limit: usize) -> Result<Vec<SearchHit>, IndexError> {
        let lemmas = query_lemmas(
            query,
            self.resources.lexicon.as_ref(),
            &self.resources.stops_or_empty(),
        );
        if lemmas.is_empty() {
            return Err(IndexError::EmptyQuery);
        }
        Ok(self.index.read().expect("index lock").search_lemmas(&lemmas, limit))
    }

    pub fn index_doc_count(&self) -> usize {
        self.index.read().expect("index lock").doc_count()
    }

    /// Persist the index into the document store as an ordinary document.
    pub fn persist_index(&self) -> Result<StoredDocument, StoreError> {
        let value = {
            let index = self.index.read().expect("index lock");
            serde_json::to_value(&*index).expect("index serializes")
        };
        self.store.put_document(INDEX_DOC_ID, value)
    }

    /// Load a previously persisted index, replacing the in-memory one.
    pub fn load_index(&self) -> Result<(), StoreError> {
        let doc = self.store.get_document(INDEX_DOC_ID)?;
        let loaded: InvertedIndex = serde_json::from_value(doc.body)
            .map_err(|e| StoreError::Backend(format!("persisted index: {e}")))?;
        *self.index.write().expect("index lock") = loaded;
        Ok(())
    }

    /// Rebuild the index from the stored source envelopes (documents whose
    /// body parses as an envelope with tokens).
    pub fn rebuild_index(&self) -> Result<usize, StoreError> {
        let mut rebuilt = InvertedIndex::new();
        let stops = self.resources.stops_or_empty();
        let mut indexed = 0usize;
        for doc in self.store.snapshot_export()?.entries {
            if doc.id == INDEX_DOC_ID {
                continue;
            }
            if let Ok(mut env) = envelope_from_value(doc.body) {
                env.id = doc.id;
                if env.tokens.is_some() && index_envelope(&mut rebuilt, &env, &stops).is_ok() {
                    indexed += 1;
                }
            }
        }
        *self.index.write().expect("index lock") = rebuilt;
        Ok(indexed)
    }

    // --- store surface ---

    pub fn put_document(&self, id: &str, body: Value) -> Result<StoredDocument, StoreError> {
        self.store.put_document(id, body)
    }

    pub fn put_envelope(&self, env: &DocumentEnvelope) -> Result<StoredDocument, StoreError> {
        self.store.put_document(&env.id, envelope_to_value(env))
    }

    pub fn get_document(&self, id: &str) -> Result<StoredDocument, StoreError> {
        self.store.get_document(id)
    }

    pub fn delete_document(&self, id: &str) -> Result<(), StoreError> {
        self.store.delete_document(id)
    }

    pub fn sync_export(&self) -> Result<SyncBundle, StoreError> {
        self.store.snapshot_export()
    }

    pub fn sync_merge(&self, bundle: &SyncBundle) -> Result<MergeReport, StoreError> {
        self.store.sync_merge(bundle)
    }
}
