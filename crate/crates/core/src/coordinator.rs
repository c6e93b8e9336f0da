//! The coordination component: executes composition plans by invoking each
//! service in sequence on a flowing envelope, with round-robin replica
//! selection, bounded retries, and a response cache for cacheable services.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::composition::{CompositionError, CompositionStore, StageParams};
use crate::envelope::{
    decode_envelope, encode_envelope, DocumentEnvelope, EnvelopeError, Provenance,
};
use crate::registry::{Health, RegistryError, ServiceDescriptor, ServiceKind, ServiceRegistry};
use crate::transport::Transport;

/// Application-level service failure, carried on the wire as
/// `{"code": ..., "message": ...}`.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{code}: {message}")]
pub struct AppError {
    pub code: String,
    pub message: String,
}

impl AppError {
    pub fn new(code: impl Into<String>, message: impl Into<String>) -> Self {
        AppError {
            code: code.into(),
            message: message.into(),
        }
    }

    pub fn to_body(&self) -> Vec<u8> {
        serde_json::to_vec(&serde_json::json!({
            "code": self.code,
            "message": self.message,
        }))
        .expect("error body serializes")
    }
}

/// In-process dispatch of builtin services. The host applies the service
/// transformation only; provenance and caching are coordinator concerns.
pub trait BuiltinHost: Send + Sync {
    fn invoke_builtin(
        &self,
        service: &str,
        envelope: DocumentEnvelope,
        params: &StageParams,
    ) -> Result<DocumentEnvelope, AppError>;
}

#[derive(Debug, Error)]
pub enum InvokeError {
    #[error("unknown service {0:?}")]
    UnknownService(String),
    #[error("service {0:?} is not remote")]
    NotRemote(String),
    #[error("service {0:?} has no healthy replica")]
    NoHealthyReplica(String),
    #[error("service {service:?} unreachable: {detail}")]
    Transport { service: String, detail: String },
    #[error("application error from service: {0}")]
    Application(#[from] AppError),
    #[error("service {service:?} response omits declared field {field:?}")]
    ContractViolation { service: String, field: String },
    #[error("service {service:?} returned an invalid envelope: {detail}")]
    InvalidResponse { service: String, detail: String },
}

impl InvokeError {
    pub fn code(&self) -> &'static str {
        match self {
            InvokeError::UnknownService(_) => "unknown_service",
            InvokeError::NotRemote(_) => "not_remote",
            InvokeError::NoHealthyReplica(_) => "no_healthy_replica",
            InvokeError::Transport { .. } => "transport",
            InvokeError::Application(_) => "application",
            InvokeError::ContractViolation { .. } => "contract_violation",
            InvokeError::InvalidResponse { .. } => "invalid_response",
        }
    }
}

impl From<RegistryError> for InvokeError {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::UnknownService(name) => InvokeError::UnknownService(name),
            other => InvokeError::UnknownService(other.to_string()),
        }
    }
}

#[derive(Debug, Error)]
pub enum ExecuteError {
    #[error("unknown composition {0:?}")]
    UnknownComposition(String),
    #[error("input envelope lacks initial field {0:?}")]
    MissingField(String),
    #[error("planning failed: {0}")]
    Plan(CompositionError),
    #[error("stage {index} ({service:?}) failed: {cause}")]
    Stage {
        index: usize,
        service: String,
        cause: InvokeError,
        trace: Box<ExecutionTrace>,
    },
}

impl ExecuteError {
    pub fn code(&self) -> &'static str {
        match self {
            ExecuteError::UnknownComposition(_) => "unknown_composition",
            ExecuteError::MissingField(_) => "missing_field",
            ExecuteError::Plan(_) => "plan",
            ExecuteError::Stage { .. } => "stage_failure",
        }
    }
}

/// Outcome of one stage in a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum StageOutcome {
    Ok,
    Error { code: String, message: String },
}

/// Per-stage record of an execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub service: String,
    /// `builtin`, the chosen replica URL, or `cache` on a cache hit.
    pub target: String,
    pub started_at: String,
    pub finished_at: String,
    pub outcome: StageOutcome,
    pub cache_hit: bool,
}

/// Final outcome of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RunOutcome {
    Ok,
    Failed { stage: usize },
}

/// Record of one composition execution: which service ran, in which order,
/// with timing and outcome. A failed run has exactly one error record, at
/// its last stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub run_id: String,
    pub composition: String,
    pub started_at: String,
    pub finished_at: String,
    pub stages: Vec<StageRecord>,
    pub outcome: RunOutcome,
}

/// A successful execution: the final envelope and its trace.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub envelope: DocumentEnvelope,
    pub trace: ExecutionTrace,
}

/// Coordinator tuning. Defaults: 300 s cache TTL, 30 s request timeout,
/// 100 ms retry backoff, 2 retries per replica.
#[derive(Debug, Clone)]
pub struct CoordinatorConfig {
    pub cache_ttl: Duration,
    pub request_timeout: Duration,
    pub retry_backoff: Duration,
    pub retries_per_replica: u32,
}

impl Default for CoordinatorConfig {
    fn default() -> Self {
        CoordinatorConfig {
            cache_ttl: Duration::from_secs(300),
            request_timeout: Duration::from_secs(30),
            retry_backoff: Duration::from_millis(100),
            retries_per_replica: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    service: String,
    version: String,
    content_hash: [u8; 32],
}

struct CacheEntry {
    bytes: Vec<u8>,
    inserted_at: Instant,
    ttl: Duration,
}

impl CacheEntry {
    fn fresh(&self) -> bool {
        self.inserted_at.elapsed() < self.ttl
    }
}

/// Response cache keyed by (service, version, request content hash).
/// Expired entries are never served. Identical concurrent misses coalesce
/// on a per-key latch so the backend sees at most one invocation.
#[derive(Default)]
struct ResponseCache {
    entries: RwLock<HashMap<CacheKey, CacheEntry>>,
    inflight: Mutex<HashMap<CacheKey, Arc<Mutex<()>>>>,
}

impl ResponseCache {
    fn get_fresh(&self, key: &CacheKey) -> Option<Vec<u8>> {
        let entries = self.entries.read().expect("cache lock");
        entries
            .get(key)
            .filter(|e| e.fresh())
            .map(|e| e.bytes.clone())
    }

    fn put(&self, key: CacheKey, bytes: Vec<u8>, ttl: Duration) {
        let mut entries = self.entries.write().expect("cache lock");
        if entries.len() > 256 {
            entries.retain(|_, e| e.fresh());
        }
        entries.insert(
            key,
            CacheEntry {
                bytes,
                inserted_at: Instant::now(),
                ttl,
            },
        );
    }

    fn latch(&self, key: &CacheKey) -> Arc<Mutex<()>> {
        let mut inflight = self.inflight.lock().expect("cache lock");
        Arc::clone(inflight.entry(key.clone()).or_default())
    }

    fn release(&self, key: &CacheKey) {
        let mut inflight = self.inflight.lock().expect("cache lock");
        if let Some(latch) = inflight.get(key) {
            if Arc::strong_count(latch) <= 2 {
                inflight.remove(key);
            }
        }
    }
}

/// Round-robin counters, one per service, shared across concurrent runs.
#[derive(Default)]
struct RoundRobin {
    counters: RwLock<HashMap<String, Arc<AtomicUsize>>>,
}

impl RoundRobin {
    fn next(&self, service: &str) -> usize {
        if let Some(counter) = self.counters.read().expect("rr lock").get(service) {
            return counter.fetch_add(1, Ordering::Relaxed);
        }
        let mut counters = self.counters.write().expect("rr lock");
        counters
            .entry(service.to_string())
            .or_default()
            .fetch_add(1, Ordering::Relaxed)
    }
}

/// The coordination component.
pub struct Coordinator {
    registry: Arc<ServiceRegistry>,
    compositions: Arc<CompositionStore>,
    host: Arc<dyn BuiltinHost>,
    transport: Arc<dyn Transport>,
    cache: ResponseCache,
    round_robin: RoundRobin,
    config: CoordinatorConfig,
}

impl Coordinator {
    pub fn new(
        registry: Arc<ServiceRegistry>,
        compositions: Arc<CompositionStore>,
        host: Arc<dyn BuiltinHost>,
        transport: Arc<dyn Transport>,
        config: CoordinatorConfig,
    ) -> Self {
        Coordinator {
            registry,
            compositions,
            host,
            transport,
            cache: ResponseCache::default(),
            round_robin: RoundRobin::default(),
            config,
        }
    }

    pub fn config(&self) -> &CoordinatorConfig {
        &self.config
    }

    /// Execute a composition: the left-to-right fold of service invocation
    /// over the plan's stages, starting from the input envelope. Aborts on
    /// the first stage failure; no partial result is returned, the trace
    /// carries the diagnostics.
    pub fn execute(
        &self,
        name: &str,
        envelope: DocumentEnvelope,
    ) -> Result<RunOutput, ExecuteError> {
        let def = self.compositions.get(name).map_err(|e| match e {
            CompositionError::UnknownComposition(n) => ExecuteError::UnknownComposition(n),
            other => ExecuteError::Plan(other),
        })?;
        for field in &def.initial_fields {
            if !envelope.has_field(field) {
                return Err(ExecuteError::MissingField(field.clone()));
            }
        }
        let plan = self
            .compositions
            .plan(name, &self.registry)
            .map_err(ExecuteError::Plan)?;

        let mut trace = ExecutionTrace {
            run_id: uuid::Uuid::new_v4().to_string(),
            composition: name.to_string(),
            started_at: crate::registry::now_rfc3339(),
            finished_at: String::new(),
            stages: Vec::with_capacity(plan.stages.len()),
            outcome: RunOutcome::Ok,
        };

        let mut current = envelope;
        for (index, stage) in plan.stages.iter().enumerate() {
            let started_at = crate::registry::now_rfc3339();
            match self.cached_invoke_with(&stage.service, current, &stage.params) {
                Ok(invocation) => {
                    trace.stages.push(StageRecord {
                        service: stage.service.clone(),
                        target: invocation.target,
                        started_at,
                        finished_at: crate::registry::now_rfc3339(),
                        outcome: StageOutcome::Ok,
                        cache_hit: invocation.cache_hit,
                    });
                    current = invocation.envelope;
                }
                Err(cause) => {
                    trace.stages.push(StageRecord {
                        service: stage.service.clone(),
                        target: String::new(),
                        started_at,
                        finished_at: crate::registry::now_rfc3339(),
                        outcome: StageOutcome::Error {
                            code: cause.code().to_string(),
                            message: cause.to_string(),
                        },
                        cache_hit: false,
                    });
                    trace.outcome = RunOutcome::Failed { stage: index };
                    trace.finished_at = crate::registry::now_rfc3339();
                    return Err(ExecuteError::Stage {
                        index,
                        service: stage.service.clone(),
                        cause,
                        trace: Box::new(trace),
                    });
                }
            }
        }
        trace.finished_at = crate::registry::now_rfc3339();
        Ok(RunOutput {
            envelope: current,
            trace,
        })
    }

    /// Invoke one service with empty parameters.
    pub fn invoke_atomic(
        &self,
        service: &str,
        envelope: DocumentEnvelope,
    ) -> Result<DocumentEnvelope, InvokeError> {
        self.invoke_atomic_with(service, envelope, &StageParams::new())
            .map(|i| i.envelope)
    }

    /// Invoke one service. Builtin services dispatch in-process; remote
    /// services receive the envelope via `POST <replica>/process`. On
    /// success the returned envelope replaces the input, the descriptor's
    /// `provides` fields are checked, and a provenance record is appended.
    pub fn invoke_atomic_with(
        &self,
        service: &str,
        envelope: DocumentEnvelope,
        params: &StageParams,
    ) -> Result<Invocation, InvokeError> {
        let descriptor = self.registry.resolve(service)?;
        let (mut result, target) = match descriptor.kind {
            ServiceKind::Builtin => {
                let out = self.host.invoke_builtin(service, envelope, params)?;
                (out, "builtin".to_string())
            }
            ServiceKind::Remote => self.invoke_remote(&descriptor, &envelope, params)?,
        };
        for field in &descriptor.provides {
            if !result.has_field(field) {
                return Err(InvokeError::ContractViolation {
                    service: service.to_string(),
                    field: field.clone(),
                });
            }
        }
        result.provenance.push(Provenance {
            service: descriptor.name.clone(),
            version: descriptor.version.clone(),
            timestamp: crate::registry::now_rfc3339(),
        });
        Ok(Invocation {
            envelope: result,
            target,
            cache_hit: false,
        })
    }

    /// Invoke with the response cache in front. Only responses of
    /// descriptors with `cacheable = true` are stored; an unexpired entry
    /// matching (service, version, request content) is returned
    /// byte-identical without invoking the service.
    pub fn cached_invoke(
        &self,
        service: &str,
        envelope: DocumentEnvelope,
    ) -> Result<(DocumentEnvelope, bool), InvokeError> {
        self.cached_invoke_with(service, envelope, &StageParams::new())
            .map(|i| (i.envelope, i.cache_hit))
    }

    pub fn cached_invoke_with(
        &self,
        service: &str,
        envelope: DocumentEnvelope,
        params: &StageParams,
    ) -> Result<Invocation, InvokeError> {
        let descriptor = self.registry.resolve(service)?;
        if !descriptor.cacheable {
            return self.invoke_atomic_with(service, envelope, params);
        }
        let key = cache_key(&descriptor, &envelope, params);
        if let Some(bytes) = self.cache.get_fresh(&key) {
            return Ok(Invocation {
                envelope: decode_cached(service, &bytes)?,
                target: "cache".to_string(),
                cache_hit: true,
            });
        }
        // Coalesce identical concurrent misses: one invocation fills the
        // cache, the rest read it.
        let latch = self.cache.latch(&key);
        let _guard = latch.lock().expect("cache latch");
        if let Some(bytes) = self.cache.get_fresh(&key) {
            self.cache.release(&key);
            return Ok(Invocation {
                envelope: decode_cached(service, &bytes)?,
                target: "cache".to_string(),
                cache_hit: true,
            });
        }
        let outcome = self.invoke_atomic_with(service, envelope, params);
        if let Ok(invocation) = &outcome {
            self.cache.put(
                key.clone(),
                encode_envelope(&invocation.envelope),
                self.config.cache_ttl,
            );
        }
        self.cache.release(&key);
        outcome
    }

    /// Pick the next replica by round-robin over the non-unhealthy replicas
    /// in descriptor order. Replicas that have never been probed count as
    /// routable.
    pub fn select_replica(&self, service: &str) -> Result<(usize, String), InvokeError> {
        let descriptor = self.registry.resolve(service)?;
        if descriptor.kind != ServiceKind::Remote {
            return Err(InvokeError::NotRemote(service.to_string()));
        }
        self.select_replica_from(&descriptor)
    }

    fn select_replica_from(
        &self,
        descriptor: &ServiceDescriptor,
    ) -> Result<(usize, String), InvokeError> {
        let health = self
            .registry
            .health_of(&descriptor.name)
            .map_err(InvokeError::from)?;
        let eligible: Vec<usize> = (0..descriptor.replicas.len())
            .filter(|i| health[*i].state != Health::Unhealthy)
            .collect();
        if eligible.is_empty() {
            return Err(InvokeError::NoHealthyReplica(descriptor.name.clone()));
        }
        let n = self.round_robin.next(&descriptor.name);
        let index = eligible[n % eligible.len()];
        Ok((index, descriptor.replicas[index].clone()))
    }

    fn invoke_remote(
        &self,
        descriptor: &ServiceDescriptor,
        envelope: &DocumentEnvelope,
        params: &StageParams,
    ) -> Result<(DocumentEnvelope, String), InvokeError> {
        let body = encode_envelope(envelope);
        let max_attempts = self.config.retries_per_replica + 1;
        let mut attempts: HashMap<usize, u32> = HashMap::new();
        let mut last_detail = String::new();
        let mut attempted = false;

        loop {
            let open_exists = (0..descriptor.replicas.len()).any(|i| {
                attempts.get(&i).copied().unwrap_or(0) < max_attempts
                    && self
                        .registry
                        .health_of(&descriptor.name)
                        .map(|h| h[i].state != Health::Unhealthy)
                        .unwrap_or(false)
            });
            if !open_exists {
                break;
            }
            let (index, url) = match self.select_replica_from(descriptor) {
                Ok(pick) => pick,
                Err(e) => {
                    if attempted {
                        break;
                    }
                    return Err(e);
                }
            };
            let tried = attempts.entry(index).or_insert(0);
            if *tried >= max_attempts {
                continue;
            }
            if attempted {
                std::thread::sleep(self.config.retry_backoff);
            }
            *tried += 1;
            attempted = true;

            let endpoint = process_url(&url, params);
            match self.transport.post(&endpoint, &body, self.config.request_timeout) {
                Ok(response) if response.is_success() => {
                    let result = decode_envelope(&response.body).map_err(|e| {
                        InvokeError::InvalidResponse {
                            service: descriptor.name.clone(),
                            detail: e.to_string(),
                        }
                    })?;
                    return Ok((result, url));
                }
                Ok(response) => {
                    // The replica spoke HTTP: application-level failure,
                    // passed through without retry.
                    return Err(InvokeError::Application(parse_app_error(&response.body, response.status)));
                }
                Err(transport_error) => {
                    last_detail = transport_error.message;
                    if *attempts.get(&index).expect("attempt recorded") >= max_attempts {
                        self.registry
                            .set_health(&descriptor.name, index, Health::Unhealthy);
                    }
                }
            }
        }

        if attempted {
            Err(InvokeError::Transport {
                service: descriptor.name.clone(),
                detail: last_detail,
            })
        } else {
            Err(InvokeError::NoHealthyReplica(descriptor.name.clone()))
        }
    }
}

/// Result of a single invocation as seen by the coordinator.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub envelope: DocumentEnvelope,
    pub target: String,
    pub cache_hit: bool,
}

fn decode_cached(service: &str, bytes: &[u8]) -> Result<DocumentEnvelope, InvokeError> {
    decode_envelope(bytes).map_err(|e: EnvelopeError| InvokeError::InvalidResponse {
        service: service.to_string(),
        detail: format!("cached response: {e}"),
    })
}

fn cache_key(
    descriptor: &ServiceDescriptor,
    envelope: &DocumentEnvelope,
    params: &StageParams,
) -> CacheKey {
    let mut hasher = Sha256::new();
    hasher.update(encode_envelope(envelope));
    hasher.update([0u8]);
    hasher.update(serde_json::to_vec(params).expect("params serialize"));
    CacheKey {
        service: descriptor.name.clone(),
        version: descriptor.version.clone(),
        content_hash: hasher.finalize().into(),
    }
}

pub(crate) fn percent_encode(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for byte in value.bytes() {
        match byte {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => {
                out.push(byte as char)
            }
            other => out.push_str(&format!("%{other:02X}")),
        }
    }
    out
}

/// The process endpoint of a replica, with stage parameters as a sorted
/// query string.
fn process_url(replica: &str, params: &StageParams) -> String {
    let base = format!("{}/process", replica.trim_end_matches('/'));
    if params.is_empty() {
        return base;
    }
    let query: Vec<String> = params
        .iter()
        .map(|(k, v)| {
            let value = match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            format!("{}={}", percent_encode(k), percent_encode(&value))
        })
        .collect();
    format!("{}?{}", base, query.join("&"))
}

fn parse_app_error(body: &[u8], status: u16) -> AppError {
    if let Ok(err) = serde_json::from_slice::<AppError>(body) {
        if !err.code.is_empty() {
            return err;
        }
    }
    AppError::new(
        format!("http_{status}"),
        String::from_utf8_lossy(body).into_owned(),
    )
}
