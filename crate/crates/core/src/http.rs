//! The HTTP binding of the kernel: one uniform attribute-value surface over
//! the registry, compositions, coordinator, index, vectors, and store.
//!
//! Request and response bodies are UTF-8 attribute-value documents; every
//! process exposes `GET /health` returning `{"status":"ok"}`. When a shared
//! token is configured, mutating (non-GET) endpoints require
//! `Authorization: Bearer <token>`.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::Router;
use serde_json::{json, Value};

use crate::composition::{CompositionError, StageParams};
use crate::coordinator::{AppError, ExecuteError, InvokeError};
use crate::envelope::{
    decode_envelope, encode_envelope, envelope_to_value, DocumentEnvelope, EnvelopeError,
};
use crate::index::IndexError;
use crate::kernel::Kernel;
use crate::registry::RegistryError;
use crate::store::{StoreError, SyncBundle};
use crate::vectors::VectorError;

/// Error shape returned by every endpoint: `{"code":..,"message":..}`.
struct ApiError {
    status: StatusCode,
    code: String,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code: code.into(),
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        json_response(
            self.status,
            &json!({"code": self.code, "message": self.message}),
        )
    }
}

fn json_response(status: StatusCode, value: &Value) -> Response {
    let bytes = serde_json::to_vec(value).expect("response serializes");
    Response::builder()
        .status(status)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(bytes))
        .expect("response builds")
}

fn envelope_response(envelope: &DocumentEnvelope) -> Response {
    Response::builder()
        .status(StatusCode::OK)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(encode_envelope(envelope)))
        .expect("response builds")
}

fn ok_json(value: Value) -> Response {
    json_response(StatusCode::OK, &value)
}

impl From<RegistryError> for ApiError {
    fn from(e: RegistryError) -> Self {
        let status = match &e {
            RegistryError::DuplicateName(_) => StatusCode::CONFLICT,
            RegistryError::InvalidDescriptor(_) => StatusCode::BAD_REQUEST,
            RegistryError::UnknownService(_) => StatusCode::NOT_FOUND,
            RegistryError::ReferencedByComposition { .. } => StatusCode::CONFLICT,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<CompositionError> for ApiError {
    fn from(e: CompositionError) -> Self {
        let status = match &e {
            CompositionError::UnknownComposition(_) => StatusCode::NOT_FOUND,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<EnvelopeError> for ApiError {
    fn from(e: EnvelopeError) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, e.code(), e.to_string())
    }
}

impl From<ExecuteError> for ApiError {
    fn from(e: ExecuteError) -> Self {
        let status = match &e {
            ExecuteError::UnknownComposition(_) => StatusCode::NOT_FOUND,
            ExecuteError::MissingField(_) | ExecuteError::Plan(_) => StatusCode::BAD_REQUEST,
            ExecuteError::Stage { .. } => StatusCode::BAD_GATEWAY,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<InvokeError> for ApiError {
    fn from(e: InvokeError) -> Self {
        let status = match &e {
            InvokeError::UnknownService(_) => StatusCode::NOT_FOUND,
            InvokeError::NotRemote(_) => StatusCode::BAD_REQUEST,
            InvokeError::NoHealthyReplica(_) => StatusCode::SERVICE_UNAVAILABLE,
            InvokeError::Application(_) => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::BAD_GATEWAY,
        };
        match e {
            InvokeError::Application(app) => ApiError::new(status, app.code, app.message),
            other => ApiError::new(status, other.code(), other.to_string()),
        }
    }
}

impl From<AppError> for ApiError {
    fn from(e: AppError) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.code, e.message)
    }
}

impl From<IndexError> for ApiError {
    fn from(e: IndexError) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, e.code(), e.to_string())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::Backend(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<VectorError> for ApiError {
    fn from(e: VectorError) -> Self {
        let status = match &e {
            VectorError::UnknownTerm(_) => StatusCode::NOT_FOUND,
            VectorError::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

fn bad_request(message: impl Into<String>) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
}

/// Run blocking kernel work off the async executor.
async fn blocking<T, F>(f: F) -> T
where
    T: Send + 'static,
    F: FnOnce() -> T + Send + 'static,
{
    tokio::task::spawn_blocking(f).await.expect("blocking task")
}

async fn require_token(
    State(kernel): State<Arc<Kernel>>,
    request: Request,
    next: Next,
) -> Response {
    if request.method() != Method::GET {
        if let Some(expected) = &kernel.settings().token {
            let presented = request
                .headers()
                .get(header::AUTHORIZATION)
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.strip_prefix("Bearer "));
            if presented != Some(expected.as_str()) {
                return ApiError::new(
                    StatusCode::UNAUTHORIZED,
                    "unauthorized",
                    "missing or invalid bearer token",
                )
                .into_response();
            }
        }
    }
    next.run(request).await
}

/// Build the full kernel router.
pub fn router(kernel: Arc<Kernel>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/services", post(register_service).get(list_services))
        .route("/services/{name}", get(get_service).delete(delete_service))
        .route("/services/{name}/health", get(service_health))
        .route(
            "/compositions",
            post(define_composition).get(list_compositions),
        )
        .route("/compositions/{name}", get(get_composition))
        .route("/compositions/{name}/plan", get(get_plan))
        .route("/compositions/{name}/execute", post(execute))
        .route("/runs/{id}", get(get_run))
        .route("/proxy/{service}/process", post(proxy_process))
        .route("/svc/{name}/process", post(svc_process))
        .route("/index", post(index_document))
        .route("/search", get(search))
        .route("/vectors/similarity", get(vector_similarity))
        .route("/vectors/nearest", get(vector_nearest))
        .route("/vectors/center", post(vector_center))
        .route("/vectors/setsim", post(vector_setsim))
        .route("/docs/{id}", put(put_doc).get(get_doc).delete(delete_doc))
        .route("/sync/export", get(sync_export))
        .route("/sync/import", post(sync_import))
        .layer(middleware::from_fn_with_state(
            Arc::clone(&kernel),
            require_token,
        ))
        .with_state(kernel)
}

async fn health() -> Response {
    ok_json(json!({"status": "ok"}))
}

async fn register_service(
    State(kernel): State<Arc<Kernel>>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let descriptor =
        serde_json::from_slice(&body).map_err(|e| bad_request(format!("descriptor: {e}")))?;
    let name = kernel.register_service(descriptor)?;
    Ok(json_response(StatusCode::CREATED, &json!({"name": name})))
}

async fn list_services(State(kernel): State<Arc<Kernel>>) -> Response {
    let services: Vec<Value> = kernel
        .list_services()
        .iter()
        .map(|d| serde_json::to_value(d.as_ref()).expect("descriptor serializes"))
        .collect();
    ok_json(json!({"services": services}))
}

async fn get_service(
    State(kernel): State<Arc<Kernel>>,
    Path(name): Path<String>,
) -> Result<Response, ApiError> {
    let descriptor = kernel.resolve_service(&name)?;
    Ok(ok_json(
        serde_json::to_value(descriptor.as_ref()).expect("descriptor serializes"),
    ))
}

async fn delete_service(
    State(kernel): State<Arc<Kernel>>,
    Path(name): Path<String>,
) -> Result<Response, ApiError> {
    kernel.deregister_service(&name)?;
    Ok(ok_json(json!({"deleted": name})))
}

async fn service_health(
    State(kernel): State<Arc<Kernel>>,
    Path(name): Path<String>,
) -> Result<Response, ApiError> {
    let records = blocking(move || kernel.health_check(&name)).await?;
    Ok(ok_json(json!({
        "replicas": serde_json::to_value(records).expect("health serializes")
    })))
}

async fn define_composition(
    State(kernel): State<Arc<Kernel>>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let def =
        serde_json::from_slice(&body).map_err(|e| bad_request(format!("composition: {e}")))?;
    let name = kernel.define_composition(def)?;
    Ok(json_response(StatusCode::CREATED, &json!({"name": name})))
}

async fn list_compositions(State(kernel): State<Arc<Kernel>>) -> Response {
    let defs: Vec<Value> = kernel
        .list_compositions()
        .iter()
        .map(|d| serde_json::to_value(d.as_ref()).expect("composition serializes"))
        .collect();
    ok_json(json!({"compositions": defs}))
}

async fn get_composition(
    State(kernel): State<Arc<Kernel>>,
    Path(name): Path<String>,
) -> Result<Response, ApiError> {
    let def = kernel.get_composition(&name)?;
    Ok(ok_json(
        serde_json::to_value(def.as_ref()).expect("composition serializes"),
    ))
}

async fn get_plan(
    State(kernel): State<Arc<Kernel>>,
    Path(name): Path<String>,
) -> Result<Response, ApiError> {
    let plan = kernel.plan(&name)?;
    Ok(ok_json(serde_json::to_value(plan).expect("plan serializes")))
}

async fn execute(
    State(kernel): State<Arc<Kernel>>,
    Path(name): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let envelope = decode_envelope(&body)?;
    let run = blocking(move || kernel.execute(&name, envelope)).await?;
    Ok(ok_json(json!({
        "run_id": run.trace.run_id,
        "envelope": envelope_to_value(&run.envelope),
    })))
}

async fn get_run(
    State(kernel): State<Arc<Kernel>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let trace = kernel.run_trace(&id).ok_or_else(|| {
        ApiError::new(StatusCode::NOT_FOUND, "unknown_run", format!("no run {id:?}"))
    })?;
    Ok(ok_json(
        serde_json::to_value(trace).expect("trace serializes"),
    ))
}

async fn proxy_process(
    State(kernel): State<Arc<Kernel>>,
    Path(service): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let envelope = decode_envelope(&body)?;
    let (result, _hit) = blocking(move || kernel.cached_invoke(&service, envelope)).await?;
    Ok(envelope_response(&result))
}

fn params_from_query(query: HashMap<String, String>) -> StageParams {
    query
        .into_iter()
        .map(|(k, v)| (k, Value::String(v)))
        .collect()
}

async fn svc_process(
    State(kernel): State<Arc<Kernel>>,
    Path(name): Path<String>,
    Query(query): Query<HashMap<String, String>>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let envelope = decode_envelope(&body)?;
    let params = params_from_query(query);
    let result = blocking(move || kernel.apply_builtin(&name, envelope, &params)).await?;
    Ok(envelope_response(&result))
}

async fn index_document(
    State(kernel): State<Arc<Kernel>>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let envelope = decode_envelope(&body)?;
    let report = kernel.index_envelope(&envelope)?;
    Ok(ok_json(
        serde_json::to_value(report).expect("report serializes"),
    ))
}

async fn search(
    State(kernel): State<Arc<Kernel>>,
    Query(query): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let q = query
        .get("q")
        .ok_or_else(|| bad_request("missing query parameter q"))?;
    let limit = match query.get("limit") {
        None => 10,
        Some(raw) => raw
            .parse::<usize>()
            .map_err(|_| bad_request("limit must be a non-negative integer"))?,
    };
    let hits = kernel.search(q, limit)?;
    Ok(ok_json(json!({
        "hits": serde_json::to_value(hits).expect("hits serialize")
    })))
}

fn vectors_of(kernel: &Kernel) -> Result<&crate::vectors::VectorModel, ApiError> {
    kernel.vectors().ok_or_else(|| {
        ApiError::new(
            StatusCode::CONFLICT,
            "no_vector_model",
            "no vector model is loaded",
        )
    })
}

async fn vector_similarity(
    State(kernel): State<Arc<Kernel>>,
    Query(query): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let t1 = query.get("t1").ok_or_else(|| bad_request("missing t1"))?;
    let t2 = query.get("t2").ok_or_else(|| bad_request("missing t2"))?;
    let similarity = vectors_of(&kernel)?.similarity(t1, t2)?;
    Ok(ok_json(json!({"similarity": similarity})))
}

async fn vector_nearest(
    State(kernel): State<Arc<Kernel>>,
    Query(query): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let term = query.get("t").ok_or_else(|| bad_request("missing t"))?;
    let k = match query.get("k") {
        None => 10,
        Some(raw) => raw
            .parse::<usize>()
            .map_err(|_| bad_request("k must be a non-negative integer"))?,
    };
    let neighbors: Vec<Value> = vectors_of(&kernel)?
        .nearest(term, k)?
        .into_iter()
        .map(|(term, similarity)| json!({"term": term, "similarity": similarity}))
        .collect();
    Ok(ok_json(json!({"neighbors": neighbors})))
}

fn term_list(value: &Value, key: &str) -> Result<Vec<String>, ApiError> {
    value
        .get(key)
        .and_then(Value::as_array)
        .map(|items| {
            items
                .iter()
                .map(|v| {
                    v.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| bad_request(format!("{key} must be a list of strings")))
                })
                .collect()
        })
        .unwrap_or_else(|| Err(bad_request(format!("missing term list {key:?}"))))
}

async fn vector_center(
    State(kernel): State<Arc<Kernel>>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let value: Value =
        serde_json::from_slice(&body).map_err(|e| bad_request(format!("body: {e}")))?;
    let terms = term_list(&value, "terms")?;
    let (term, similarity) = vectors_of(&kernel)?.cluster_center(&terms)?;
    Ok(ok_json(json!({"term": term, "similarity": similarity})))
}

async fn vector_setsim(
    State(kernel): State<Arc<Kernel>>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let value: Value =
        serde_json::from_slice(&body).map_err(|e| bad_request(format!("body: {e}")))?;
    let a = term_list(&value, "a")?;
    let b = term_list(&value, "b")?;
    let similarity = vectors_of(&kernel)?.set_similarity(&a, &b)?;
    Ok(ok_json(json!({"similarity": similarity})))
}

async fn put_doc(
    State(kernel): State<Arc<Kernel>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let value: Value =
        serde_json::from_slice(&body).map_err(|e| bad_request(format!("body: {e}")))?;
    let doc = blocking(move || kernel.put_document(&id, value)).await?;
    Ok(ok_json(
        serde_json::to_value(doc).expect("document serializes"),
    ))
}

async fn get_doc(
    State(kernel): State<Arc<Kernel>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let doc = kernel.get_document(&id)?;
    Ok(ok_json(
        serde_json::to_value(doc).expect("document serializes"),
    ))
}

async fn delete_doc(
    State(kernel): State<Arc<Kernel>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    blocking(move || kernel.delete_document(&id)).await?;
    Ok(ok_json(json!({"deleted": true})))
}

async fn sync_export(State(kernel): State<Arc<Kernel>>) -> Result<Response, ApiError> {
    let bundle = blocking(move || kernel.sync_export()).await?;
    Ok(ok_json(
        serde_json::to_value(bundle).expect("bundle serializes"),
    ))
}

async fn sync_import(
    State(kernel): State<Arc<Kernel>>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let bundle: SyncBundle =
        serde_json::from_slice(&body).map_err(|e| bad_request(format!("bundle: {e}")))?;
    let report = blocking(move || kernel.sync_merge(&bundle)).await?;
    Ok(ok_json(
        serde_json::to_value(report).expect("report serializes"),
    ))
}

/// Serve the kernel on an already-bound listener until shutdown.
pub async fn serve(kernel: Arc<Kernel>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(kernel)).await
}

/// A server running on its own thread and runtime. Shuts down on drop.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

/// Start the kernel server on a background thread. `addr` may use port 0 to
/// pick an ephemeral port; the bound address is in the returned handle.
pub fn spawn_server(kernel: Arc<Kernel>, addr: &str) -> std::io::Result<ServerHandle> {
    let addr = addr.to_string();
    let (addr_tx, addr_rx) = std::sync::mpsc::channel::<std::io::Result<SocketAddr>>();
    let (shutdown_tx, shutdown_rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .expect("server runtime");
        runtime.block_on(async move {
            let listener = match tokio::net::TcpListener::bind(&addr).await {
                Ok(l) => l,
                Err(e) => {
                    let _ = addr_tx.send(Err(e));
                    return;
                }
            };
            let local = listener.local_addr().expect("bound address");
            let _ = addr_tx.send(Ok(local));
            let app = router(kernel);
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = shutdown_rx.await;
                })
                .await;
        });
    });
    let addr = addr_rx
        .recv()
        .map_err(|_| std::io::Error::other("server thread died before binding"))??;
    Ok(ServerHandle {
        addr,
        shutdown: Some(shutdown_tx),
        thread: Some(thread),
    })
}
