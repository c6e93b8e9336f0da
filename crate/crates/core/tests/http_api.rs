//! End-to-end exercises of the HTTP surface against a live server.

mod common;

use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use cws_core::envelope::{decode_envelope, encode_envelope, DocumentEnvelope};
use cws_core::http::spawn_server;
use cws_core::kernel::Kernel;

use common::{test_kernel, StubService};

fn client() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(10)))
        .build()
        .new_agent()
}

fn get(url: &str) -> (u16, Value) {
    let mut response = client().get(url).call().expect("GET");
    let status = response.status().as_u16();
    let body = response.body_mut().read_to_vec().expect("body");
    (status, serde_json::from_slice(&body).expect("json body"))
}

fn post(url: &str, body: &Value) -> (u16, Value) {
    post_with(url, body, None)
}

fn post_with(url: &str, body: &Value, token: Option<&str>) -> (u16, Value) {
    let bytes = serde_json::to_vec(body).unwrap();
    let mut request = client().post(url).header("content-type", "application/json");
    if let Some(token) = token {
        request = request.header("authorization", format!("Bearer {token}"));
    }
    let mut response = request.send(&bytes[..]).expect("POST");
    let status = response.status().as_u16();
    let body = response.body_mut().read_to_vec().expect("body");
    (status, serde_json::from_slice(&body).expect("json body"))
}

fn start() -> (cws_core::http::ServerHandle, String) {
    let kernel = Arc::new({
        let k = test_kernel();
        k.load_presets().unwrap();
        k
    });
    let handle = spawn_server(kernel, "127.0.0.1:0").expect("server");
    let url = handle.url();
    (handle, url)
}

#[test]
fn health_endpoint_answers_ok() {
    let (_guard, url) = start();
    let (status, body) = get(&format!("{url}/health"));
    assert_eq!(status, 200);
    assert_eq!(body, json!({"status": "ok"}));
}

#[test]
fn service_registry_round_trip() {
    let (_guard, url) = start();

    let (status, body) = get(&format!("{url}/services"));
    assert_eq!(status, 200);
    assert_eq!(body["services"].as_array().unwrap().len(), 10);

    let stub = StubService::spawn_echo("s1");
    let descriptor = json!({
        "name": "echo",
        "kind": "remote",
        "replicas": [stub.url()],
        "requires": ["text"],
        "provides": ["text"],
        "cacheable": false,
        "version": "1.0.0"
    });
    let (status, body) = post(&format!("{url}/services"), &descriptor);
    assert_eq!(status, 201);
    assert_eq!(body["name"], "echo");

    // Duplicate registration conflicts.
    let (status, body) = post(&format!("{url}/services"), &descriptor);
    assert_eq!(status, 409);
    assert_eq!(body["code"], "duplicate_name");

    let (status, body) = get(&format!("{url}/services/echo"));
    assert_eq!(status, 200);
    assert_eq!(body["replicas"][0], stub.url());

    let (status, body) = get(&format!("{url}/services/echo/health"));
    assert_eq!(status, 200);
    assert_eq!(body["replicas"][0]["state"], "healthy");

    let (status, _) = get(&format!("{url}/services/ghost"));
    assert_eq!(status, 404);

    // The builtin referenced by presets cannot be deregistered.
    let mut response = client()
        .delete(format!("{url}/services/tokenize"))
        .call()
        .unwrap();
    assert_eq!(response.status().as_u16(), 409);
    let body: Value =
        serde_json::from_slice(&response.body_mut().read_to_vec().unwrap()).unwrap();
    assert_eq!(body["code"], "referenced_by_composition");

    // An unreferenced service deregisters and disappears.
    let response = client().delete(format!("{url}/services/echo")).call().unwrap();
    assert_eq!(response.status().as_u16(), 200);
    let (status, _) = get(&format!("{url}/services/echo"));
    assert_eq!(status, 404);
}

#[test]
fn composition_definition_and_planning() {
    let (_guard, url) = start();

    let (status, body) = get(&format!("{url}/compositions"));
    assert_eq!(status, 200);
    assert_eq!(body["compositions"].as_array().unwrap().len(), 4);

    let def = json!({
        "name": "kw2",
        "stages": [
            {"service": "tokenize"},
            {"service": "extract_keywords", "params": {"n": 2}}
        ],
        "initial_fields": ["text"]
    });
    let (status, body) = post(&format!("{url}/compositions"), &def);
    assert_eq!(status, 201);
    assert_eq!(body["name"], "kw2");

    let (status, body) = get(&format!("{url}/compositions/kw2/plan"));
    assert_eq!(status, 200);
    let stages = body["stages"].as_array().unwrap();
    assert_eq!(stages.len(), 2);
    assert_eq!(stages[0]["service"], "tokenize");
    assert_eq!(stages[0]["mode"], "builtin");

    // A broken definition is rejected with the offending stage.
    let bad = json!({
        "name": "bad",
        "stages": [{"service": "stopfilter"}],
        "initial_fields": ["text"]
    });
    let (status, body) = post(&format!("{url}/compositions"), &bad);
    assert_eq!(status, 400);
    assert_eq!(body["code"], "incompatible_stages");

    let (status, body) = get(&format!("{url}/compositions/nope"));
    assert_eq!(status, 404);
    assert_eq!(body["code"], "unknown_composition");
}

#[test]
fn execute_returns_envelope_and_trace() {
    let (_guard, url) = start();

    let envelope = DocumentEnvelope::from_text("doc-1", "Cats purr. Cats sleep. Dogs bark.");
    let (status, body) = post(
        &format!("{url}/compositions/summ/execute"),
        &cws_core::envelope::envelope_to_value(&envelope),
    );
    assert_eq!(status, 200);
    let run_id = body["run_id"].as_str().unwrap();
    assert!(body["envelope"]["summary"].as_array().is_some());
    assert_eq!(body["envelope"]["language"], "en");

    let (status, trace) = get(&format!("{url}/runs/{run_id}"));
    assert_eq!(status, 200);
    assert_eq!(trace["composition"], "summ");
    assert_eq!(trace["stages"].as_array().unwrap().len(), 3);
    assert_eq!(trace["outcome"]["status"], "ok");

    let (status, _) = get(&format!("{url}/runs/not-a-run"));
    assert_eq!(status, 404);

    // Missing initial field.
    let (status, body) = post(
        &format!("{url}/compositions/summ/execute"),
        &json!({"id": "x"}),
    );
    assert_eq!(status, 400);
    assert_eq!(body["code"], "missing_field");

    let (status, _) = post(
        &format!("{url}/compositions/missing/execute"),
        &json!({"id": "x", "text": "t"}),
    );
    assert_eq!(status, 404);
}

#[test]
fn svc_and_proxy_paths_apply_services() {
    let (_guard, url) = start();

    let body = encode_envelope(&DocumentEnvelope::from_text("d", "a b"));
    let mut response = client()
        .post(format!("{url}/svc/tokenize/process"))
        .header("content-type", "application/json")
        .send(&body[..])
        .unwrap();
    assert_eq!(response.status().as_u16(), 200);
    let env = decode_envelope(&response.body_mut().read_to_vec().unwrap()).unwrap();
    assert_eq!(env.tokens.as_ref().unwrap().len(), 2);
    // The raw service path appends no provenance.
    assert!(env.provenance.is_empty());

    // Same service through the reverse-proxy path does add provenance.
    let mut response = client()
        .post(format!("{url}/proxy/tokenize/process"))
        .header("content-type", "application/json")
        .send(&body[..])
        .unwrap();
    assert_eq!(response.status().as_u16(), 200);
    let env = decode_envelope(&response.body_mut().read_to_vec().unwrap()).unwrap();
    assert_eq!(env.provenance.len(), 1);
    assert_eq!(env.provenance[0].service, "tokenize");

    // Service params travel as query parameters.
    let with_sentences = {
        let mut e = DocumentEnvelope::from_text("d", "");
        e.sentences = Some(vec![
            "Cats purr often.".to_string(),
            "Dogs bark loudly.".to_string(),
            "Cats sleep.".to_string(),
        ]);
        encode_envelope(&e)
    };
    let mut response = client()
        .post(format!("{url}/svc/summarize/process?k=1"))
        .header("content-type", "application/json")
        .send(&with_sentences[..])
        .unwrap();
    assert_eq!(response.status().as_u16(), 200);
    let env = decode_envelope(&response.body_mut().read_to_vec().unwrap()).unwrap();
    assert_eq!(env.summary.unwrap().len(), 1);

    // Application errors surface as {code, message}.
    let (status, body) = post(&format!("{url}/svc/lemmatize/process"), &json!({"id": "d"}));
    assert_eq!(status, 422);
    assert_eq!(body["code"], "missing_field");

    let (status, body) = post(&format!("{url}/proxy/ghost/process"), &json!({"id": "d"}));
    assert_eq!(status, 404);
    assert_eq!(body["code"], "unknown_service");
}

#[test]
fn proxy_routes_to_remote_replicas_with_caching() {
    let (_guard, url) = start();
    let stub = StubService::spawn_echo("backend-1");
    let descriptor = json!({
        "name": "remote-echo",
        "kind": "remote",
        "replicas": [stub.url()],
        "requires": ["text"],
        "provides": ["text"],
        "cacheable": true,
        "version": "2.0.0"
    });
    let (status, _) = post(&format!("{url}/services"), &descriptor);
    assert_eq!(status, 201);

    let body = encode_envelope(&DocumentEnvelope::from_text("d", "through the gateway"));
    let mut first = client()
        .post(format!("{url}/proxy/remote-echo/process"))
        .header("content-type", "application/json")
        .send(&body[..])
        .unwrap();
    assert_eq!(first.status().as_u16(), 200);
    let first_bytes = first.body_mut().read_to_vec().unwrap();
    let env = decode_envelope(&first_bytes).unwrap();
    assert_eq!(env.attrs["stub"], json!("backend-1"));
    assert_eq!(env.provenance.len(), 1);
    assert_eq!(env.provenance[0].version, "2.0.0");

    // An identical request is served from the gateway cache byte-for-byte.
    let mut second = client()
        .post(format!("{url}/proxy/remote-echo/process"))
        .header("content-type", "application/json")
        .send(&body[..])
        .unwrap();
    let second_bytes = second.body_mut().read_to_vec().unwrap();
    assert_eq!(first_bytes, second_bytes);
    assert_eq!(stub.process_hits(), 1);
}

#[test]
fn mixed_builtin_and_remote_pipeline_executes() {
    let (_guard, url) = start();
    let stub = StubService::spawn_echo("annotator");
    let descriptor = json!({
        "name": "annotate",
        "kind": "remote",
        "replicas": [stub.url()],
        "requires": ["text"],
        "provides": ["text"],
        "cacheable": false,
        "version": "1"
    });
    let (status, _) = post(&format!("{url}/services"), &descriptor);
    assert_eq!(status, 201);
    let (status, _) = post(
        &format!("{url}/compositions"),
        &json!({
            "name": "mixed",
            "stages": [{"service": "annotate"}, {"service": "tokenize"}],
            "initial_fields": ["text"]
        }),
    );
    assert_eq!(status, 201);

    let envelope = DocumentEnvelope::from_text("d", "alpha beta");
    let (status, body) = post(
        &format!("{url}/compositions/mixed/execute"),
        &cws_core::envelope::envelope_to_value(&envelope),
    );
    assert_eq!(status, 200);
    assert_eq!(body["envelope"]["attrs"]["stub"], json!("annotator"));
    assert_eq!(body["envelope"]["tokens"].as_array().unwrap().len(), 2);

    // The trace names the replica for the remote stage and the builtin
    // dispatch for the second.
    let run_id = body["run_id"].as_str().unwrap();
    let (_, trace) = get(&format!("{url}/runs/{run_id}"));
    assert_eq!(trace["stages"][0]["target"], json!(stub.url()));
    assert_eq!(trace["stages"][1]["target"], json!("builtin"));
}

#[test]
fn malformed_envelopes_are_rejected_with_offset() {
    let (_guard, url) = start();
    let mut response = client()
        .post(format!("{url}/svc/tokenize/process"))
        .header("content-type", "application/json")
        .send(&b"{\"id\": \"x\", "[..])
        .unwrap();
    assert_eq!(response.status().as_u16(), 400);
    let body: Value =
        serde_json::from_slice(&response.body_mut().read_to_vec().unwrap()).unwrap();
    assert_eq!(body["code"], "malformed_envelope");
    assert!(body["message"].as_str().unwrap().contains("byte"));
}

#[test]
fn index_and_search_endpoints() {
    let (_guard, url) = start();

    // Prepare an envelope through the clp pipeline, then index it.
    let envelope = DocumentEnvelope::from_text("doc-9", "Cats purr. Machines learn quickly.");
    let (status, body) = post(
        &format!("{url}/compositions/clp/execute"),
        &cws_core::envelope::envelope_to_value(&envelope),
    );
    assert_eq!(status, 200);
    let (status, report) = post(&format!("{url}/index"), &body["envelope"]);
    assert_eq!(status, 200);
    assert_eq!(report["doc_id"], "doc-9");
    assert!(report["indexed"].as_u64().unwrap() > 0);

    let (status, hits) = get(&format!("{url}/search?q=purr&limit=5"));
    assert_eq!(status, 200);
    assert_eq!(hits["hits"][0]["doc"], "doc-9");

    let (status, body) = get(&format!("{url}/search?q=the"));
    assert_eq!(status, 400);
    assert_eq!(body["code"], "empty_query");

    let (status, body) = post(&format!("{url}/index"), &json!({"id": "no-tokens"}));
    assert_eq!(status, 400);
    assert_eq!(body["code"], "missing_lemmas");
}

#[test]
fn vector_endpoints_answer_queries() {
    let (_guard, url) = start();

    let (status, body) = get(&format!("{url}/vectors/similarity?t1=cat&t2=cat"));
    assert_eq!(status, 200);
    assert!((body["similarity"].as_f64().unwrap() - 1.0).abs() < 1e-9);

    let (status, body) = get(&format!("{url}/vectors/nearest?t=cat&k=2"));
    assert_eq!(status, 200);
    assert_eq!(body["neighbors"][0]["term"], "kitten");

    let (status, body) = post(
        &format!("{url}/vectors/center"),
        &json!({"terms": ["cat", "kitten", "dog"]}),
    );
    assert_eq!(status, 200);
    assert!(body["term"].is_string());

    let (status, body) = post(
        &format!("{url}/vectors/setsim"),
        &json!({"a": ["cat", "dog"], "b": ["computer"]}),
    );
    assert_eq!(status, 200);
    assert!(body["similarity"].is_f64());

    let (status, body) = get(&format!("{url}/vectors/similarity?t1=cat&t2=unicorn"));
    assert_eq!(status, 404);
    assert_eq!(body["code"], "unknown_term");
}

#[test]
fn docs_and_sync_between_two_servers() {
    let (_guard_a, url_a) = start();
    let (_guard_b, url_b) = start();

    let mut response = client()
        .put(format!("{url_a}/docs/note-1"))
        .header("content-type", "application/json")
        .send(&serde_json::to_vec(&json!({"body": "hello"})).unwrap()[..])
        .unwrap();
    assert_eq!(response.status().as_u16(), 200);
    let doc: Value = serde_json::from_slice(&response.body_mut().read_to_vec().unwrap()).unwrap();
    assert_eq!(doc["version"], 1);

    let (status, doc) = get(&format!("{url_a}/docs/note-1"));
    assert_eq!(status, 200);
    assert_eq!(doc["body"]["body"], "hello");

    let (status, _) = get(&format!("{url_a}/docs/missing"));
    assert_eq!(status, 404);

    // Pull A's bundle into B.
    let (status, bundle) = get(&format!("{url_a}/sync/export"));
    assert_eq!(status, 200);
    let (status, report) = post(&format!("{url_b}/sync/import"), &bundle);
    assert_eq!(status, 200);
    assert_eq!(report["applied"], 1);

    let (status, doc) = get(&format!("{url_b}/docs/note-1"));
    assert_eq!(status, 200);
    assert_eq!(doc["origin"], "test-node");

    // Idempotent re-import.
    let (_, report) = post(&format!("{url_b}/sync/import"), &bundle);
    assert_eq!(report["applied"], 0);

    // Delete locally.
    let response = client().delete(format!("{url_a}/docs/note-1")).call().unwrap();
    assert_eq!(response.status().as_u16(), 200);
    let (status, _) = get(&format!("{url_a}/docs/note-1"));
    assert_eq!(status, 404);
}

#[test]
fn bearer_token_guards_mutating_endpoints() {
    let kernel = Arc::new(
        Kernel::builder()
            .resources(common::test_resources())
            .token(Some("sesame".to_string()))
            .build()
            .unwrap(),
    );
    kernel.load_presets().unwrap();
    let handle = spawn_server(kernel, "127.0.0.1:0").expect("server");
    let url = handle.url();

    // GET stays open.
    let (status, _) = get(&format!("{url}/services"));
    assert_eq!(status, 200);

    // Mutations need the token.
    let envelope = cws_core::envelope::envelope_to_value(&DocumentEnvelope::from_text("d", "x"));
    let (status, body) = post(&format!("{url}/compositions/clp/execute"), &envelope);
    assert_eq!(status, 401);
    assert_eq!(body["code"], "unauthorized");

    let (status, _) = post_with(
        &format!("{url}/compositions/clp/execute"),
        &envelope,
        Some("sesame"),
    );
    assert_eq!(status, 200);

    let (status, _) = post_with(
        &format!("{url}/compositions/clp/execute"),
        &envelope,
        Some("wrong"),
    );
    assert_eq!(status, 401);
}
