//! Exercises of the `cws` binary: exit codes, output, and the invariant
//! that CLI and HTTP behavior never diverge on the same input.

mod common;

use std::path::PathBuf;
use std::process::{Command, Output};
use std::sync::Arc;

use serde_json::json;

use cws_core::config::{build_kernel, load_config};
use cws_core::http::spawn_server;

fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .canonicalize()
        .expect("fixtures directory")
}

fn cws(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cws"))
        .args(args)
        .env_remove("CWS_TOKEN")
        .env_remove("CWS_SERVER")
        .output()
        .expect("run cws")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).to_string()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).to_string()
}

/// A server built from the shipped fixtures config, on an ephemeral port.
fn fixtures_server() -> (cws_core::http::ServerHandle, String) {
    let config_path = fixtures_dir().join("config.json");
    let (config, base) = load_config(&config_path).unwrap();
    let kernel = build_kernel(&config, &base).unwrap();
    kernel.load_presets().unwrap();
    let handle = spawn_server(Arc::new(kernel), "127.0.0.1:0").expect("server");
    let url = handle.url();
    (handle, url)
}

#[test]
fn no_arguments_is_a_usage_error() {
    let output = cws(&[]);
    assert_eq!(output.status.code(), Some(2));
    let help = format!("{}{}", stdout(&output), stderr(&output));
    assert!(help.contains("Usage"), "synopsis missing: {help}");
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let output = cws(&["frobnicate"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    let output = cws(&["--help"]);
    assert_eq!(output.status.code(), Some(0));
    assert!(stdout(&output).contains("serve"));
}

#[test]
fn run_summ_prints_summary_sentences() {
    let fixtures = fixtures_dir();
    let config = fixtures.join("config.json");
    let sample = fixtures.join("sample.txt");
    let output = cws(&[
        "run",
        "summ",
        "--in",
        sample.to_str().unwrap(),
        "-c",
        config.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let lines: Vec<String> = stdout(&output).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 3); // default k = 3
    let text = std::fs::read_to_string(&sample).unwrap();
    for line in &lines {
        assert!(text.contains(line), "summary line not from input: {line}");
    }
}

#[test]
fn run_unknown_composition_exits_one() {
    let fixtures = fixtures_dir();
    let output = cws(&[
        "run",
        "missing",
        "--in",
        fixtures.join("sample.txt").to_str().unwrap(),
        "-c",
        fixtures.join("config.json").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("unknown composition"));
}

#[test]
fn run_writes_canonical_envelope_to_out_file() {
    let fixtures = fixtures_dir();
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("result.json");
    let output = cws(&[
        "run",
        "clp",
        "--in",
        fixtures.join("sample.txt").to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
        "-c",
        fixtures.join("config.json").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let bytes = std::fs::read(&out_path).unwrap();
    let envelope = cws_core::decode_envelope(&bytes).unwrap();
    assert!(envelope.tokens.is_some());
    // Canonical form: re-encoding reproduces the file bytes.
    assert_eq!(cws_core::encode_envelope(&envelope), bytes);
}

#[test]
fn sim_and_near_use_the_configured_vector_model() {
    let fixtures = fixtures_dir();
    let config = fixtures.join("config.json");
    let output = cws(&["sim", "cat", "cat", "-c", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    assert_eq!(stdout(&output).trim(), "1.00000000");

    let output = cws(&["near", "cat", "-k", "2", "-c", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(0));
    let lines: Vec<String> = stdout(&output).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("kitten\t"));

    let output = cws(&["sim", "cat", "unicorn", "-c", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("unknown term"));
}

#[test]
fn cli_and_http_never_diverge_on_the_same_input() {
    let (_guard, url) = fixtures_server();
    let fixtures = fixtures_dir();
    let sample = fixtures.join("sample.txt");
    let config = fixtures.join("config.json");

    let local = cws(&[
        "run",
        "summ",
        "--in",
        sample.to_str().unwrap(),
        "-c",
        config.to_str().unwrap(),
    ]);
    let over_http = cws(&[
        "run",
        "summ",
        "--in",
        sample.to_str().unwrap(),
        "--server",
        &url,
    ]);
    assert_eq!(local.status.code(), Some(0), "{}", stderr(&local));
    assert_eq!(over_http.status.code(), Some(0), "{}", stderr(&over_http));
    assert_eq!(stdout(&local), stdout(&over_http));

    // Same equivalence for the vector queries.
    let local = cws(&["sim", "cat", "dog", "-c", config.to_str().unwrap()]);
    let over_http = cws(&["sim", "cat", "dog", "--server", &url]);
    assert_eq!(stdout(&local), stdout(&over_http));
}

#[test]
fn register_and_compose_against_a_server() {
    let (_guard, url) = fixtures_server();
    let fixtures = fixtures_dir();

    let output = cws(&[
        "compose",
        "-f",
        fixtures.join("examples/composition.json").to_str().unwrap(),
        "--server",
        &url,
    ]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    assert_eq!(stdout(&output).trim(), "keywords-top5");

    // The freshly composed pipeline runs over HTTP.
    let output = cws(&[
        "run",
        "keywords-top5",
        "--in",
        fixtures.join("sample.txt").to_str().unwrap(),
        "--server",
        &url,
    ]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let first = stdout(&output).lines().next().unwrap().to_string();
    assert!(first.starts_with("cat\t") || first.starts_with("cats\t"), "{first}");

    // Registering a descriptor file works and lists back.
    let output = cws(&[
        "register",
        "-f",
        fixtures
            .join("examples/remote_service.json")
            .to_str()
            .unwrap(),
        "--server",
        &url,
    ]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    assert_eq!(stdout(&output).trim(), "uppercase");
}

#[test]
fn cws_token_env_authorizes_mutations() {
    // A server that requires a bearer token.
    let kernel = {
        let k = cws_core::kernel::Kernel::builder()
            .resources(common::test_resources())
            .token(Some("sesame".to_string()))
            .build()
            .unwrap();
        k.load_presets().unwrap();
        Arc::new(k)
    };
    let handle = spawn_server(kernel, "127.0.0.1:0").unwrap();
    let url = handle.url();
    let fixtures = fixtures_dir();
    let comp = fixtures.join("examples/composition.json");

    // Without the token the mutation is refused.
    let output = cws(&["compose", "-f", comp.to_str().unwrap(), "--server", &url]);
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("unauthorized"));

    // With CWS_TOKEN set the same command succeeds.
    let output = Command::new(env!("CARGO_BIN_EXE_cws"))
        .args(["compose", "-f", comp.to_str().unwrap(), "--server", &url])
        .env("CWS_TOKEN", "sesame")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    assert_eq!(stdout(&output).trim(), "keywords-top5");
}

#[test]
fn journal_store_carries_the_index_across_cli_runs() {
    let fixtures = fixtures_dir();
    let dir = tempfile::tempdir().unwrap();
    // A config pointing at the shipped resources but with a journal store
    // local to this test.
    let config_path = dir.path().join("config.json");
    std::fs::write(
        &config_path,
        json!({
            "node_id": "cli-journal",
            "resources": {
                "stoplist": fixtures.join("stoplist_en.txt"),
                "lexicon": fixtures.join("lexicon_en.tsv"),
                "term_lexicon": fixtures.join("terms_en.txt"),
                "profile_corpora": {"en": fixtures.join("corpus_en.txt")}
            },
            "store": {"backend": "journal", "path": "docs.journal"}
        })
        .to_string(),
    )
    .unwrap();

    let output = cws(&[
        "run",
        "ontoprep",
        "--in",
        fixtures.join("sample.txt").to_str().unwrap(),
        "-c",
        config_path.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));

    // A separate process finds the persisted index.
    let output = cws(&["search", "cats", "-c", config_path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    assert!(!stdout(&output).trim().is_empty(), "no hits after restart");
}

#[test]
fn sync_pulls_and_pushes_between_kernels() {
    let (_guard_a, url_a) = fixtures_server();
    let (_guard_b, url_b) = fixtures_server();

    // Seed a document on A over HTTP.
    let agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .new_agent();
    let body = serde_json::to_vec(&json!({"note": "from-a"})).unwrap();
    let response = agent
        .put(format!("{url_a}/docs/shared-1"))
        .header("content-type", "application/json")
        .send(&body[..])
        .unwrap();
    assert_eq!(response.status().as_u16(), 200);

    // B pulls from A, then pushes its own (empty) state back.
    let output = cws(&["sync", "--peer", &url_a, "--server", &url_b]);
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let log = stdout(&output);
    assert!(log.contains("pull: 1 applied"), "{log}");

    let mut response = agent.get(format!("{url_b}/docs/shared-1")).call().unwrap();
    assert_eq!(response.status().as_u16(), 200);
    let doc: serde_json::Value =
        serde_json::from_slice(&response.body_mut().read_to_vec().unwrap()).unwrap();
    assert_eq!(doc["body"]["note"], "from-a");
}
