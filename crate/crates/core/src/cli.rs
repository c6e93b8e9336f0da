//! The operator command line.
//!
//! Commands run against a local kernel built from the config file, or over
//! HTTP against a running kernel when `--server` is given; the two paths
//! never diverge on the same input. Exit codes: 0 success, 1 application
//! error, 2 usage error.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde_json::Value;

use crate::config::{build_kernel, load_config, ServeConfig};
use crate::coordinator::percent_encode;
use crate::envelope::{envelope_to_value, DocumentEnvelope};
use crate::kernel::Kernel;

#[derive(Parser)]
#[command(
    name = "cws",
    version,
    about = "Composite web service coordination kernel",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    /// Config file (attribute-value document) for serve and local commands.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Base URL of a running kernel; when set, commands go over HTTP.
    #[arg(long, global = true, env = "CWS_SERVER")]
    server: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start the kernel HTTP server with the builtin services and presets.
    Serve,
    /// Register a service descriptor from a file.
    Register {
        #[arg(short, long)]
        file: PathBuf,
    },
    /// Define a composition from a file.
    Compose {
        #[arg(short, long)]
        file: PathBuf,
    },
    /// Execute a composition on a plain-text input file.
    Run {
        composition: String,
        /// Input text file.
        #[arg(long = "in")]
        input: PathBuf,
        /// Write the result envelope to this file.
        #[arg(long = "out")]
        output: Option<PathBuf>,
    },
    /// Full-text search over indexed documents.
    Search {
        query: String,
        #[arg(long, default_value_t = 10)]
        limit: usize,
    },
    /// Cosine similarity between two terms of the vector model.
    Sim { term1: String, term2: String },
    /// Nearest semantic associates of a term.
    Near {
        term: String,
        #[arg(short, default_value_t = 10)]
        k: usize,
    },
    /// Exchange store snapshots with a peer kernel (pull, then push).
    Sync {
        #[arg(long)]
        peer: String,
    },
}

/// Parse and dispatch. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(message) => {
            eprintln!("error: {message}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Serve => serve(cli.config),
        Command::Register { file } => register(cli.config, cli.server, file),
        Command::Compose { file } => compose(cli.config, cli.server, file),
        Command::Run {
            composition,
            input,
            output,
        } => run_composition(cli.config, cli.server, &composition, input, output),
        Command::Search { query, limit } => search(cli.config, cli.server, &query, limit),
        Command::Sim { term1, term2 } => sim(cli.config, cli.server, &term1, &term2),
        Command::Near { term, k } => near(cli.config, cli.server, &term, k),
        Command::Sync { peer } => sync(cli.config, cli.server, &peer),
    }
}

fn load(config_path: Option<PathBuf>) -> Result<(ServeConfig, PathBuf), String> {
    match config_path {
        Some(path) => load_config(&path).map_err(|e| e.to_string()),
        None => Ok((ServeConfig::default(), PathBuf::from("."))),
    }
}

fn local_kernel(config_path: Option<PathBuf>) -> Result<Arc<Kernel>, String> {
    let (config, base) = load(config_path)?;
    let kernel = build_kernel(&config, &base).map_err(|e| e.to_string())?;
    kernel.load_presets().map_err(|e| e.to_string())?;
    // With a journal-backed store, a previously persisted index carries
    // over between CLI invocations.
    let _ = kernel.load_index();
    Ok(Arc::new(kernel))
}

fn serve(config_path: Option<PathBuf>) -> Result<(), String> {
    let (config, base) = load(config_path)?;
    let kernel = build_kernel(&config, &base).map_err(|e| e.to_string())?;
    let presets = kernel.load_presets().map_err(|e| e.to_string())?;
    let kernel = Arc::new(kernel);
    let addr = config.listen_addr().to_string();

    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| format!("bind {addr}: {e}"))?;
        let local = listener.local_addr().map_err(|e| e.to_string())?;
        eprintln!(
            "cws kernel listening on http://{local} (node {}, presets: {})",
            kernel.settings().node_id,
            presets.join(", ")
        );
        let app = crate::http::router(kernel);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| e.to_string())
    })
}

// --- HTTP client helpers (server mode) ---

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(60)))
        .build()
        .new_agent()
}

fn bearer() -> Option<String> {
    std::env::var("CWS_TOKEN")
        .ok()
        .filter(|t| !t.is_empty())
        .map(|t| format!("Bearer {t}"))
}

fn parse_response(status: u16, body: &[u8]) -> Result<Value, String> {
    let value: Value = serde_json::from_slice(body)
        .map_err(|e| format!("invalid response (status {status}): {e}"))?;
    if (200..300).contains(&status) {
        Ok(value)
    } else {
        let code = value["code"].as_str().unwrap_or("error");
        let message = value["message"].as_str().unwrap_or("unknown error");
        Err(format!("{code}: {message}"))
    }
}

fn http_get(url: &str) -> Result<Value, String> {
    let mut request = agent().get(url);
    if let Some(auth) = bearer() {
        request = request.header("authorization", auth);
    }
    let mut response = request.call().map_err(|e| e.to_string())?;
    let status = response.status().as_u16();
    let body = response.body_mut().read_to_vec().map_err(|e| e.to_string())?;
    parse_response(status, &body)
}

fn http_post(url: &str, body: &Value) -> Result<Value, String> {
    let bytes = serde_json::to_vec(body).expect("body serializes");
    let mut request = agent().post(url).header("content-type", "application/json");
    if let Some(auth) = bearer() {
        request = request.header("authorization", auth);
    }
    let mut response = request.send(&bytes[..]).map_err(|e| e.to_string())?;
    let status = response.status().as_u16();
    let body = response.body_mut().read_to_vec().map_err(|e| e.to_string())?;
    parse_response(status, &body)
}

fn base_url(server: &str) -> String {
    server.trim_end_matches('/').to_string()
}

// --- subcommands ---

fn read_json_file(path: &PathBuf) -> Result<Value, String> {
    let content =
        std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&content).map_err(|e| format!("{}: {e}", path.display()))
}

fn register(
    config: Option<PathBuf>,
    server: Option<String>,
    file: PathBuf,
) -> Result<(), String> {
    let value = read_json_file(&file)?;
    let name = match server {
        Some(server) => http_post(&format!("{}/services", base_url(&server)), &value)?["name"]
            .as_str()
            .unwrap_or_default()
            .to_string(),
        None => {
            let descriptor =
                serde_json::from_value(value).map_err(|e| format!("descriptor: {e}"))?;
            local_kernel(config)?
                .register_service(descriptor)
                .map_err(|e| e.to_string())?
        }
    };
    println!("{name}");
    Ok(())
}

fn compose(config: Option<PathBuf>, server: Option<String>, file: PathBuf) -> Result<(), String> {
    let value = read_json_file(&file)?;
    let name = match server {
        Some(server) => http_post(&format!("{}/compositions", base_url(&server)), &value)?
            ["name"]
            .as_str()
            .unwrap_or_default()
            .to_string(),
        None => {
            let def = serde_json::from_value(value).map_err(|e| format!("composition: {e}"))?;
            local_kernel(config)?
                .define_composition(def)
                .map_err(|e| e.to_string())?
        }
    };
    println!("{name}");
    Ok(())
}

fn run_composition(
    config: Option<PathBuf>,
    server: Option<String>,
    composition: &str,
    input: PathBuf,
    output: Option<PathBuf>,
) -> Result<(), String> {
    let text =
        std::fs::read_to_string(&input).map_err(|e| format!("{}: {e}", input.display()))?;
    let envelope = DocumentEnvelope::from_text(uuid::Uuid::new_v4().to_string(), text);

    let result: DocumentEnvelope = match server {
        Some(server) => {
            let url = format!(
                "{}/compositions/{}/execute",
                base_url(&server),
                percent_encode(composition)
            );
            let response = http_post(&url, &envelope_to_value(&envelope))?;
            crate::envelope::envelope_from_value(response["envelope"].clone())
                .map_err(|e| e.to_string())?
        }
        None => {
            let kernel = local_kernel(config)?;
            let result = kernel
                .execute(composition, envelope)
                .map_err(|e| e.to_string())?
                .envelope;
            if kernel.index_doc_count() > 0 {
                let _ = kernel.persist_index();
            }
            result
        }
    };

    if let Some(path) = &output {
        std::fs::write(path, crate::envelope::encode_envelope(&result))
            .map_err(|e| format!("{}: {e}", path.display()))?;
    }
    print_envelope(&result);
    Ok(())
}

/// Human-oriented rendering: summaries and keywords print as lines, other
/// results print as the full attribute-value document.
fn print_envelope(envelope: &DocumentEnvelope) {
    if let Some(summary) = &envelope.summary {
        for sentence in summary {
            println!("{sentence}");
        }
    } else if let Some(keywords) = &envelope.keywords {
        for (term, score) in keywords {
            println!("{term}\t{score:.6}");
        }
    } else {
        let value = envelope_to_value(envelope);
        println!(
            "{}",
            serde_json::to_string_pretty(&value).expect("envelope serializes")
        );
    }
}

fn search(
    config: Option<PathBuf>,
    server: Option<String>,
    query: &str,
    limit: usize,
) -> Result<(), String> {
    let hits: Vec<(String, f64)> = match server {
        Some(server) => {
            let url = format!(
                "{}/search?q={}&limit={limit}",
                base_url(&server),
                percent_encode(query)
            );
            http_get(&url)?["hits"]
                .as_array()
                .map(|hits| {
                    hits.iter()
                        .map(|h| {
                            (
                                h["doc"].as_str().unwrap_or_default().to_string(),
                                h["score"].as_f64().unwrap_or_default(),
                            )
                        })
                        .collect()
                })
                .unwrap_or_default()
        }
        None => local_kernel(config)?
            .search(query, limit)
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|h| (h.doc, h.score))
            .collect(),
    };
    for (doc, score) in hits {
        println!("{doc}\t{score:.6}");
    }
    Ok(())
}

fn with_vectors<T>(
    config: Option<PathBuf>,
    f: impl FnOnce(&crate::vectors::VectorModel) -> Result<T, String>,
) -> Result<T, String> {
    let kernel = local_kernel(config)?;
    let model = kernel
        .vectors()
        .ok_or_else(|| "no vector model is loaded (set resources.vectors in the config)".to_string())?;
    f(model)
}

fn sim(
    config: Option<PathBuf>,
    server: Option<String>,
    term1: &str,
    term2: &str,
) -> Result<(), String> {
    let similarity = match server {
        Some(server) => {
            let url = format!(
                "{}/vectors/similarity?t1={}&t2={}",
                base_url(&server),
                percent_encode(term1),
                percent_encode(term2)
            );
            http_get(&url)?["similarity"]
                .as_f64()
                .ok_or_else(|| "malformed response".to_string())?
        }
        None => with_vectors(config, |m| {
            m.similarity(term1, term2).map_err(|e| e.to_string())
        })?,
    };
    println!("{similarity:.8}");
    Ok(())
}

fn near(
    config: Option<PathBuf>,
    server: Option<String>,
    term: &str,
    k: usize,
) -> Result<(), String> {
    let neighbors: Vec<(String, f64)> = match server {
        Some(server) => {
            let url = format!(
                "{}/vectors/nearest?t={}&k={k}",
                base_url(&server),
                percent_encode(term)
            );
            http_get(&url)?["neighbors"]
                .as_array()
                .map(|items| {
                    items
                        .iter()
                        .map(|n| {
                            (
                                n["term"].as_str().unwrap_or_default().to_string(),
                                n["similarity"].as_f64().unwrap_or_default(),
                            )
                        })
                        .collect()
                })
                .unwrap_or_default()
        }
        None => with_vectors(config, |m| m.nearest(term, k).map_err(|e| e.to_string()))?,
    };
    for (term, similarity) in neighbors {
        println!("{term}\t{similarity:.8}");
    }
    Ok(())
}

fn merge_counts(report: &Value) -> String {
    format!(
        "{} applied, {} skipped, {} conflicts resolved",
        report["applied"].as_u64().unwrap_or(0),
        report["skipped"].as_u64().unwrap_or(0),
        report["conflicts_resolved"].as_u64().unwrap_or(0)
    )
}

/// Bidirectional snapshot exchange with a peer kernel: pull the peer's
/// bundle into the local (or `--server`) store, then push ours to the peer.
fn sync(config: Option<PathBuf>, server: Option<String>, peer: &str) -> Result<(), String> {
    let peer = base_url(peer);
    let peer_bundle = http_get(&format!("{peer}/sync/export"))?;

    match server {
        Some(server) => {
            let server = base_url(&server);
            let pull = http_post(&format!("{server}/sync/import"), &peer_bundle)?;
            println!("pull: {}", merge_counts(&pull));
            let ours = http_get(&format!("{server}/sync/export"))?;
            let push = http_post(&format!("{peer}/sync/import"), &ours)?;
            println!("push: {}", merge_counts(&push));
        }
        None => {
            let kernel = local_kernel(config)?;
            let bundle = serde_json::from_value(peer_bundle).map_err(|e| e.to_string())?;
            let pull = kernel.sync_merge(&bundle).map_err(|e| e.to_string())?;
            println!(
                "pull: {} applied, {} skipped, {} conflicts resolved",
                pull.applied, pull.skipped, pull.conflicts_resolved
            );
            let ours = kernel.sync_export().map_err(|e| e.to_string())?;
            let push = http_post(
                &format!("{peer}/sync/import"),
                &serde_json::to_value(&ours).expect("bundle serializes"),
            )?;
            println!("push: {}", merge_counts(&push));
        }
    }
    Ok(())
}
