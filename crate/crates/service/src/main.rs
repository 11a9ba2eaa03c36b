//! `condrec-serve`: load an index once, answer recommendation queries forever.

use clap::Parser;
use condrec_core::fingerprint::FingerprintConfig;
use condrec_core::model::{KeyKind, RetrievalConfig, Temperature};
use condrec_service::{serve, ServiceConfig, ServiceState};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "condrec-serve", version, about = "Precedent recommendation HTTP service")]
struct Args {
    /// Bind address, e.g. 127.0.0.1:8080.
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
    #[arg(long)]
    index: PathBuf,
    /// Embedding bank for id-keyed queries (optional; indexed ids still work).
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Role-tagged head probability files, comma separated.
    #[arg(long, value_delimiter = ',')]
    heads: Vec<PathBuf>,
    /// Directory holding catalyst.txt / solvent.txt / reagent.txt.
    #[arg(long)]
    vocabs: PathBuf,
    #[arg(long)]
    key: Option<String>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value = "uniform")]
    temp: String,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Largest k a request may ask for.
    #[arg(long, default_value_t = 100)]
    max_k: usize,
    /// Declare the index fingerprint-keyed with this width, enabling SMILES
    /// queries.
    #[arg(long)]
    fp_nbits: Option<usize>,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Request body timeout in seconds.
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let temperature = match Temperature::parse(&args.temp) {
        Some(t) => t,
        None => {
            eprintln!("{}", serde_json::json!({ "code": 2, "message": format!("bad --temp {:?}", args.temp) }));
            return ExitCode::from(2);
        }
    };
    let key_kind = match args.key.as_deref() {
        None => KeyKind::RxnOnly,
        Some(s) => match KeyKind::parse(s) {
            Some(k) => k,
            None => {
                eprintln!("{}", serde_json::json!({ "code": 2, "message": format!("bad --key {s:?}") }));
                return ExitCode::from(2);
            }
        },
    };

    let config = ServiceConfig {
        bind: args.bind.clone(),
        index_path: args.index,
        bank_path: args.bank,
        head_paths: args.heads,
        vocab_dir: args.vocabs,
        default_retrieval: RetrievalConfig {
            key_kind,
            k: args.k,
            temperature,
            alpha: args.alpha,
        },
        max_k: args.max_k,
        fingerprint: args.fp_nbits.map(|nbits| FingerprintConfig {
            nbits,
            ..FingerprintConfig::default()
        }),
        workers: args.workers,
        request_timeout: std::time::Duration::from_secs(args.timeout_secs),
    };

    let state = match ServiceState::load(&config) {
        Ok(state) => Arc::new(state),
        Err(err) => {
            eprintln!("{}", serde_json::json!({ "code": 3, "message": err.to_string() }));
            return ExitCode::from(3);
        }
    };

    let server = match tiny_http::Server::http(&config.bind) {
        Ok(server) => server,
        Err(err) => {
            eprintln!("{}", serde_json::json!({ "code": 3, "message": format!("cannot bind {}: {err}", config.bind) }));
            return ExitCode::from(3);
        }
    };
    eprintln!(
        "{}",
        serde_json::json!({
            "status": "listening",
            "bind": config.bind,
            "index_size": state.index.len(),
            "dim": state.index.dim(),
        })
    );
    serve(server, state, config.workers);
    ExitCode::SUCCESS
}
