//! HTTP JSON service over an immutable precedent index.
//!
//! The index, bank, vocabularies, and head probabilities load once at
//! startup; every handler reads shared immutable state, so identical requests
//! return identical bodies at any concurrency. Queries by indexed reaction id
//! exclude the query's own row from its neighbor set.
//!
//! Surface (versioned under `/v1`):
//! - `POST /v1/recommend` — body carries exactly one query form (`id`,
//!   `vector`, or `reactants`+`products`) plus optional `k`, `temperature`,
//!   `alpha` overrides; responds with the recommendation document.
//! - `GET /v1/health` — index size, dimension, and build version; 503 until
//!   the index is loaded.
//!
//! Errors are structured: `{"code": <http status>, "message": "..."}`.

use condrec_core::error::Error as CoreError;
use condrec_core::fingerprint::{drfp_style, FingerprintConfig};
use condrec_core::index::PrecedentIndex;
use condrec_core::ingest::{EmbeddingBank, HeadProbabilities};
use condrec_core::model::{
    Conditions, PerRole, ReactionRecord, RetrievalConfig, Role, RoleDistribution, RoleVocabulary,
    Split, Temperature,
};
use condrec_core::recommend::recommend;
use serde::Deserialize;
use std::path::PathBuf;
use std::sync::Arc;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Startup configuration.
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub bind: String,
    pub index_path: PathBuf,
    pub bank_path: Option<PathBuf>,
    pub head_paths: Vec<PathBuf>,
    pub vocab_dir: PathBuf,
    pub default_retrieval: RetrievalConfig,
    pub max_k: usize,
    /// Present when the index keys are differential fingerprints; enables
    /// reactant/product SMILES queries.
    pub fingerprint: Option<FingerprintConfig>,
    pub workers: usize,
    /// Budget for receiving a request body; slow clients get 408.
    pub request_timeout: std::time::Duration,
}

/// Immutable state shared by every handler.
pub struct ServiceState {
    pub index: PrecedentIndex,
    pub bank: Option<EmbeddingBank>,
    pub heads: Option<HeadProbabilities>,
    pub vocabs: PerRole<RoleVocabulary>,
    pub default_retrieval: RetrievalConfig,
    pub max_k: usize,
    pub fingerprint: Option<FingerprintConfig>,
    pub request_timeout: std::time::Duration,
}

impl ServiceState {
    pub fn load(config: &ServiceConfig) -> Result<Self, CoreError> {
        let index = PrecedentIndex::load(&config.index_path)?;
        let bank = match &config.bank_path {
            Some(path) => Some(EmbeddingBank::load(path)?),
            None => None,
        };
        let heads = if config.head_paths.is_empty() {
            None
        } else {
            let mut heads = HeadProbabilities::new();
            for path in &config.head_paths {
                heads.load_role_file(path)?;
            }
            Some(heads)
        };
        let vocabs = PerRole::new(
            RoleVocabulary::from_file(Role::Catalyst, config.vocab_dir.join("catalyst.txt"))?,
            RoleVocabulary::from_file(Role::Solvent, config.vocab_dir.join("solvent.txt"))?,
            RoleVocabulary::from_file(Role::Reagent, config.vocab_dir.join("reagent.txt"))?,
        );
        config.default_retrieval.validate()?;
        Ok(Self {
            index,
            bank,
            heads,
            vocabs,
            default_retrieval: config.default_retrieval.clone(),
            max_k: config.max_k,
            fingerprint: config.fingerprint,
            request_timeout: config.request_timeout,
        })
    }
}

/// A response ready for the transport: status code and JSON body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

impl HttpResponse {
    fn ok(body: String) -> Self {
        Self { status: 200, body }
    }

    fn error(status: u16, message: impl Into<String>) -> Self {
        Self {
            status,
            body: serde_json::json!({ "code": status, "message": message.into() }).to_string(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum TemperatureParam {
    Number(f64),
    Name(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecommendRequest {
    id: Option<String>,
    vector: Option<Vec<f32>>,
    reactants: Option<Vec<String>>,
    products: Option<Vec<String>>,
    k: Option<usize>,
    temperature: Option<TemperatureParam>,
    alpha: Option<f64>,
}

/// Route a request against the (possibly not yet loaded) service state.
///
/// Pure: no I/O, no mutation. The transport layer maps the result onto the
/// wire.
pub fn handle(
    state: Option<&ServiceState>,
    method: &str,
    path: &str,
    content_type: Option<&str>,
    body: &[u8],
) -> HttpResponse {
    match (method, path) {
        ("GET", "/v1/health") => match state {
            Some(state) => HttpResponse::ok(
                serde_json::json!({
                    "status": "ok",
                    "index_size": state.index.len(),
                    "dim": state.index.dim(),
                    "version": VERSION,
                })
                .to_string(),
            ),
            None => HttpResponse::error(503, "index not loaded"),
        },
        ("POST", "/v1/recommend") => {
            let Some(state) = state else {
                return HttpResponse::error(503, "index not loaded");
            };
            if let Some(ct) = content_type {
                if !ct.starts_with("application/json") {
                    return HttpResponse::error(400, format!("content type {ct:?} is not JSON"));
                }
            }
            let request: RecommendRequest = match serde_json::from_slice(body) {
                Ok(request) => request,
                Err(err) => return HttpResponse::error(400, format!("malformed body: {err}")),
            };
            handle_recommend(state, request)
        }
        ("GET", "/v1/recommend") => HttpResponse::error(400, "recommend requires POST"),
        _ => HttpResponse::error(404, format!("no route {method} {path}")),
    }
}

fn handle_recommend(state: &ServiceState, request: RecommendRequest) -> HttpResponse {
    // Exactly one query form.
    let has_smiles = request.reactants.is_some() || request.products.is_some();
    let forms = [request.id.is_some(), request.vector.is_some(), has_smiles];
    let form_count = forms.iter().filter(|&&f| f).count();
    if form_count != 1 {
        return HttpResponse::error(
            400,
            "body must carry exactly one of: id, vector, or reactants+products",
        );
    }

    // Overrides within configured bounds.
    let mut config = state.default_retrieval.clone();
    if let Some(k) = request.k {
        if k < 1 || k > state.max_k {
            return HttpResponse::error(
                400,
                format!("k {k} outside the configured bounds [1, {}]", state.max_k),
            );
        }
        config.k = k;
    }
    if let Some(temp) = request.temperature {
        config.temperature = match temp {
            TemperatureParam::Number(t) if t > 0.0 && t.is_finite() => Temperature::Softmax(t),
            TemperatureParam::Number(t) => {
                return HttpResponse::error(400, format!("temperature {t} must be positive"))
            }
            TemperatureParam::Name(name) if name == "uniform" => Temperature::Uniform,
            TemperatureParam::Name(name) => {
                return HttpResponse::error(400, format!("unknown temperature {name:?}"))
            }
        };
    }
    if let Some(alpha) = request.alpha {
        if !(0.0..=1.0).contains(&alpha) {
            return HttpResponse::error(400, format!("alpha {alpha} must lie in [0, 1]"));
        }
        config.alpha = alpha;
    }

    // Resolve the query key and self-exclusion row.
    let (key, exclude_row, head_id) = if let Some(id) = &request.id {
        let from_bank = state
            .bank
            .as_ref()
            .and_then(|bank| bank.row_of(id).map(|row| (bank, row)));
        let key = match from_bank {
            Some((bank, row)) => match bank.key(row, config.key_kind) {
                Ok(key) => key,
                Err(err) => return HttpResponse::error(422, err.to_string()),
            },
            None => match state.index.row_of(id) {
                Some(row) => state.index.key_row(row).to_vec(),
                None => return HttpResponse::error(404, format!("unknown reaction id {id:?}")),
            },
        };
        (key, state.index.row_of(id.as_str()), Some(id.clone()))
    } else if let Some(vector) = &request.vector {
        if vector.len() != state.index.dim() {
            return HttpResponse::error(
                422,
                format!(
                    "vector has dim {}, index expects {}",
                    vector.len(),
                    state.index.dim()
                ),
            );
        }
        (vector.clone(), None, None)
    } else {
        let Some(fp_cfg) = state.fingerprint else {
            return HttpResponse::error(
                400,
                "this index is not fingerprint-keyed; query by id or vector",
            );
        };
        let (Some(reactants), Some(products)) = (&request.reactants, &request.products) else {
            return HttpResponse::error(400, "SMILES queries need both reactants and products");
        };
        if reactants.is_empty() || products.is_empty() {
            return HttpResponse::error(400, "reactants and products must be nonempty");
        }
        let probe = ReactionRecord {
            id: "<query>".into(),
            reactants: reactants.clone(),
            products: products.clone(),
            conditions: Conditions::default(),
            split: Split::Test,
            publication_proxy: None,
        };
        let fp = match drfp_style(&probe, &fp_cfg) {
            Ok(fp) => fp,
            Err(err) => return HttpResponse::error(400, err.to_string()),
        };
        let key = fp.to_dense();
        if key.len() != state.index.dim() {
            return HttpResponse::error(
                422,
                format!(
                    "fingerprint width {} does not match index dim {}",
                    key.len(),
                    state.index.dim()
                ),
            );
        }
        if fp.popcount() == 0 {
            return HttpResponse::error(
                422,
                "query fingerprint is empty (reactants and products coincide)",
            );
        }
        (key, None, None)
    };

    // Head distributions when the fusion needs them.
    let head_dists: Option<PerRole<RoleDistribution>> = if config.alpha > 0.0 {
        let Some(heads) = &state.heads else {
            return HttpResponse::error(
                400,
                format!(
                    "alpha {} needs head probabilities, but none are loaded; pass alpha 0",
                    config.alpha
                ),
            );
        };
        let Some(id) = &head_id else {
            return HttpResponse::error(
                400,
                "head fusion needs an id query; pass alpha 0 for vector or SMILES queries",
            );
        };
        let per_role = state.vocabs.try_map(|role, _| {
            heads.get(role, id).ok_or_else(|| {
                CoreError::Data(condrec_core::error::DataError::UnknownId {
                    id: format!("{id} (head probabilities, {role})"),
                })
            })
        });
        match per_role {
            Ok(per_role) => Some(per_role),
            Err(err) => return HttpResponse::error(404, err.to_string()),
        }
    } else {
        None
    };

    match recommend(
        &key,
        exclude_row,
        &state.index,
        head_dists.as_ref(),
        &config,
        &state.vocabs,
        1,
    ) {
        Ok(rec) => HttpResponse::ok(serde_json::to_string(&rec).expect("serializes")),
        Err(err @ CoreError::Data(condrec_core::error::DataError::Dimension { .. })) => {
            HttpResponse::error(422, err.to_string())
        }
        Err(err) => HttpResponse::error(500, err.to_string()),
    }
}

/// Bind `addr` (port 0 picks a free port), detach worker threads, and return
/// the bound socket address. Used by tests and embedders; the binary uses
/// [`serve`] directly.
pub fn spawn(
    addr: &str,
    state: Arc<ServiceState>,
    workers: usize,
) -> Result<std::net::SocketAddr, String> {
    let server = tiny_http::Server::http(addr).map_err(|e| format!("cannot bind {addr}: {e}"))?;
    let local = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| "server has no IP address".to_string())?;
    std::thread::spawn(move || serve(server, state, workers));
    Ok(local)
}

/// Serve requests over `workers` blocking threads until the process exits.
pub fn serve(server: tiny_http::Server, state: Arc<ServiceState>, workers: usize) {
    let server = Arc::new(server);
    let mut handles = Vec::new();
    for _ in 0..workers.max(1) {
        let server = Arc::clone(&server);
        let state = Arc::clone(&state);
        handles.push(std::thread::spawn(move || loop {
            let mut request = match server.recv() {
                Ok(request) => request,
                Err(_) => return,
            };
            let read_started = std::time::Instant::now();
            let mut body = Vec::new();
            let _ = std::io::Read::read_to_end(request.as_reader(), &mut body);
            if read_started.elapsed() > state.request_timeout {
                let _ = request.respond(
                    tiny_http::Response::from_string(
                        serde_json::json!({ "code": 408, "message": "request body arrived too slowly" })
                            .to_string(),
                    )
                    .with_status_code(408),
                );
                continue;
            }
            let content_type = request
                .headers()
                .iter()
                .find(|h| h.field.equiv("Content-Type"))
                .map(|h| h.value.as_str().to_string());
            let method = request.method().as_str().to_string();
            let url = request.url().to_string();
            let response = handle(
                Some(&state),
                &method,
                url.split('?').next().unwrap_or(&url),
                content_type.as_deref(),
                &body,
            );
            let _ = request.respond(
                tiny_http::Response::from_string(response.body)
                    .with_status_code(response.status)
                    .with_header(
                        tiny_http::Header::from_bytes(
                            &b"Content-Type"[..],
                            &b"application/json"[..],
                        )
                        .expect("static header"),
                    ),
            );
        }));
    }
    for handle in handles {
        let _ = handle.join();
    }
}
