//! HTTP/JSON front end: one endpoint carrying domain messages to the
//! router, plus chain export and a health probe.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::Json;
use rand::rngs::OsRng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::json;
use tokio::net::TcpListener;

use sharechain_core::crypto::Keypair;
use sharechain_core::framework::Framework;
use sharechain_core::ledger::export_chain;
use sharechain_core::net::{NetworkConfig, API_PEER};
use sharechain_core::prefix::setup;
use sharechain_core::router::{DomainMessage, DomainResponse, ErrorBody, Origin, Router};
use sharechain_core::storage::{BlobStore, DirStore, MemStore};

pub const STORAGE_ID: &str = "storage";

#[derive(Debug, Clone, Default)]
pub struct ServerOptions {
    pub network: NetworkConfig,
    /// Blob directory and authority decision log. In memory when unset.
    pub data_dir: Option<PathBuf>,
    /// Fixes the storage and master keys, for reproducible runs.
    pub seed: Option<u64>,
}

/// Starts the framework. Must run inside a tokio runtime.
pub fn start_framework(opts: &ServerOptions) -> Result<Framework, String> {
    opts.network.validate().map_err(|e| e.to_string())?;
    let (storage_keys, master) = match opts.seed {
        Some(seed) => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            (Keypair::generate(&mut rng), setup(128, &mut rng))
        }
        None => (Keypair::generate(&mut OsRng), setup(128, &mut OsRng)),
    };
    let master = master.map_err(|e| e.to_string())?;
    let store: Arc<dyn BlobStore> = match &opts.data_dir {
        Some(dir) => {
            let store = DirStore::open(dir.join("blobs")).map_err(|e| e.to_string())?;
            // The ledger lives in memory, so old blobs would have no
            // attestation behind them.
            if !store.is_empty() {
                return Err(format!(
                    "{} holds blobs from an earlier run; use a fresh data directory",
                    dir.display()
                ));
            }
            Arc::new(store)
        }
        None => Arc::new(MemStore::new()),
    };
    let fw = Framework::start(opts.network.clone(), STORAGE_ID, storage_keys, store, master, Vec::new())
        .map_err(|e| e.to_string())?;
    if let Some(dir) = &opts.data_dir {
        fw.authority
            .log_to(dir.join("key-decisions.jsonl"))
            .map_err(|e| e.to_string())?;
    }
    Ok(fw)
}

pub fn app(fw: Arc<Framework>) -> axum::Router {
    axum::Router::new()
        .route("/v1/messages", post(messages))
        .route("/v1/chain", get(chain))
        .route("/health", get(health))
        .with_state(fw)
}

async fn messages(State(fw): State<Arc<Framework>>, body: Bytes) -> impl IntoResponse {
    let msg: DomainMessage = match serde_json::from_slice(&body) {
        Ok(m) => m,
        Err(e) => {
            let resp = DomainResponse {
                correlation_id: String::new(),
                ok: false,
                body: None,
                error: Some(ErrorBody {
                    origin: Origin::Router,
                    code: "MalformedMessage".into(),
                    message: e.to_string(),
                    detail: None,
                }),
            };
            return (StatusCode::BAD_REQUEST, Json(resp));
        }
    };
    tracing::debug!(kind = %msg.kind, sender = %msg.sender, cid = %msg.correlation_id, "message");
    (StatusCode::OK, Json(Router::new(&fw).route(msg).await))
}

async fn chain(State(fw): State<Arc<Framework>>) -> impl IntoResponse {
    match fw.net.with_peer(API_PEER, |l| export_chain(l.blocks())) {
        Ok(text) => (StatusCode::OK, [(header::CONTENT_TYPE, "text/plain")], text),
        Err(e) => (StatusCode::SERVICE_UNAVAILABLE, [(header::CONTENT_TYPE, "text/plain")], e.to_string()),
    }
}

async fn health(State(fw): State<Arc<Framework>>) -> impl IntoResponse {
    let height = fw.net.height(API_PEER).ok().flatten();
    Json(json!({
        "status": if fw.net.is_stopped() { "stopped" } else { "ok" },
        "height": height,
        "peers": fw.net.peer_count(),
        "storage_pk": hex::encode(fw.storage.public_key().0),
    }))
}

/// Serves until the listener fails.
pub async fn serve(listener: TcpListener, fw: Arc<Framework>) -> std::io::Result<()> {
    axum::serve(listener, app(fw)).await
}

/// Binds `addr`, starts the framework and serves in a background task.
pub async fn spawn(addr: SocketAddr, opts: &ServerOptions) -> Result<(SocketAddr, Arc<Framework>), String> {
    let fw = Arc::new(start_framework(opts)?);
    let listener = TcpListener::bind(addr).await.map_err(|e| e.to_string())?;
    let bound = listener.local_addr().map_err(|e| e.to_string())?;
    let served = fw.clone();
    tokio::spawn(async move {
        if let Err(e) = serve(listener, served).await {
            tracing::error!(error = %e, "server stopped");
        }
    });
    Ok((bound, fw))
}
