use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, put};
use axum::Router;
use merklespeech_core::manifest::{canonical_json, Manifest};
use merklespeech_core::merkle::MerkleProof;
use merklespeech_core::payload::Cid;
use merklespeech_core::repository::{RepoError, Repository};
use tokio::net::TcpListener;

type Store = Arc<dyn Repository>;

enum Reply {
    Json(Vec<u8>),
    Empty(StatusCode),
    Error(StatusCode, String),
}

impl IntoResponse for Reply {
    fn into_response(self) -> Response {
        match self {
            Reply::Json(body) => ([(header::CONTENT_TYPE, "application/json")], body).into_response(),
            Reply::Empty(status) => status.into_response(),
            Reply::Error(status, msg) => (status, msg).into_response(),
        }
    }
}

fn bad_request(msg: impl Into<String>) -> Reply {
    Reply::Error(StatusCode::BAD_REQUEST, msg.into())
}

fn from_repo(e: RepoError) -> Reply {
    match e {
        RepoError::Conflict(m) => Reply::Error(StatusCode::CONFLICT, m),
        RepoError::Rejected(m) => Reply::Error(StatusCode::BAD_REQUEST, m),
        RepoError::Transport(m) => Reply::Error(StatusCode::INTERNAL_SERVER_ERROR, m),
    }
}

fn found<T: serde::Serialize>(value: Option<T>) -> Reply {
    match value.map(|v| canonical_json(&v)) {
        Some(Ok(body)) => Reply::Json(body),
        Some(Err(e)) => Reply::Error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        None => Reply::Empty(StatusCode::NOT_FOUND),
    }
}

fn parse_cid(s: &str) -> Result<Cid, Reply> {
    s.parse().map_err(|_| bad_request(format!("malformed cid `{s}`")))
}

/// Run a store call off the async executor.
async fn blocking<T: Send + 'static>(store: &Store, f: impl FnOnce(&dyn Repository) -> T + Send + 'static) -> Result<T, Reply> {
    let store = store.clone();
    tokio::task::spawn_blocking(move || f(store.as_ref()))
        .await
        .map_err(|e| Reply::Error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

macro_rules! tri {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(reply) => return reply,
        }
    };
}

async fn get_manifest(State(store): State<Store>, Path(cid): Path<String>) -> Reply {
    let cid = tri!(parse_cid(&cid));
    match tri!(blocking(&store, move |s| s.get_manifest(&cid)).await) {
        Ok(m) => found(m),
        Err(e) => from_repo(e),
    }
}

async fn get_manifest_by_rid(State(store): State<Store>, Path(rid): Path<String>) -> Reply {
    let rid = tri!(merklespeech_core::hexbytes::decode_array::<8>(&rid)
        .map(u64::from_be_bytes)
        .map_err(|_| bad_request(format!("malformed rid `{rid}`"))));
    match tri!(blocking(&store, move |s| s.get_manifest_by_rid(rid)).await) {
        Ok(m) => found(m),
        Err(e) => from_repo(e),
    }
}

async fn get_proof(State(store): State<Store>, Path((cid, index)): Path<(String, String)>) -> Reply {
    let cid = tri!(parse_cid(&cid));
    let index: u32 = tri!(index.parse().map_err(|_| bad_request(format!("malformed chunk index `{index}`"))));
    match tri!(blocking(&store, move |s| s.get_proof(&cid, index)).await) {
        Ok(p) => found(p),
        Err(e) => from_repo(e),
    }
}

async fn put_manifest(State(store): State<Store>, Path(cid): Path<String>, body: Bytes) -> Reply {
    let cid = tri!(parse_cid(&cid));
    let manifest = tri!(Manifest::from_json(&body).map_err(|e| bad_request(format!("malformed manifest: {e}"))));
    if manifest.cid != cid {
        return bad_request("manifest cid does not match the path");
    }
    match tri!(blocking(&store, move |s| s.put_manifest(&manifest)).await) {
        Ok(()) => Reply::Empty(StatusCode::OK),
        Err(e) => from_repo(e),
    }
}

async fn put_proofs(State(store): State<Store>, Path(cid): Path<String>, body: Bytes) -> Reply {
    let cid = tri!(parse_cid(&cid));
    let proofs: Vec<MerkleProof> =
        tri!(serde_json::from_slice(&body).map_err(|e| bad_request(format!("malformed proofs: {e}"))));
    match tri!(blocking(&store, move |s| s.put_proofs(&cid, &proofs)).await) {
        Ok(()) => Reply::Empty(StatusCode::OK),
        Err(e) => from_repo(e),
    }
}

pub fn router(store: Arc<dyn Repository>) -> Router {
    Router::new()
        .route("/manifest/{cid}", get(get_manifest).put(put_manifest))
        .route("/manifest/by-rid/{rid}", get(get_manifest_by_rid))
        .route("/proof/{cid}/{i}", get(get_proof))
        .route("/proofs/{cid}", put(put_proofs))
        .with_state(store)
}

/// Serve `store` on `listener` until the process ends.
pub async fn serve(listener: TcpListener, store: Arc<dyn Repository>) -> std::io::Result<()> {
    axum::serve(listener, router(store)).await
}

/// A server running on its own thread and runtime, stopped on drop.
pub struct ServerHandle {
    addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    /// Bind `addr` (port 0 picks a free port) and start serving.
    pub fn spawn(addr: &str, store: Arc<dyn Repository>) -> std::io::Result<Self> {
        let std_listener = std::net::TcpListener::bind(addr)?;
        std_listener.set_nonblocking(true)?;
        let addr = std_listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let runtime = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build()?;
        let thread = std::thread::spawn(move || {
            runtime.block_on(async move {
                let listener = TcpListener::from_std(std_listener).expect("listener conversion");
                let _ = axum::serve(listener, router(store))
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        Ok(Self { addr, shutdown: Some(tx), thread: Some(thread) })
    }

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
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
