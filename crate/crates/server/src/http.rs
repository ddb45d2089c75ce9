//! HTTP front end: the packet endpoint and the JSON admin API.

use std::net::{SocketAddr, TcpListener};
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::{Path, Query, Request, State};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use servnet_core::admin::{Admin, AdminError, DemoAction, LinkEdit};
use servnet_core::autonomic::{AutonomicError, ExperimentConfig};
use servnet_core::model::ModelError;
use servnet_core::node::Node;
use servnet_core::par::Execution;
use servnet_core::wire::{Packet, HEADER_MSG_ID, HEADER_PKT_INDEX, HEADER_PKT_TOTAL, HEADER_REPLY_INDEX};
use thiserror::Error;
use tokio::sync::oneshot;

use crate::config::{ConfigError, ServerConfig};
use crate::transport::{HttpTransport, CALL_PATH};

pub const ADMIN_TOKEN_HEADER: &str = "X-Admin-Token";

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("server runtime failed: {0}")]
    Runtime(String),
}

struct AppState {
    node: Arc<Node>,
    admin: Arc<Admin>,
    token: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ApiError {
    pub error: String,
    pub message: String,
}

struct Failure(StatusCode, ApiError);

impl IntoResponse for Failure {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

fn failure(status: StatusCode, kind: &str, message: impl Into<String>) -> Failure {
    Failure(
        status,
        ApiError {
            error: kind.to_owned(),
            message: message.into(),
        },
    )
}

fn model_status(m: &ModelError) -> (StatusCode, &'static str) {
    match m {
        ModelError::UnknownService(_) => (StatusCode::NOT_FOUND, "UnknownService"),
        ModelError::UnknownParent(_) => (StatusCode::NOT_FOUND, "UnknownParent"),
        ModelError::ForeignNode { .. } => (StatusCode::NOT_FOUND, "ForeignNode"),
        ModelError::CrossNetworkPermanentLink { .. } => (StatusCode::CONFLICT, "CrossNetworkPermanentLink"),
        ModelError::DuplicateChildName(_) => (StatusCode::CONFLICT, "DuplicateChildName"),
        ModelError::MalformedUri(_) => (StatusCode::BAD_REQUEST, "MalformedUri"),
        ModelError::InvalidName(_) => (StatusCode::BAD_REQUEST, "InvalidName"),
        ModelError::Parse(_) => (StatusCode::BAD_REQUEST, "Parse"),
    }
}

impl From<AdminError> for Failure {
    fn from(e: AdminError) -> Self {
        let (status, kind) = match &e {
            AdminError::DemoNotCreated => (StatusCode::CONFLICT, "DemoNotCreated"),
            AdminError::InvalidDepth => (StatusCode::BAD_REQUEST, "InvalidDepth"),
            AdminError::Autonomic(AutonomicError::InvalidParameters(_)) => (StatusCode::BAD_REQUEST, "InvalidParameters"),
            AdminError::Autonomic(AutonomicError::EmptyNetwork) => (StatusCode::BAD_REQUEST, "EmptyNetwork"),
            _ => match e.model() {
                Some(m) => model_status(m),
                None => (StatusCode::INTERNAL_SERVER_ERROR, "Internal"),
            },
        };
        failure(status, kind, e.to_string())
    }
}

/// Runs blocking admin work off the async workers.
async fn blocking<T, F>(f: F) -> Result<T, Failure>
where
    F: FnOnce() -> Result<T, AdminError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| failure(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))?
        .map_err(Failure::from)
}

fn header<T: std::str::FromStr>(h: &HeaderMap, name: &str) -> Result<T, Failure> {
    h.get(name)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| failure(StatusCode::BAD_REQUEST, "BadRequest", format!("missing or invalid {name} header")))
}

fn packet_response(p: Packet) -> Response {
    let mut h = HeaderMap::new();
    let hv = |s: String| HeaderValue::from_str(&s).unwrap_or_else(|_| HeaderValue::from_static(""));
    h.insert(HEADER_MSG_ID, hv(p.message_id));
    h.insert(HEADER_PKT_INDEX, hv(p.index.to_string()));
    h.insert(HEADER_PKT_TOTAL, hv(p.total.to_string()));
    (StatusCode::OK, h, p.payload).into_response()
}

async fn post_call(State(s): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> Result<Response, Failure> {
    let p = Packet {
        message_id: header(&headers, HEADER_MSG_ID)?,
        index: header(&headers, HEADER_PKT_INDEX)?,
        total: header(&headers, HEADER_PKT_TOTAL)?,
        payload: body.to_vec(),
    };
    let node = Arc::clone(&s.node);
    let out = tokio::task::spawn_blocking(move || node.handle_packet(p))
        .await
        .map_err(|e| failure(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))?;
    match out {
        Ok(Some(reply)) => Ok(packet_response(reply)),
        Ok(None) => Ok(StatusCode::ACCEPTED.into_response()),
        Err(e) => Err(failure(StatusCode::BAD_REQUEST, "BadPacket", e.to_string())),
    }
}

async fn get_call(State(s): State<Arc<AppState>>, headers: HeaderMap) -> Result<Response, Failure> {
    let id: String = header(&headers, HEADER_MSG_ID)?;
    let index: u32 = header(&headers, HEADER_REPLY_INDEX)?;
    s.node
        .reply_packet(&id, index)
        .map(packet_response)
        .ok_or_else(|| failure(StatusCode::NOT_FOUND, "NoSuchReply", format!("no reply packet {index} for {id}")))
}

#[derive(Debug, Deserialize)]
struct DepthQuery {
    depth: Option<usize>,
}

pub const DEFAULT_VIEW_DEPTH: usize = 3;

async fn view(State(s): State<Arc<AppState>>, Query(q): Query<DepthQuery>) -> Result<Response, Failure> {
    let admin = Arc::clone(&s.admin);
    let v = blocking(move || admin.view(q.depth.unwrap_or(DEFAULT_VIEW_DEPTH))).await?;
    Ok(Json(v).into_response())
}

fn xml(body: String) -> Response {
    ([(axum::http::header::CONTENT_TYPE, "application/xml")], body).into_response()
}

async fn network_meta(State(s): State<Arc<AppState>>) -> Result<Response, Failure> {
    let admin = Arc::clone(&s.admin);
    Ok(xml(blocking(move || admin.network_meta()).await?))
}

async fn meta(State(s): State<Arc<AppState>>, Path(path): Path<String>) -> Result<Response, Failure> {
    let admin = Arc::clone(&s.admin);
    Ok(xml(blocking(move || admin.meta(&path)).await?))
}

async fn link(State(s): State<Arc<AppState>>, Json(edit): Json<LinkEdit>) -> Result<Response, Failure> {
    let admin = Arc::clone(&s.admin);
    blocking(move || admin.edit_link(&edit)).await?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

async fn dynlinks(State(s): State<Arc<AppState>>, Path(path): Path<String>) -> Result<Response, Failure> {
    let admin = Arc::clone(&s.admin);
    Ok(Json(blocking(move || admin.dynamic_links(&path)).await?).into_response())
}

async fn demo(State(s): State<Arc<AppState>>, Json(action): Json<DemoAction>) -> Result<Response, Failure> {
    let admin = Arc::clone(&s.admin);
    Ok(Json(blocking(move || admin.demo(action)).await?).into_response())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExperimentRequest {
    #[serde(flatten)]
    pub config: ExperimentConfig,
    #[serde(default)]
    pub execution: Execution,
}

async fn experiment(State(s): State<Arc<AppState>>, Json(req): Json<ExperimentRequest>) -> Result<Response, Failure> {
    let admin = Arc::clone(&s.admin);
    Ok(Json(blocking(move || admin.experiment(&req.config, req.execution)).await?).into_response())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateDigest {
    pub digest: String,
}

async fn digest(State(s): State<Arc<AppState>>) -> Result<Response, Failure> {
    let admin = Arc::clone(&s.admin);
    let digest = blocking(move || Ok(admin.state_digest())).await?;
    Ok(Json(StateDigest { digest }).into_response())
}

async fn require_token(State(s): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(expected) = &s.token {
        let given = req.headers().get(ADMIN_TOKEN_HEADER).map(HeaderValue::as_bytes);
        if given != Some(expected.as_bytes()) {
            return failure(StatusCode::UNAUTHORIZED, "Unauthorized", "missing or wrong admin token").into_response();
        }
    }
    next.run(req).await
}

pub fn router(node: Arc<Node>, admin: Arc<Admin>, token: Option<String>) -> Router {
    let admin_enabled = node.config().admin_enabled;
    let state = Arc::new(AppState { node, admin, token });
    let mut r = Router::new()
        .route(CALL_PATH, post(post_call).get(get_call))
        .route("/health", get(|| async { "ok" }));
    if admin_enabled {
        let admin_routes = Router::new()
            .route("/admin/view", get(view))
            .route("/admin/meta", get(network_meta))
            .route("/admin/meta/{*path}", get(meta))
            .route("/admin/link", post(link))
            .route("/admin/dynlinks/{*path}", get(dynlinks))
            .route("/admin/demo", post(demo))
            .route("/admin/experiment", post(experiment))
            .route("/admin/state", get(digest))
            .layer(middleware::from_fn_with_state(Arc::clone(&state), require_token));
        r = r.merge(admin_routes);
    }
    r.with_state(state)
}

/// A running node server on its own runtime thread.
pub struct ServerHandle {
    addr: SocketAddr,
    node: Arc<Node>,
    admin: Arc<Admin>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<Result<(), String>>>,
}

impl ServerHandle {
    /// Binds, builds and populates the node, then serves in the background.
    /// A port of 0 picks a free port; the base URI then uses the real one.
    pub fn start(cfg: &ServerConfig) -> Result<ServerHandle, ServeError> {
        let listener = TcpListener::bind(cfg.bind).map_err(|source| ServeError::Bind { addr: cfg.bind, source })?;
        let addr = listener.local_addr().map_err(|source| ServeError::Bind { addr: cfg.bind, source })?;
        listener
            .set_nonblocking(true)
            .map_err(|source| ServeError::Bind { addr, source })?;
        let node = Arc::new(Node::new(cfg.node_config(addr)).map_err(ConfigError::from)?);
        node.set_transport(Arc::new(HttpTransport::default()));
        cfg.populate(&node)?;
        let admin = Arc::new(Admin::new(Arc::clone(&node)));
        let app = router(Arc::clone(&node), Arc::clone(&admin), cfg.admin_token.clone());
        let (tx, rx) = oneshot::channel::<()>();
        let thread = std::thread::Builder::new()
            .name("servnet-http".into())
            .spawn(move || -> Result<(), String> {
                let rt = tokio::runtime::Builder::new_multi_thread()
                    .enable_all()
                    .build()
                    .map_err(|e| e.to_string())?;
                rt.block_on(async move {
                    let listener = tokio::net::TcpListener::from_std(listener).map_err(|e| e.to_string())?;
                    axum::serve(listener, app)
                        .with_graceful_shutdown(async {
                            let _ = rx.await;
                        })
                        .await
                        .map_err(|e| e.to_string())
                })
            })
            .map_err(|e| ServeError::Runtime(e.to_string()))?;
        tracing::info!(%addr, base_uri = node.base_uri(), "serving");
        Ok(ServerHandle {
            addr,
            node,
            admin,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn node(&self) -> &Arc<Node> {
        &self.node
    }

    pub fn admin(&self) -> &Arc<Admin> {
        &self.admin
    }

    pub fn shutdown(mut self) -> Result<(), ServeError> {
        self.stop()
    }

    fn stop(&mut self) -> Result<(), ServeError> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.admin.demo_controller().stop();
        match self.thread.take().map(JoinHandle::join) {
            Some(Ok(r)) => r.map_err(ServeError::Runtime),
            Some(Err(_)) => Err(ServeError::Runtime("server thread panicked".into())),
            None => Ok(()),
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}
