//! Socket-level helpers shared by the gateway test suites: an
//! ephemeral-port gateway runner and a recording stub upstream.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::IntoResponse;
use axum::routing::post;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use gqr_gateway::config::GatewayConfig;
use gqr_gateway::server::{self, ServeError};

pub async fn start_gateway(
    config: GatewayConfig,
) -> (SocketAddr, oneshot::Sender<()>, JoinHandle<Result<(), ServeError>>) {
    let (ready_tx, ready_rx) = oneshot::channel();
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let handle = tokio::spawn(server::serve_with_shutdown(config, ready_tx, async move {
        let _ = stop_rx.await;
    }));
    let addr = ready_rx.await.expect("gateway failed to start");
    (addr, stop_tx, handle)
}

pub struct UpstreamState {
    log: Mutex<Vec<(String, String)>>,
    reply: &'static str,
    status: StatusCode,
    delay_ms: u64,
}

/// Handle to a stub upstream: its URL plus every (domain header, body)
/// pair it has served.
#[derive(Clone)]
pub struct Upstream {
    pub url: String,
    state: Arc<UpstreamState>,
}

impl Upstream {
    pub fn hits(&self) -> Vec<(String, String)> {
        self.state.log.lock().unwrap().clone()
    }
}

async fn record(
    State(state): State<Arc<UpstreamState>>,
    headers: HeaderMap,
    body: String,
) -> impl IntoResponse {
    let domain = headers
        .get("x-gqr-domain")
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
        .to_string();
    state.log.lock().unwrap().push((domain, body));
    if state.delay_ms > 0 {
        tokio::time::sleep(std::time::Duration::from_millis(state.delay_ms)).await;
    }
    (state.status, state.reply)
}

pub async fn start_upstream(reply: &'static str, status: StatusCode, delay_ms: u64) -> Upstream {
    let state = Arc::new(UpstreamState { log: Mutex::new(Vec::new()), reply, status, delay_ms });
    let app = axum::Router::new().route("/", post(record)).with_state(state.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    Upstream { url: format!("http://{addr}/"), state }
}
