//! HTTP gateway: guards live queries with a shared immutable router,
//! forwarding accepted ones to per-domain upstreams when configured.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, HeaderMap, HeaderName, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Json;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;

use gqr_core::llm::{HttpChatClient, LlmRouter};
use gqr_core::models::artifact::{load_model, ArtifactError};
use gqr_core::models::{ModelError, Outcome, RouteDecision, Router};

use crate::config::{ConfigError, GatewayConfig, RejectBehavior};

pub const DOMAIN_HEADER: &str = "x-gqr-domain";
pub const LATENCY_HEADER: &str = "x-gqr-latency-ms";

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error("backend setup failed: {0}")]
    Backend(#[from] ModelError),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
}

/// Cross-request counters; everything else is immutable after startup.
pub struct Metrics {
    requests: AtomicU64,
    rejects: AtomicU64,
    routes: Vec<(String, AtomicU64)>,
}

impl Metrics {
    fn new(domains: &[String]) -> Self {
        Self {
            requests: AtomicU64::new(0),
            rejects: AtomicU64::new(0),
            routes: domains.iter().map(|d| (d.clone(), AtomicU64::new(0))).collect(),
        }
    }

    fn count_outcome(&self, outcome: &Outcome) {
        match outcome {
            Outcome::Reject => {
                self.rejects.fetch_add(1, Ordering::Relaxed);
            }
            Outcome::Domain(d) => {
                if let Some((_, c)) = self.routes.iter().find(|(name, _)| name == d) {
                    c.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
    }

    fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "gqr_requests_total {}\n",
            self.requests.load(Ordering::Relaxed)
        ));
        out.push_str(&format!(
            "gqr_rejects_total {}\n",
            self.rejects.load(Ordering::Relaxed)
        ));
        for (domain, count) in &self.routes {
            out.push_str(&format!(
                "gqr_routes_total{{domain=\"{domain}\"}} {}\n",
                count.load(Ordering::Relaxed)
            ));
        }
        out
    }
}

pub struct AppState {
    router: Arc<dyn Router>,
    reject: RejectBehavior,
    upstreams: Option<BTreeMap<String, String>>,
    metrics: Metrics,
    http: reqwest::Client,
}

/// Builds the backend named by the config: a loaded artifact (with the
/// serve-time threshold override applied) or the delegating LLM router.
pub fn load_router(config: &GatewayConfig) -> Result<Arc<dyn Router>, ServeError> {
    config.validate()?;
    if let Some(path) = &config.model {
        let mut model = load_model(path)?;
        if let Some(t) = config.threshold {
            model.set_threshold(t)?;
        }
        return Ok(Arc::new(model));
    }
    let llm = config.llm.as_ref().expect("validate() guarantees a backend");
    let client = HttpChatClient::new(&llm.config)?;
    let router = LlmRouter::new(llm.domains.clone(), &llm.config, client)?;
    Ok(Arc::new(router))
}

#[derive(Debug, Deserialize)]
struct RouteRequest {
    query: String,
}

#[derive(Debug, Serialize)]
struct RouteResponse {
    decision: String,
    scores: indexmap::IndexMap<String, f64>,
    latency_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    backend_error: Option<String>,
}

fn error_body(message: &str) -> serde_json::Value {
    serde_json::json!({ "error": message })
}

/// Runs the router off the async threads; a classification is pure CPU.
async fn classify(
    router: Arc<dyn Router>,
    query: String,
) -> Result<Result<RouteDecision, gqr_core::models::RouteError>, Response> {
    tokio::task::spawn_blocking(move || router.route(&query))
        .await
        .map_err(|e| {
            (
                StatusCode::INTERNAL_SERVER_ERROR,
                Json(error_body(&format!("classifier task failed: {e}"))),
            )
                .into_response()
        })
}

async fn route_handler(
    State(state): State<Arc<AppState>>,
    Json(request): Json<RouteRequest>,
) -> Response {
    state.metrics.requests.fetch_add(1, Ordering::Relaxed);
    if request.query.trim().is_empty() {
        return (
            StatusCode::BAD_REQUEST,
            Json(error_body("query must not be empty")),
        )
            .into_response();
    }
    let start = Instant::now();
    let routed = match classify(state.router.clone(), request.query).await {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let latency_ms = start.elapsed().as_secs_f64() * 1e3;
    let response = match routed {
        Ok(decision) => {
            state.metrics.count_outcome(&decision.outcome);
            RouteResponse {
                decision: decision.outcome.label().to_string(),
                scores: decision.scores,
                latency_ms,
                backend_error: None,
            }
        }
        // Fail closed: a backend failure is scored as a rejection.
        Err(e) => {
            state.metrics.rejects.fetch_add(1, Ordering::Relaxed);
            RouteResponse {
                decision: "reject".to_string(),
                scores: indexmap::IndexMap::new(),
                latency_ms,
                backend_error: Some(e.to_string()),
            }
        }
    };
    (StatusCode::OK, Json(response)).into_response()
}

fn refusal(state: &AppState, latency_ms: f64, backend_error: Option<String>) -> Response {
    let status = match state.reject {
        RejectBehavior::StructuredRefusal => StatusCode::OK,
        RejectBehavior::Http403 => StatusCode::FORBIDDEN,
    };
    let mut body = serde_json::json!({
        "decision": "reject",
        "reason": "out_of_distribution",
        "latency_ms": latency_ms,
    });
    if let Some(err) = backend_error {
        body["backend_error"] = serde_json::Value::String(err);
    }
    (status, Json(body)).into_response()
}

async fn forward_handler(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    state.metrics.requests.fetch_add(1, Ordering::Relaxed);
    let Some(upstreams) = &state.upstreams else {
        return (
            StatusCode::BAD_REQUEST,
            Json(error_body("forwarding mode is not configured; use /route")),
        )
            .into_response();
    };
    let Ok(query) = std::str::from_utf8(&body) else {
        return (
            StatusCode::BAD_REQUEST,
            Json(error_body("body must be UTF-8 text")),
        )
            .into_response();
    };
    if query.trim().is_empty() {
        return (
            StatusCode::BAD_REQUEST,
            Json(error_body("query must not be empty")),
        )
            .into_response();
    }
    let start = Instant::now();
    let routed = match classify(state.router.clone(), query.to_string()).await {
        Ok(r) => r,
        Err(resp) => return resp,
    };
    let decision = match routed {
        Ok(d) => d,
        Err(e) => {
            // Fail closed, surfacing the backend failure in the refusal.
            state.metrics.rejects.fetch_add(1, Ordering::Relaxed);
            let latency_ms = start.elapsed().as_secs_f64() * 1e3;
            return refusal(&state, latency_ms, Some(e.to_string()));
        }
    };
    state.metrics.count_outcome(&decision.outcome);
    let domain = match decision.outcome {
        Outcome::Reject => {
            let latency_ms = start.elapsed().as_secs_f64() * 1e3;
            return refusal(&state, latency_ms, None);
        }
        Outcome::Domain(d) => d,
    };
    let Some(url) = upstreams.get(&domain) else {
        return (
            StatusCode::INTERNAL_SERVER_ERROR,
            Json(error_body(&format!("no upstream configured for {domain}"))),
        )
            .into_response();
    };
    let mut upstream_request = state
        .http
        .post(url)
        .header(DOMAIN_HEADER, &domain)
        .body(body.clone());
    if let Some(ct) = headers.get(header::CONTENT_TYPE) {
        upstream_request = upstream_request.header(header::CONTENT_TYPE, ct);
    }
    match upstream_request.send().await {
        Ok(upstream) => {
            let status = upstream.status();
            let content_type = upstream.headers().get(header::CONTENT_TYPE).cloned();
            let relayed = upstream.bytes().await.unwrap_or_default();
            let latency_ms = start.elapsed().as_secs_f64() * 1e3;
            let mut response = Response::builder()
                .status(StatusCode::from_u16(status.as_u16()).unwrap_or(StatusCode::BAD_GATEWAY))
                .header(HeaderName::from_static(DOMAIN_HEADER), &domain)
                .header(
                    HeaderName::from_static(LATENCY_HEADER),
                    format!("{latency_ms:.3}"),
                );
            if let Some(ct) = content_type {
                response = response.header(header::CONTENT_TYPE, ct);
            }
            response
                .body(axum::body::Body::from(relayed))
                .unwrap_or_else(|e| {
                    (
                        StatusCode::INTERNAL_SERVER_ERROR,
                        Json(error_body(&format!("relay failed: {e}"))),
                    )
                        .into_response()
                })
        }
        Err(e) => {
            let latency_ms = start.elapsed().as_secs_f64() * 1e3;
            (
                StatusCode::BAD_GATEWAY,
                Json(serde_json::json!({
                    "decision": domain,
                    "upstream_error": e.to_string(),
                    "latency_ms": latency_ms,
                })),
            )
                .into_response()
        }
    }
}

async fn healthz() -> &'static str {
    "ok"
}

async fn metrics_handler(State(state): State<Arc<AppState>>) -> Response {
    (
        StatusCode::OK,
        [(header::CONTENT_TYPE, "text/plain; charset=utf-8")],
        state.metrics.render(),
    )
        .into_response()
}

pub fn build_app(config: &GatewayConfig, router: Arc<dyn Router>) -> axum::Router {
    let state = Arc::new(AppState {
        metrics: Metrics::new(router.domains()),
        router,
        reject: config.reject,
        upstreams: config.upstreams.clone(),
        http: reqwest::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .expect("default TLS-free client construction cannot fail"),
    });
    axum::Router::new()
        .route("/route", post(route_handler))
        .route("/forward", post(forward_handler))
        .route("/healthz", get(healthz))
        .route("/metrics", get(metrics_handler))
        .layer(DefaultBodyLimit::max(config.body_limit_bytes))
        .with_state(state)
}

/// Binds and runs until `shutdown` fires, then drains in-flight
/// requests. Returns the bound address via `ready` once listening.
pub async fn serve_with_shutdown(
    config: GatewayConfig,
    ready: oneshot::Sender<SocketAddr>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    let router = load_router(&config)?;
    config.validate_upstreams(router.domains())?;
    let listener = TcpListener::bind(&config.listen).await.map_err(|source| {
        ServeError::Bind { addr: config.listen.clone(), source }
    })?;
    let addr = listener.local_addr().map_err(|source| ServeError::Bind {
        addr: config.listen.clone(),
        source,
    })?;
    let app = build_app(&config, router);
    let _ = ready.send(addr);
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|source| ServeError::Bind { addr: addr.to_string(), source })
}

/// Runs until SIGINT/SIGTERM.
pub async fn serve(config: GatewayConfig) -> Result<(), ServeError> {
    let (ready, ready_rx) = oneshot::channel();
    tokio::spawn(async move {
        if let Ok(addr) = ready_rx.await {
            eprintln!("listening on {addr}");
        }
    });
    serve_with_shutdown(config, ready, shutdown_signal()).await
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut sig) => {
                sig.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        () = ctrl_c => {}
        () = terminate => {}
    }
}
