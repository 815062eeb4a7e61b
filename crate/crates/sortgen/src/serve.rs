//! HTTP rerank service: `POST /rerank` and `GET /healthz`.

use std::future::IntoFuture;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde_json::json;
use sortgen_core::EngineConfig;

use crate::checkpoint::{self, Checkpoint};
use crate::rerank::{parse_request, rerank, RequestError};

/// The checkpoint, set once loading finishes. Requests before that get 503.
pub type Shared = Arc<OnceLock<Checkpoint>>;

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn error_response(status: StatusCode, message: &str) -> Response {
    json_response(status, json!({ "error": message }).to_string())
}

async fn rerank_route(State(state): State<Shared>, body: String) -> Response {
    if state.get().is_none() {
        return error_response(StatusCode::SERVICE_UNAVAILABLE, "checkpoint not loaded");
    }
    let req = match parse_request(&body) {
        Ok(r) => r,
        Err(e) => return error_response(StatusCode::BAD_REQUEST, &e.to_string()),
    };
    let result = tokio::task::spawn_blocking(move || rerank(state.get().expect("loaded"), &req)).await;
    match result {
        Ok(Ok(resp)) => json_response(StatusCode::OK, crate::rerank::render_response(&resp)),
        Ok(Err(e @ RequestError::Internal(_))) => error_response(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string()),
        Ok(Err(e)) => error_response(StatusCode::BAD_REQUEST, &e.to_string()),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, &e.to_string()),
    }
}

async fn health_route(State(state): State<Shared>) -> Response {
    match state.get() {
        Some(c) => json_response(StatusCode::OK, json!({ "status": "ok", "checkpoint": format!("{:016x}", c.hash) }).to_string()),
        None => json_response(StatusCode::SERVICE_UNAVAILABLE, json!({ "status": "loading" }).to_string()),
    }
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/rerank", post(rerank_route))
        .route("/healthz", get(health_route))
        .with_state(state)
}

/// Binds `port` immediately and loads the checkpoint in the background.
pub async fn serve(ckpt: PathBuf, expected: Option<EngineConfig>, port: u16) -> anyhow::Result<()> {
    let state: Shared = Arc::default();
    let listener = tokio::net::TcpListener::bind(SocketAddr::from(([0, 0, 0, 0], port))).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    let loader = Arc::clone(&state);
    let load = tokio::task::spawn_blocking(move || -> anyhow::Result<()> {
        let c = match &expected {
            Some(cfg) => checkpoint::load_expecting(&ckpt, cfg)?,
            None => checkpoint::load(&ckpt)?,
        };
        eprintln!("loaded checkpoint {:016x}", c.hash);
        let _ = loader.set(c);
        Ok(())
    });
    let server = axum::serve(listener, router(state)).into_future();
    tokio::pin!(server);
    tokio::select! {
        r = &mut server => return r.map_err(Into::into),
        r = load => r??,
    }
    server.await.map_err(Into::into)
}
