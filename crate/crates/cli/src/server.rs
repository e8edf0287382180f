//! Read-only HTTP search service.
//!
//! `GET /search` takes the same parameters as the `search` command (`id`,
//! `title`, `disease`, `intervention`, `outcome`, `keywords`, `k`) and returns
//! the body `search --json` prints. `GET /health` reports index size.

use std::collections::HashMap;
use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use serde_json::json;
use trialsearch::app::{SearchEngine, SearchRequest};
use trialsearch::corpus::Attribute;
use trialsearch::Error;

pub const DEFAULT_K: usize = 10;

pub fn router(engine: Arc<SearchEngine>) -> Router {
    Router::new()
        .route("/search", get(search))
        .route("/health", get(health))
        .with_state(engine)
}

pub async fn serve(engine: SearchEngine, addr: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(engine)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn json_body(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn error(status: StatusCode, message: String) -> Response {
    json_body(status, json!({ "error": message }).to_string() + "\n")
}

/// Builds a request from query parameters; unknown keys are rejected.
pub fn parse_params(params: &HashMap<String, String>) -> Result<SearchRequest, String> {
    let mut req = SearchRequest {
        k: DEFAULT_K,
        ..Default::default()
    };
    for (key, value) in params {
        match key.as_str() {
            "id" => req.id = Some(value.clone()),
            "k" => req.k = value.parse().map_err(|_| format!("k must be a positive integer, got {value:?}"))?,
            other => {
                let attr = Attribute::parse(other).ok_or_else(|| format!("unknown parameter {other:?}"))?;
                req.attributes.insert(attr, value.clone());
            }
        }
    }
    req.validate().map_err(|e| e.to_string())?;
    Ok(req)
}

async fn search(State(engine): State<Arc<SearchEngine>>, Query(params): Query<HashMap<String, String>>) -> Response {
    let req = match parse_params(&params) {
        Ok(r) => r,
        Err(m) => return error(StatusCode::BAD_REQUEST, m),
    };
    let result = tokio::task::spawn_blocking(move || engine.search(&req)).await;
    match result {
        Ok(Ok(resp)) => json_body(StatusCode::OK, resp.to_json()),
        Ok(Err(e @ (Error::UnknownId(_) | Error::Invalid(_)))) => error(StatusCode::BAD_REQUEST, e.to_string()),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn health(State(engine): State<Arc<SearchEngine>>) -> Response {
    let body = json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "n_docs": engine.index.len(),
        "dim": engine.index.dim(),
    });
    json_body(StatusCode::OK, body.to_string() + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(pairs: &[(&str, &str)]) -> HashMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn attribute_params() {
        let r = parse_params(&params(&[("title", "a"), ("disease", "b"), ("k", "5")])).unwrap();
        assert_eq!(r.k, 5);
        assert_eq!(r.attributes[&Attribute::Disease], "b");
    }

    #[test]
    fn default_k() {
        assert_eq!(parse_params(&params(&[("id", "x")])).unwrap().k, DEFAULT_K);
    }

    #[test]
    fn malformed_params() {
        for p in [
            params(&[]),
            params(&[("k", "five"), ("id", "x")]),
            params(&[("k", "0"), ("id", "x")]),
            params(&[("colour", "red")]),
            params(&[("id", "x"), ("title", "t")]),
        ] {
            assert!(parse_params(&p).is_err(), "{p:?}");
        }
    }
}
