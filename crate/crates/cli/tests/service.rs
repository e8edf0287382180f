mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use common::{bin, fixture, strings};
use http_body_util::BodyExt;
use tower::ServiceExt;
use trialsearch::app::SearchResponse;
use trialsearch_cli::server::router;

async fn get(app: &Router, uri: &str) -> (StatusCode, String) {
    let resp = app
        .clone()
        .oneshot(Request::get(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

#[tokio::test]
async fn health_reports_index_shape() {
    let f = fixture();
    let app = router(Arc::new(f.engine()));
    let (status, body) = get(&app, "/health").await;
    assert_eq!(status, StatusCode::OK);
    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["status"], "ok");
    assert_eq!(v["n_docs"], 60);
    assert_eq!(v["dim"], 16);
    assert!(v["version"].is_string());
}

#[tokio::test]
async fn search_returns_k_sorted_results_deterministically() {
    let f = fixture();
    let app = router(Arc::new(f.engine()));
    let uri = "/search?title=a%20study%20of&disease=syndrome&k=5";
    let (status, body) = get(&app, uri).await;
    assert_eq!(status, StatusCode::OK);
    let resp: SearchResponse = serde_json::from_str(&body).unwrap();
    assert_eq!(resp.results.len(), 5);
    assert!(resp.results.windows(2).all(|w| w[0].score >= w[1].score));
    assert_eq!(get(&app, uri).await.1, body);
}

#[tokio::test]
async fn malformed_queries_are_rejected() {
    let f = fixture();
    let app = router(Arc::new(f.engine()));
    for uri in [
        "/search",
        "/search?k=3",
        "/search?id=NCT00000001&k=zero",
        "/search?id=NCT00000001&k=0",
        "/search?id=NCT00000001&title=x",
        "/search?colour=red",
        "/search?id=NCT99999999",
    ] {
        let (status, body) = get(&app, uri).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri}");
        assert!(serde_json::from_str::<serde_json::Value>(&body).unwrap()["error"].is_string());
    }
    assert_eq!(get(&app, "/nowhere").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn service_body_equals_cli_json() {
    let f = fixture();
    let app = router(Arc::new(f.engine()));
    for (uri, flags) in [
        ("/search?id=NCT00000007&k=3", vec!["--id", "NCT00000007", "--k", "3"]),
        (
            "/search?intervention=placebo&outcome=response%20rate",
            vec!["--intervention", "placebo", "--outcome", "response rate"],
        ),
    ] {
        let (_, body) = get(&app, uri).await;
        let mut args = strings(&["search", "--json"]);
        args.extend(strings(&flags));
        args.extend(f.model_args());
        let out = bin(&args);
        assert!(out.status.success());
        assert_eq!(String::from_utf8(out.stdout).unwrap(), body);
    }
}
