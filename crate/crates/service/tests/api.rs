use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use prefadapt::{AdaptConfig, Embedding, EmbeddingTable, RowMeta};
use prefadapt_service::{router, ProfileStore};
use serde_json::{json, Value};
use tower::ServiceExt;

fn corpus() -> Arc<EmbeddingTable> {
    let rows = [[1.0, 0.0], [0.0, 1.0], [0.6, 0.8], [-1.0, 0.0]]
        .iter()
        .map(|r| Embedding::new(r.to_vec()).unwrap())
        .collect();
    let meta = (0..4)
        .map(|i| RowMeta {
            uri: (i == 0).then(|| "img/a.png".to_string()),
            score: None,
        })
        .collect();
    Arc::new(EmbeddingTable::with_meta(2, ["a", "b", "c", "d"].map(String::from).to_vec(), rows, meta).unwrap())
}

fn app() -> axum::Router {
    router(Arc::new(
        ProfileStore::in_memory(corpus(), AdaptConfig::default()).unwrap(),
    ))
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

#[tokio::test]
async fn healthz_ok() {
    let (status, _) = call(&app(), "GET", "/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn profile_lifecycle() {
    let app = app();
    let (status, body) = call(&app, "POST", "/profiles", Some(json!({"base_vector": [3.0, 4.0]}))).await;
    assert_eq!(status, StatusCode::CREATED);
    let id = body["profile_id"].as_str().unwrap().to_string();

    let (status, summary) = call(&app, "GET", &format!("/profiles/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(summary["seq_count"], 0);
    assert_eq!(summary["dim"], 2);
    assert_eq!(summary["drift_cosine"], 1.0);
    assert_eq!(summary["current"], json!([0.6, 0.8]));

    let (status, ack) = call(
        &app,
        "POST",
        &format!("/profiles/{id}/events"),
        Some(json!({"winner_id": "a", "loser_id": "b"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ack["seq"], 1);
    assert!(ack["drift_cosine"].as_f64().unwrap() < 1.0);

    let (_, summary) = call(&app, "GET", &format!("/profiles/{id}"), None).await;
    assert_eq!(summary["seq_count"], 1);

    let (status, ranked) = call(&app, "POST", &format!("/profiles/{id}/rank"), Some(json!({"k": 10}))).await;
    assert_eq!(status, StatusCode::OK);
    let ranking = ranked["ranking"].as_array().unwrap();
    assert_eq!(ranking.len(), 4);
    let scores: Vec<f64> = ranking.iter().map(|r| r["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    let a = ranking.iter().find(|r| r["id"] == "a").unwrap();
    assert_eq!(a["uri"], "img/a.png");
    assert!(ranking.iter().find(|r| r["id"] == "b").unwrap().get("uri").is_none());

    let (_, ranked) = call(
        &app,
        "POST",
        &format!("/profiles/{id}/rank"),
        Some(json!({"candidate_ids": ["b", "d"], "k": 1})),
    )
    .await;
    assert_eq!(ranked["ranking"].as_array().unwrap().len(), 1);

    let (_, ranked) = call(
        &app,
        "POST",
        &format!("/profiles/{id}/rank"),
        Some(json!({"candidate_ids": [], "k": 3})),
    )
    .await;
    assert_eq!(ranked["ranking"], json!([]));
}

#[tokio::test]
async fn explicit_ids_and_conflicts() {
    let app = app();
    let create = json!({"base_id": "c", "profile_id": "alice", "config": {"epsilon": 0.5}});
    let (status, body) = call(&app, "POST", "/profiles", Some(create.clone())).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["profile_id"], "alice");
    let (_, summary) = call(&app, "GET", "/profiles/alice", None).await;
    assert_eq!(summary["config"]["epsilon"], 0.5);

    let (status, body) = call(&app, "POST", "/profiles", Some(create)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error_code"], "duplicate_profile");
    assert_eq!(body["details"]["profile_id"], "alice");
}

#[tokio::test]
async fn error_statuses() {
    let app = app();
    let (_, body) = call(&app, "POST", "/profiles", Some(json!({"base_id": "a"}))).await;
    let id = body["profile_id"].as_str().unwrap().to_string();

    let cases = [
        (
            "GET",
            "/profiles/ghost".to_string(),
            None,
            StatusCode::NOT_FOUND,
            "not_found",
        ),
        (
            "POST",
            "/profiles".into(),
            Some(json!({"base_id": "zz"})),
            StatusCode::NOT_FOUND,
            "not_found",
        ),
        (
            "POST",
            "/profiles".into(),
            Some(json!({"base_vector": [1.0, 0.0, 0.0]})),
            StatusCode::UNPROCESSABLE_ENTITY,
            "dimension_mismatch",
        ),
        (
            "POST",
            "/profiles".into(),
            Some(json!({"base_id": "a", "base_vector": [1.0, 0.0]})),
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_request",
        ),
        (
            "POST",
            "/profiles".into(),
            Some(json!({"base_vector": [0.0, 0.0]})),
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_request",
        ),
        (
            "POST",
            format!("/profiles/{id}/events"),
            Some(json!({"winner_id": "a", "loser_id": "a"})),
            StatusCode::UNPROCESSABLE_ENTITY,
            "self_pair",
        ),
        (
            "POST",
            format!("/profiles/{id}/events"),
            Some(json!({"winner_id": "a", "loser_id": "nope"})),
            StatusCode::NOT_FOUND,
            "not_found",
        ),
        (
            "POST",
            "/profiles/ghost/events".into(),
            Some(json!({"winner_id": "a", "loser_id": "b"})),
            StatusCode::NOT_FOUND,
            "not_found",
        ),
        (
            "POST",
            format!("/profiles/{id}/rank"),
            Some(json!({"k": 0})),
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_request",
        ),
        (
            "POST",
            format!("/profiles/{id}/events"),
            Some(json!({"winner_id": "a"})),
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_request",
        ),
    ];
    for (method, uri, body, status, code) in cases {
        let (got, resp) = call(&app, method, &uri, body.clone()).await;
        assert_eq!(got, status, "{method} {uri} {body:?}: {resp}");
        assert_eq!(resp["error_code"], code, "{method} {uri}");
        assert!(resp["message"].as_str().is_some_and(|m| !m.is_empty()));
    }

    let (status, body) = call(
        &app,
        "POST",
        &format!("/profiles/{id}/rank"),
        Some(json!({"candidate_ids": ["a", "x1", "x2"], "k": 2})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["details"]["unknown_ids"], json!(["x1", "x2"]));

    let req = Request::builder()
        .method("POST")
        .uri("/profiles")
        .header("content-type", "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert!(resp.status().is_client_error());
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body: Value = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(body["error_code"], "invalid_request");
}

#[tokio::test]
async fn serves_over_tcp() {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let store = Arc::new(ProfileStore::in_memory(corpus(), AdaptConfig::default()).unwrap());
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(prefadapt_service::serve(listener, store, async {
        rx.await.ok();
    }));
    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    stream
        .write_all(b"GET /healthz HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut out = String::new();
    stream.read_to_string(&mut out).await.unwrap();
    assert!(out.starts_with("HTTP/1.1 200"), "{out}");
    tx.send(()).unwrap();
    server.await.unwrap().unwrap();
}
