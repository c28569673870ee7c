use std::sync::{Arc, OnceLock};

use erp::serve::{app, RouteResponse, RouterState, SharedState};
use erp_core::{LinearPredictor, ModelPool, PoolEntry};

fn state() -> RouterState {
    let pool = ModelPool::new(vec![
        PoolEntry { id: "small".into(), cost: 1.0 },
        PoolEntry { id: "large".into(), cost: 4.0 },
    ])
    .unwrap();
    let predictors = vec![
        LinearPredictor { model_id: "small".into(), beta: 1.0, dim: 2, bias: 0.2, weights: vec![0.0, 0.0] },
        LinearPredictor { model_id: "large".into(), beta: 1.0, dim: 2, bias: 0.5, weights: vec![1.0, 0.0] },
    ];
    RouterState::new(predictors, pool, 0.0).unwrap()
}

async fn spawn(shared: SharedState) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app(shared)).await });
    format!("http://{addr}")
}

#[tokio::test]
async fn routes_and_reports_health() {
    let shared: SharedState = Arc::new(OnceLock::new());
    let _ = shared.set(state());
    let base = spawn(shared).await;
    let client = reqwest::Client::new();

    let health: serde_json::Value = client.get(format!("{base}/healthz")).send().await.unwrap().json().await.unwrap();
    assert_eq!(health["dim"], 2);
    assert_eq!(health["models"], serde_json::json!(["small", "large"]));

    let resp: RouteResponse = client
        .post(format!("{base}/route"))
        .json(&serde_json::json!({"embedding": [1.0, 5.0]}))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(resp.chosen_model_id, "large");
    assert_eq!(resp.scores[1].predicted_er, 1.5);

    // 1.5 - 4λ vs 0.2 - λ: at λ = 0.5 small wins.
    let resp: RouteResponse = client
        .post(format!("{base}/route"))
        .json(&serde_json::json!({"embedding": [1.0, 5.0], "lambda": 0.5}))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(resp.chosen_model_id, "small");
    assert_eq!(resp.scores[0].cost_adjusted_score, 0.2 - 0.5);
}

#[tokio::test]
async fn rejects_bad_requests() {
    let shared: SharedState = Arc::new(OnceLock::new());
    let _ = shared.set(state());
    let base = spawn(shared).await;
    let client = reqwest::Client::new();
    for body in [
        "not json".to_string(),
        r#"{"embedding": [1.0]}"#.to_string(),
        r#"{"embedding": [1.0, 2.0], "lambda": -1}"#.to_string(),
        r#"{"embedding": [1.0, 2.0], "extra": 1}"#.to_string(),
    ] {
        let status = client
            .post(format!("{base}/route"))
            .header("content-type", "application/json")
            .body(body.clone())
            .send()
            .await
            .unwrap()
            .status();
        assert_eq!(status, 400, "{body}");
    }
}

#[tokio::test]
async fn unavailable_until_loaded() {
    let shared: SharedState = Arc::new(OnceLock::new());
    let base = spawn(shared.clone()).await;
    let client = reqwest::Client::new();
    assert_eq!(client.get(format!("{base}/healthz")).send().await.unwrap().status(), 503);
    let _ = shared.set(state());
    assert_eq!(client.get(format!("{base}/healthz")).send().await.unwrap().status(), 200);
}
