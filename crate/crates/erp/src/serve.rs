//! HTTP routing service over read-only predictor state.
//!
//! `POST /route` scores a client-supplied embedding against every pooled
//! model and returns the cost-adjusted argmax; `GET /healthz` reports the
//! loaded models. Until loading finishes both endpoints answer 503.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use erp_core::routing::select;
use erp_core::{LinearPredictor, ModelPool};
use serde::{Deserialize, Serialize};

use crate::{io, Error, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteRequest {
    pub embedding: Vec<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model_id: String,
    pub predicted_er: f64,
    pub cost_adjusted_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteResponse {
    pub chosen_model_id: String,
    pub scores: Vec<ModelScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub dim: usize,
    pub models: Vec<String>,
}

/// Loaded predictors in pool order.
#[derive(Debug, Clone)]
pub struct RouterState {
    predictors: Vec<LinearPredictor>,
    pool: ModelPool,
    costs: Vec<f64>,
    default_lambda: f64,
}

impl RouterState {
    pub fn new(predictors: Vec<LinearPredictor>, pool: ModelPool, default_lambda: f64) -> Result<Self> {
        if predictors.len() != pool.len()
            || predictors.iter().zip(&pool.models).any(|(p, m)| p.model_id != m.id)
        {
            return Err(Error::Data("predictors do not match the pool".into()));
        }
        if predictors.iter().any(|p| p.dim != predictors[0].dim) {
            return Err(Error::Data("predictor dimensions disagree".into()));
        }
        if !(default_lambda >= 0.0) {
            return Err(Error::Usage(format!("default lambda must be >= 0, got {default_lambda}")));
        }
        let costs = pool.costs();
        Ok(Self { predictors, pool, costs, default_lambda })
    }

    pub fn load(predictors_dir: &std::path::Path, pool_path: &std::path::Path, default_lambda: f64) -> Result<Self> {
        let pool = io::load_pool(pool_path)?;
        let predictors = io::load_predictors_for_pool(predictors_dir, &pool)?;
        Self::new(predictors, pool, default_lambda)
    }

    pub fn dim(&self) -> usize {
        self.predictors[0].dim
    }

    pub fn health(&self) -> Health {
        Health { status: "ok".into(), dim: self.dim(), models: self.pool.ids() }
    }

    /// Same decision rule as offline ERP routing.
    pub fn route(&self, request: &RouteRequest) -> std::result::Result<RouteResponse, String> {
        let lambda = request.lambda.unwrap_or(self.default_lambda);
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(format!("lambda must be a finite non-negative number, got {lambda}"));
        }
        if request.embedding.len() != self.dim() {
            return Err(format!("embedding has dim {}, expected {}", request.embedding.len(), self.dim()));
        }
        let predicted: Vec<f64> = self
            .predictors
            .iter()
            .map(|p| p.predict(&request.embedding))
            .collect::<erp_core::Result<_>>()
            .map_err(|e| e.to_string())?;
        let chosen = select(&predicted, &self.costs, lambda);
        let scores = predicted
            .iter()
            .zip(&self.pool.models)
            .map(|(&er, m)| ModelScore {
                model_id: m.id.clone(),
                predicted_er: er,
                cost_adjusted_score: er - lambda * m.cost,
            })
            .collect();
        Ok(RouteResponse { chosen_model_id: self.pool.models[chosen].id.clone(), scores })
    }
}

pub type SharedState = Arc<OnceLock<RouterState>>;

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: message.into() })).into_response()
}

async fn healthz(State(state): State<SharedState>) -> Response {
    match state.get() {
        Some(s) => Json(s.health()).into_response(),
        None => error(StatusCode::SERVICE_UNAVAILABLE, "models are loading"),
    }
}

async fn route(State(state): State<SharedState>, body: Bytes) -> Response {
    let Some(s) = state.get() else {
        return error(StatusCode::SERVICE_UNAVAILABLE, "models are loading");
    };
    let request: RouteRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("invalid request: {e}")),
    };
    match s.route(&request) {
        Ok(resp) => Json(resp).into_response(),
        Err(msg) => error(StatusCode::BAD_REQUEST, msg),
    }
}

pub fn app(state: SharedState) -> Router {
    Router::new().route("/route", post(route)).route("/healthz", get(healthz)).with_state(state)
}

pub struct ServeConfig {
    pub predictors_dir: PathBuf,
    pub pool: PathBuf,
    pub bind: SocketAddr,
    pub default_lambda: f64,
}

/// Binds, loads the models in the background and serves until Ctrl-C.
pub async fn serve(config: ServeConfig) -> Result<()> {
    let listener =
        tokio::net::TcpListener::bind(config.bind).await.map_err(|e| Error::io(config.bind.to_string(), e))?;
    tracing::info!(addr = %config.bind, "listening");
    let state: SharedState = Arc::new(OnceLock::new());
    let loader = {
        let state = state.clone();
        tokio::task::spawn_blocking(move || -> Result<()> {
            let loaded = RouterState::load(&config.predictors_dir, &config.pool, config.default_lambda)?;
            tracing::info!(models = ?loaded.pool.ids(), dim = loaded.dim(), "models loaded");
            let _ = state.set(loaded);
            Ok(())
        })
    };
    let server = axum::serve(listener, app(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        });
    let server = tokio::spawn(async move { server.await });
    match loader.await {
        Ok(Ok(())) => {}
        Ok(Err(e)) => return Err(e),
        Err(join) => return Err(Error::Data(format!("model loading panicked: {join}"))),
    }
    server
        .await
        .map_err(|e| Error::Data(e.to_string()))?
        .map_err(|e| Error::io(config.bind.to_string(), e))
}
