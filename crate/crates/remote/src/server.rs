//! Local provider service: serves the embedding, guideline-parser, and
//! planner endpoints with the deterministic default implementations.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};

use ifct_core::basefn::{EmbeddingProvider, HashEmbedding};
use ifct_core::guideline::{parse_guideline, serialize_guideline};
use ifct_core::planner::{synthesize_plan, FunctionRegistry};

use crate::{EmbedRequest, EmbedResponse, PlanRequest};

pub struct ServerConfig {
    pub seed: u64,
    pub dim: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dim: HashEmbedding::DEFAULT_DIM,
        }
    }
}

struct AppState {
    embedding: HashEmbedding,
}

type Failure = (StatusCode, String);

fn bad_request(message: String) -> Failure {
    (StatusCode::BAD_REQUEST, message)
}

async fn embed(
    State(state): State<Arc<AppState>>,
    Json(request): Json<EmbedRequest>,
) -> Result<Json<EmbedResponse>, Failure> {
    let mut vectors = Vec::with_capacity(request.texts.len());
    for text in &request.texts {
        vectors.push(
            state
                .embedding
                .embed(text)
                .map_err(|e| bad_request(e.to_string()))?,
        );
    }
    Ok(Json(EmbedResponse {
        vectors,
        dim: state.embedding.dim(),
    }))
}

async fn parse(body: Bytes) -> Result<String, Failure> {
    let text = std::str::from_utf8(&body).map_err(|e| bad_request(e.to_string()))?;
    let tree = parse_guideline(text).map_err(|e| bad_request(e.to_string()))?;
    Ok(serialize_guideline(&tree))
}

async fn plan(Json(request): Json<PlanRequest>) -> Result<String, Failure> {
    let tree_doc =
        serde_json::to_string(&request.tree).map_err(|e| bad_request(e.to_string()))?;
    let tree = parse_guideline(&tree_doc).map_err(|e| bad_request(e.to_string()))?;
    let registry: FunctionRegistry = serde_json::from_value(request.registry)
        .map_err(|e| bad_request(format!("registry manifest: {e}")))?;
    let plan = synthesize_plan(&tree, &registry).map_err(|e| bad_request(e.to_string()))?;
    Ok(plan.to_document())
}

/// Routes: POST /v1/embed, /v1/parse-guideline, /v1/plan.
pub fn router(config: ServerConfig) -> Router {
    let state = Arc::new(AppState {
        embedding: HashEmbedding::with_dim(config.seed, config.dim),
    });
    Router::new()
        .route("/v1/embed", post(embed))
        .with_state(state)
        .route("/v1/parse-guideline", post(parse))
        .route("/v1/plan", post(plan))
}

/// Serves until the process exits.
pub async fn serve(
    listener: tokio::net::TcpListener,
    config: ServerConfig,
) -> std::io::Result<()> {
    axum::serve(listener, router(config)).await
}
