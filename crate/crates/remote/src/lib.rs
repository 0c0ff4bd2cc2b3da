//! HTTP clients for the three remote interfaces (embedding provider,
//! guideline parser, planner) and an axum server that backs them with the
//! deterministic local defaults.

pub mod server;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use ifct_core::basefn::{EmbeddingProvider, ProviderError};
use ifct_core::guideline::{parse_guideline, GuidelineError, GuidelineTree};
use ifct_core::planner::PlanService;

/// Wire format of the embedding endpoint.
#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
    pub dim: usize,
}

/// Wire format of the planner endpoint: the guideline document and registry
/// manifest as parsed JSON values.
#[derive(Debug, Serialize, Deserialize)]
pub struct PlanRequest {
    pub tree: serde_json::Value,
    pub registry: serde_json::Value,
}

fn http_client() -> Result<reqwest::blocking::Client, ProviderError> {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(30))
        .build()
        .map_err(|e| ProviderError::Transport(e.to_string()))
}

fn post_for_text(
    client: &reqwest::blocking::Client,
    url: &str,
    body: Vec<u8>,
    content_type: &str,
) -> Result<String, ProviderError> {
    let response = client
        .post(url)
        .header("content-type", content_type)
        .body(body)
        .send()
        .map_err(|e| ProviderError::Transport(e.to_string()))?;
    let status = response.status();
    let text = response
        .text()
        .map_err(|e| ProviderError::Transport(e.to_string()))?;
    if !status.is_success() {
        return Err(ProviderError::BadResponse(format!("{status}: {text}")));
    }
    Ok(text)
}

/// Embedding provider backed by a remote HTTP endpoint. Returned vectors
/// must be unit-norm within 1e-6.
pub struct RemoteEmbedding {
    url: String,
    dim: usize,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedding {
    /// Connects and probes the endpoint once to learn its dimension.
    pub fn connect(url: &str) -> Result<Self, ProviderError> {
        let client = http_client()?;
        let mut provider = Self {
            url: url.to_string(),
            dim: 0,
            client,
        };
        let probe = provider.request(&["dimension probe".to_string()])?;
        provider.dim = probe.dim;
        Ok(provider)
    }

    fn request(&self, texts: &[String]) -> Result<EmbedResponse, ProviderError> {
        let body = serde_json::to_vec(&EmbedRequest {
            texts: texts.to_vec(),
        })
        .map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        let text = post_for_text(&self.client, &self.url, body, "application/json")?;
        let response: EmbedResponse = serde_json::from_str(&text)
            .map_err(|e| ProviderError::BadResponse(format!("embed response: {e}")))?;
        if response.vectors.len() != texts.len() {
            return Err(ProviderError::BadResponse(format!(
                "{} vectors for {} texts",
                response.vectors.len(),
                texts.len()
            )));
        }
        for vector in &response.vectors {
            if vector.len() != response.dim {
                return Err(ProviderError::WrongDim {
                    expected: response.dim,
                    found: vector.len(),
                });
            }
            let norm: f64 = vector.iter().map(|c| c * c).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(ProviderError::NotUnitNorm { norm });
            }
        }
        Ok(response)
    }
}

impl EmbeddingProvider for RemoteEmbedding {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, ProviderError> {
        Ok(self
            .request(&[text.to_string()])?
            .vectors
            .into_iter()
            .next()
            .expect("length checked"))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, ProviderError> {
        let owned: Vec<String> = texts.iter().map(|t| t.to_string()).collect();
        Ok(self.request(&owned)?.vectors)
    }
}

/// Client for the external guideline-parser service: posts raw document
/// bytes, receives the guideline schema, and validates it locally.
pub struct RemoteGuidelineParser {
    url: String,
    client: reqwest::blocking::Client,
}

impl RemoteGuidelineParser {
    pub fn new(url: &str) -> Result<Self, ProviderError> {
        Ok(Self {
            url: url.to_string(),
            client: http_client()?,
        })
    }

    pub fn parse(&self, document_bytes: &[u8]) -> Result<GuidelineTree, GuidelineError> {
        let text = post_for_text(
            &self.client,
            &self.url,
            document_bytes.to_vec(),
            "application/octet-stream",
        )
        .map_err(|e| GuidelineError::Schema(e.to_string()))?;
        parse_guideline(&text)
    }
}

/// Client for the remote planner service.
pub struct RemotePlanner {
    url: String,
    client: reqwest::blocking::Client,
}

impl RemotePlanner {
    pub fn new(url: &str) -> Result<Self, ProviderError> {
        Ok(Self {
            url: url.to_string(),
            client: http_client()?,
        })
    }
}

impl PlanService for RemotePlanner {
    fn generate_plan(
        &self,
        tree_document: &str,
        registry_manifest: &str,
    ) -> Result<String, ProviderError> {
        let request = PlanRequest {
            tree: serde_json::from_str(tree_document)
                .map_err(|e| ProviderError::BadResponse(format!("tree document: {e}")))?,
            registry: serde_json::from_str(registry_manifest)
                .map_err(|e| ProviderError::BadResponse(format!("registry manifest: {e}")))?,
        };
        let body =
            serde_json::to_vec(&request).map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        post_for_text(&self.client, &self.url, body, "application/json")
    }
}
