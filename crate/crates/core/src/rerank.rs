//! Candidate pool reranking: score every (query, document) pair, sort
//! descending, keep the top N.
//!
//! Scoring goes through a remote cross-encoder service when configured; any
//! remote failure falls back to the deterministic lexical scorer so reranking
//! never fails outright on a nonempty pool. Ties break by original bundle
//! order first, so retrieval evidence decides between equal rerank scores.

use serde::Deserialize;
use serde_json::json;

use crate::retrieval::tokenize;
use crate::types::{RerankedContext, RerankedEntry};

pub const RERANK_ENDPOINT_ENV: &str = "RAGLINE_RERANK_ENDPOINT";
pub const RERANK_API_KEY_ENV: &str = "RAGLINE_RERANK_API_KEY";

/// One rerank call: the query text, the candidate pool in bundle order, and
/// how many entries to keep.
#[derive(Debug, Clone)]
pub struct RerankRequest {
    pub query_text: String,
    pub candidates: Vec<(String, String)>,
    pub n: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum RerankError {
    #[error("invalid rerank request: {0}")]
    InvalidRequest(String),
    #[error("reranker unavailable: {0}")]
    Unavailable(String),
    #[error("reranker response malformed: {0}")]
    Malformed(String),
}

/// Coverage of unique query terms in the document, in [0, 1]. An empty query
/// (after tokenization) scores 0.
pub fn score_pair_lexical(query_text: &str, doc_text: &str) -> f64 {
    let mut query_terms = tokenize(query_text);
    query_terms.sort();
    query_terms.dedup();
    if query_terms.is_empty() {
        return 0.0;
    }
    let doc_terms: std::collections::HashSet<String> = tokenize(doc_text).into_iter().collect();
    let present = query_terms.iter().filter(|t| doc_terms.contains(*t)).count();
    present as f64 / query_terms.len() as f64
}

/// Remote cross-encoder client: one batched request scoring every passage,
/// order-aligned with the input.
#[derive(Debug, Clone)]
pub struct RemoteReranker {
    client: reqwest::Client,
    endpoint: String,
}

#[derive(Debug, Deserialize)]
struct WireRerankResponse {
    scores: Vec<f64>,
}

impl RemoteReranker {
    pub fn from_env(config_endpoint: Option<&str>) -> Result<Self, RerankError> {
        let endpoint = std::env::var(RERANK_ENDPOINT_ENV)
            .ok()
            .or_else(|| config_endpoint.map(str::to_string))
            .ok_or_else(|| {
                RerankError::Unavailable(format!(
                    "no reranker endpoint: set {RERANK_ENDPOINT_ENV} or config.reranker_endpoint"
                ))
            })?;
        Ok(Self {
            client: reqwest::Client::new(),
            endpoint,
        })
    }

    pub async fn score_batch(
        &self,
        query_text: &str,
        passages: &[&str],
    ) -> Result<Vec<f64>, RerankError> {
        let body = json!({ "query": query_text, "passages": passages });
        let mut request = self.client.post(&self.endpoint).json(&body);
        if let Ok(token) = std::env::var(RERANK_API_KEY_ENV) {
            request = request.bearer_auth(token);
        }
        let response = request
            .send()
            .await
            .map_err(|e| RerankError::Unavailable(format!("transport: {e}")))?;
        let status = response.status();
        if !status.is_success() {
            return Err(RerankError::Unavailable(format!("status {status}")));
        }
        let parsed: WireRerankResponse = response
            .json()
            .await
            .map_err(|e| RerankError::Malformed(e.to_string()))?;
        if parsed.scores.len() != passages.len() {
            return Err(RerankError::Malformed(format!(
                "{} scores for {} passages",
                parsed.scores.len(),
                passages.len()
            )));
        }
        Ok(parsed.scores)
    }
}

/// The configured reranking backend.
#[derive(Debug, Clone)]
pub enum Reranker {
    Remote(RemoteReranker),
    Lexical,
}

/// Rerank outcome; `fallback_used` is set when the remote scorer failed and
/// the lexical scorer took over.
#[derive(Debug, Clone)]
pub struct RerankOutcome {
    pub context: RerankedContext,
    pub fallback_used: bool,
}

/// Scores every candidate, sorts by (score descending, bundle order, doc_id),
/// and keeps the first `min(n, |candidates|)` entries.
pub async fn rerank(request: &RerankRequest, reranker: &Reranker) -> Result<RerankOutcome, RerankError> {
    if request.candidates.is_empty() {
        return Err(RerankError::InvalidRequest("candidates are empty".into()));
    }
    if request.n < 1 {
        return Err(RerankError::InvalidRequest("n must be ≥ 1".into()));
    }

    let (scores, fallback_used) = match reranker {
        Reranker::Lexical => (lexical_scores(request), false),
        Reranker::Remote(remote) => {
            let passages: Vec<&str> = request.candidates.iter().map(|(_, t)| t.as_str()).collect();
            match remote.score_batch(&request.query_text, &passages).await {
                Ok(scores) => (scores, false),
                Err(e) => {
                    tracing::warn!("remote reranker failed, using lexical fallback: {e}");
                    (lexical_scores(request), true)
                }
            }
        }
    };

    Ok(RerankOutcome {
        context: select_top_n(request, &scores),
        fallback_used,
    })
}

fn lexical_scores(request: &RerankRequest) -> Vec<f64> {
    request
        .candidates
        .iter()
        .map(|(_, text)| score_pair_lexical(&request.query_text, text))
        .collect()
}

/// Full sort with the deterministic tie rule, then prefix of length
/// min(n, pool size). Sorting the complete pool keeps rerank(N=a) a prefix of
/// rerank(N=b) for a ≤ b.
fn select_top_n(request: &RerankRequest, scores: &[f64]) -> RerankedContext {
    let mut order: Vec<usize> = (0..request.candidates.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.cmp(&b))
            .then_with(|| request.candidates[a].0.cmp(&request.candidates[b].0))
    });
    let keep = request.n.min(order.len());
    RerankedContext {
        entries: order[..keep]
            .iter()
            .map(|&i| RerankedEntry {
                doc_id: request.candidates[i].0.clone(),
                rerank_score: scores[i],
            })
            .collect(),
        n: request.n,
    }
}
