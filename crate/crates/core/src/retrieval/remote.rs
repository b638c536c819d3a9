//! OpenSearch-compatible remote search client: a match query on the `text`
//! field with `size = k`. Endpoint, index name, and credentials come from the
//! environment (`RAGLINE_SEARCH_ENDPOINT`, `RAGLINE_SEARCH_INDEX`,
//! `RAGLINE_SEARCH_API_KEY`) with config values as fallback.

use serde::Deserialize;
use serde_json::json;

use crate::types::Document;

pub const SEARCH_ENDPOINT_ENV: &str = "RAGLINE_SEARCH_ENDPOINT";
pub const SEARCH_INDEX_ENV: &str = "RAGLINE_SEARCH_INDEX";
pub const SEARCH_API_KEY_ENV: &str = "RAGLINE_SEARCH_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum RemoteSearchError {
    #[error("search backend unavailable: {0}")]
    Unavailable(String),
    #[error("search response malformed: {0}")]
    Malformed(String),
}

#[derive(Debug, Deserialize)]
struct WireSource {
    #[serde(default)]
    text: String,
    #[serde(default)]
    title: Option<String>,
    #[serde(default)]
    url: Option<String>,
}

#[derive(Debug, Deserialize)]
struct WireHit {
    #[serde(rename = "_id")]
    id: String,
    #[serde(rename = "_score")]
    score: f64,
    #[serde(rename = "_source")]
    source: WireSource,
}

#[derive(Debug, Deserialize)]
struct WireHitsEnvelope {
    hits: Vec<WireHit>,
}

#[derive(Debug, Deserialize)]
struct WireSearchResponse {
    hits: WireHitsEnvelope,
}

#[derive(Debug, Clone)]
pub struct RemoteSearchClient {
    client: reqwest::Client,
    endpoint: String,
    index: String,
}

impl RemoteSearchClient {
    /// Builds the client, preferring environment variables over the config
    /// values passed in.
    pub fn from_env(
        config_endpoint: Option<&str>,
        config_index: Option<&str>,
    ) -> Result<Self, RemoteSearchError> {
        let endpoint = std::env::var(SEARCH_ENDPOINT_ENV)
            .ok()
            .or_else(|| config_endpoint.map(str::to_string))
            .ok_or_else(|| {
                RemoteSearchError::Unavailable(format!(
                    "no search endpoint: set {SEARCH_ENDPOINT_ENV} or config.search_endpoint"
                ))
            })?;
        let index = std::env::var(SEARCH_INDEX_ENV)
            .ok()
            .or_else(|| config_index.map(str::to_string))
            .unwrap_or_else(|| "documents".to_string());
        Ok(Self {
            client: reqwest::Client::new(),
            endpoint,
            index,
        })
    }

    /// Top-k match-query search returning documents with backend scores.
    pub async fn search(
        &self,
        query_text: &str,
        k: usize,
    ) -> Result<Vec<(Document, f64)>, RemoteSearchError> {
        let url = format!(
            "{}/{}/_search",
            self.endpoint.trim_end_matches('/'),
            self.index
        );
        let body = json!({
            "size": k,
            "query": { "match": { "text": query_text } },
        });
        let mut request = self.client.post(&url).json(&body);
        if let Ok(token) = std::env::var(SEARCH_API_KEY_ENV) {
            request = request.bearer_auth(token);
        }
        let response = request
            .send()
            .await
            .map_err(|e| RemoteSearchError::Unavailable(format!("transport: {e}")))?;
        let status = response.status();
        if !status.is_success() {
            return Err(RemoteSearchError::Unavailable(format!("status {status}")));
        }
        let parsed: WireSearchResponse = response
            .json()
            .await
            .map_err(|e| RemoteSearchError::Malformed(e.to_string()))?;
        Ok(parsed
            .hits
            .hits
            .into_iter()
            .map(|hit| {
                (
                    Document {
                        doc_id: hit.id,
                        text: hit.source.text,
                        title: hit.source.title,
                        source_uri: hit.source.url,
                    },
                    hit.score,
                )
            })
            .collect())
    }
}
