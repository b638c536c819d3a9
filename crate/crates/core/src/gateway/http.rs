//! OpenAI-compatible chat-completions backend.
//!
//! Speaks `POST {base}/chat/completions` with model/messages/temperature/
//! max_tokens. The bearer token comes from `RAGLINE_API_KEY`.

use serde::{Deserialize, Serialize};

use super::{BackendError, BackendRequest};

pub const API_KEY_ENV: &str = "RAGLINE_API_KEY";

#[derive(Debug, Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Debug, Deserialize)]
struct WireChoice {
    message: WireResponseMessage,
}

#[derive(Debug, Deserialize)]
struct WireResponseMessage {
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Debug)]
pub struct HttpChatBackend {
    client: reqwest::Client,
    /// Used when a binding carries no endpoint of its own.
    default_endpoint: Option<String>,
}

impl HttpChatBackend {
    pub fn new(default_endpoint: Option<String>) -> Self {
        Self {
            client: reqwest::Client::new(),
            default_endpoint,
        }
    }

    pub(super) async fn send(&self, request: &BackendRequest) -> Result<String, BackendError> {
        let base = request
            .endpoint
            .as_deref()
            .or(self.default_endpoint.as_deref())
            .ok_or_else(|| {
                BackendError::Fatal(format!(
                    "no endpoint configured for model {}",
                    request.model_id
                ))
            })?;
        let url = format!("{}/chat/completions", base.trim_end_matches('/'));
        let body = WireRequest {
            model: &request.model_id,
            messages: vec![
                WireMessage {
                    role: "system",
                    content: &request.system_prompt,
                },
                WireMessage {
                    role: "user",
                    content: &request.user_prompt,
                },
            ],
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };

        let mut req = self.client.post(&url).json(&body);
        if let Ok(token) = std::env::var(API_KEY_ENV) {
            req = req.bearer_auth(token);
        }

        let response = req
            .send()
            .await
            .map_err(|e| BackendError::Transient(format!("transport: {e}")))?;

        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(BackendError::Transient(format!("status {status}")));
        }
        if !status.is_success() {
            let text = response.text().await.unwrap_or_default();
            return Err(BackendError::Fatal(format!("status {status}: {text}")));
        }

        let parsed: WireResponse = response
            .json()
            .await
            .map_err(|e| BackendError::Malformed(format!("bad completion body: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Malformed("response carries no choices".into()))?;
        choice
            .message
            .content
            .ok_or_else(|| BackendError::Malformed("choice carries no content".into()))
    }
}
