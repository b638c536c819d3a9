//! Single chokepoint for all chat-completion traffic.
//!
//! Every model call in the pipeline flows through [`Gateway::complete`] or
//! [`Gateway::complete_n`]: request shaping, bounded retries with exponential
//! backoff, response caching, deadline enforcement, and a global in-flight
//! limiter all live here. Backends are either the real HTTP endpoint or a
//! scripted mock transcript.

mod cache;
mod http;
mod transcript;

pub use cache::{CacheKey, ResponseCache};
pub use http::{HttpChatBackend, API_KEY_ENV};
pub use transcript::{ScriptedMock, TranscriptError};

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;
use tokio::sync::Semaphore;

use crate::config::ModelBinding;

const MAX_RETRIES: u32 = 3;
const BACKOFF_BASE_MS: u64 = 250;
const BACKOFF_FACTOR: u64 = 2;

/// One chat call: which binding, what to say, how long it may take.
#[derive(Debug, Clone)]
pub struct ChatRequest {
    pub binding: ModelBinding,
    pub system_prompt: String,
    pub user_prompt: String,
    pub deadline_ms: u64,
}

/// Completion plus transport bookkeeping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChatResponse {
    pub text: String,
    pub latency_ms: u64,
    pub from_cache: bool,
    pub attempt_count: u32,
}

/// Result of sampling several reasoning paths. `degraded` is set when some
/// paths failed but at least one survived.
#[derive(Debug, Clone)]
pub struct SampledCompletions {
    pub responses: Vec<ChatResponse>,
    pub degraded: bool,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum GatewayError {
    #[error("deadline exceeded")]
    DeadlineExceeded,
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// What a backend attempt can report. Only transient failures are retried;
/// well-formed but semantically bad model output is the caller's problem.
#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("transient: {0}")]
    Transient(String),
    #[error("fatal: {0}")]
    Fatal(String),
    #[error("malformed: {0}")]
    Malformed(String),
}

/// Everything a backend needs for one attempt.
#[derive(Debug, Clone)]
pub struct BackendRequest {
    pub model_id: String,
    pub system_prompt: String,
    pub user_prompt: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub sample_index: u32,
    pub endpoint: Option<String>,
}

/// The configured transport.
#[derive(Debug)]
pub enum ChatBackend {
    Http(HttpChatBackend),
    Scripted(ScriptedMock),
}

impl ChatBackend {
    async fn send(&self, request: &BackendRequest) -> Result<String, BackendError> {
        match self {
            ChatBackend::Http(backend) => backend.send(request).await,
            ChatBackend::Scripted(mock) => mock.send(request).await,
        }
    }
}

#[derive(Debug)]
pub struct Gateway {
    backend: ChatBackend,
    cache: ResponseCache,
    inflight: Semaphore,
    calls: AtomicU64,
}

impl Gateway {
    pub fn new(backend: ChatBackend, cache: ResponseCache, concurrency_limit: usize) -> Arc<Self> {
        Arc::new(Self {
            backend,
            cache,
            inflight: Semaphore::new(concurrency_limit.max(1)),
            calls: AtomicU64::new(0),
        })
    }

    /// Number of `complete`/`complete_n` invocations so far. Lets tests assert
    /// that short-circuit paths really made zero calls.
    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// One completion. Retries transient backend failures with exponential
    /// backoff (base 250 ms, factor 2, jitter, max 3 retries) while the
    /// request deadline allows. Temperature-0 responses are cached.
    pub async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        validate(request)?;
        self.complete_inner(request, 0, request.binding.sampling.temperature == 0.0)
            .await
    }

    /// Exactly `n` completions in sample-index order. Each path gets its own
    /// cache slot so replays are per-path deterministic. Partial failure after
    /// at least one success degrades instead of failing.
    pub async fn complete_n(
        &self,
        request: &ChatRequest,
        n: u32,
    ) -> Result<SampledCompletions, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        validate(request)?;
        if n < 1 {
            return Err(GatewayError::InvalidRequest("n must be ≥ 1".into()));
        }
        if n > 1 && request.binding.sampling.temperature <= 0.0 {
            return Err(GatewayError::InvalidRequest(
                "sampling more than one path requires temperature > 0".into(),
            ));
        }
        if n == 1 {
            let response = self
                .complete_inner(request, 0, request.binding.sampling.temperature == 0.0)
                .await?;
            return Ok(SampledCompletions {
                responses: vec![response],
                degraded: false,
            });
        }

        let attempts = futures::future::join_all(
            (0..n).map(|index| self.complete_inner(request, index, true)),
        )
        .await;

        let mut responses = Vec::with_capacity(n as usize);
        let mut first_error = None;
        for outcome in attempts {
            match outcome {
                Ok(response) => responses.push(response),
                Err(e) => {
                    if first_error.is_none() {
                        first_error = Some(e);
                    }
                }
            }
        }
        if responses.is_empty() {
            return Err(first_error.unwrap_or(GatewayError::BackendUnavailable(
                "no paths completed".into(),
            )));
        }
        Ok(SampledCompletions {
            degraded: responses.len() < n as usize,
            responses,
        })
    }

    async fn complete_inner(
        &self,
        request: &ChatRequest,
        sample_index: u32,
        cacheable: bool,
    ) -> Result<ChatResponse, GatewayError> {
        let started = Instant::now();
        let deadline = Duration::from_millis(request.deadline_ms);
        let key = CacheKey::new(
            &request.binding.model_id,
            &request.system_prompt,
            &request.user_prompt,
            request.binding.sampling.temperature,
            sample_index,
        );

        if cacheable {
            if let Some(text) = self.cache.get(&key) {
                return Ok(ChatResponse {
                    text,
                    latency_ms: started.elapsed().as_millis() as u64,
                    from_cache: true,
                    attempt_count: 1,
                });
            }
        }

        let backend_request = BackendRequest {
            model_id: request.binding.model_id.clone(),
            system_prompt: request.system_prompt.clone(),
            user_prompt: request.user_prompt.clone(),
            temperature: request.binding.sampling.temperature,
            max_tokens: request.binding.sampling.max_tokens,
            sample_index,
            endpoint: request.binding.effective_endpoint(),
        };

        let mut attempt = 0u32;
        loop {
            attempt += 1;
            let remaining = deadline
                .checked_sub(started.elapsed())
                .ok_or(GatewayError::DeadlineExceeded)?;

            let permit = tokio::time::timeout(remaining, self.inflight.acquire())
                .await
                .map_err(|_| GatewayError::DeadlineExceeded)?
                .expect("gateway semaphore never closes");
            let remaining = deadline
                .checked_sub(started.elapsed())
                .ok_or(GatewayError::DeadlineExceeded)?;
            let outcome = tokio::time::timeout(remaining, self.backend.send(&backend_request)).await;
            drop(permit);

            match outcome {
                Err(_) => return Err(GatewayError::DeadlineExceeded),
                Ok(Ok(text)) => {
                    if cacheable {
                        self.cache.put(&key, &text);
                    }
                    return Ok(ChatResponse {
                        text,
                        latency_ms: started.elapsed().as_millis() as u64,
                        from_cache: false,
                        attempt_count: attempt,
                    });
                }
                Ok(Err(BackendError::Malformed(msg))) => {
                    return Err(GatewayError::MalformedResponse(msg))
                }
                Ok(Err(BackendError::Fatal(msg))) => {
                    return Err(GatewayError::BackendUnavailable(msg))
                }
                Ok(Err(BackendError::Transient(msg))) => {
                    if attempt > MAX_RETRIES {
                        return Err(GatewayError::BackendUnavailable(format!(
                            "retries exhausted after {attempt} attempts: {msg}"
                        )));
                    }
                    let backoff = backoff_with_jitter(attempt);
                    if started.elapsed() + backoff >= deadline {
                        return Err(GatewayError::DeadlineExceeded);
                    }
                    tokio::time::sleep(backoff).await;
                }
            }
        }
    }
}

/// Backoff for the retry after `attempt` failures: base · factor^(attempt−1),
/// jittered into [½, 1]× to spread concurrent retries.
fn backoff_with_jitter(attempt: u32) -> Duration {
    let nominal = BACKOFF_BASE_MS.saturating_mul(BACKOFF_FACTOR.saturating_pow(attempt - 1));
    let jittered = rand::rng().random_range(nominal / 2..=nominal);
    Duration::from_millis(jittered)
}

fn validate(request: &ChatRequest) -> Result<(), GatewayError> {
    if request.user_prompt.trim().is_empty() {
        return Err(GatewayError::InvalidRequest("user prompt is empty".into()));
    }
    if request.deadline_ms == 0 {
        return Err(GatewayError::InvalidRequest("deadline must be > 0".into()));
    }
    Ok(())
}
