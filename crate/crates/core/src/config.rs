//! Pipeline configuration: model bindings per role, retrieval/rerank depths,
//! deadlines, backend selection, and up-front validation.

use serde::{Deserialize, Serialize};

/// The stage a model binding serves. Every pipeline run needs one binding per
/// role; the models themselves are frozen — only prompts and sampling vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Rewriter,
    Decomposer,
    Generator,
    /// Produces pseudo answers for evaluation; never feeds generation.
    Reference,
    Judge,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Rewriter => "rewriter",
            Role::Decomposer => "decomposer",
            Role::Generator => "generator",
            Role::Reference => "reference",
            Role::Judge => "judge",
        }
    }
}

/// Sampling knobs for one binding. `samples_n > 1` is only meaningful for the
/// generator role (self-consistency paths).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub samples_n: u32,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: 512,
            samples_n: 1,
        }
    }
}

/// A frozen model selection for one role: which model, which prompt template,
/// and how to sample from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBinding {
    pub role: Role,
    pub model_id: String,
    pub prompt_template_id: String,
    #[serde(default)]
    pub sampling: SamplingParams,
    /// Chat-completions base URL for this binding. Overridable via
    /// `RAGLINE_<ROLE>_ENDPOINT`; unused when a scripted mock is active.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
}

impl ModelBinding {
    pub fn new(role: Role, model_id: &str, prompt_template_id: &str) -> Self {
        Self {
            role,
            model_id: model_id.to_string(),
            prompt_template_id: prompt_template_id.to_string(),
            sampling: SamplingParams::default(),
            endpoint_url: None,
        }
    }

    /// Endpoint after applying the per-role environment override.
    pub fn effective_endpoint(&self) -> Option<String> {
        let var = format!("RAGLINE_{}_ENDPOINT", self.role.as_str().to_uppercase());
        std::env::var(var).ok().or_else(|| self.endpoint_url.clone())
    }
}

/// One binding per pipeline role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleBindings {
    pub rewriter: ModelBinding,
    pub decomposer: ModelBinding,
    pub generator: ModelBinding,
    pub reference: ModelBinding,
    pub judge: ModelBinding,
}

impl Default for RoleBindings {
    fn default() -> Self {
        Self {
            rewriter: ModelBinding::new(Role::Rewriter, "falcon3-10b-instruct", "rewrite-v1"),
            decomposer: ModelBinding::new(Role::Decomposer, "falcon3-10b-instruct", "decompose-v1"),
            generator: ModelBinding::new(Role::Generator, "falcon3-10b-instruct", "generate-cot-v1"),
            reference: ModelBinding::new(Role::Reference, "qwen2.5-7b-instruct", "pseudo-answer-v1"),
            judge: ModelBinding::new(Role::Judge, "qwen2.5-72b-instruct", "judge-relevance-v1"),
        }
    }
}

impl RoleBindings {
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &ModelBinding)> {
        [
            ("bindings.rewriter", &self.rewriter),
            ("bindings.decomposer", &self.decomposer),
            ("bindings.generator", &self.generator),
            ("bindings.reference", &self.reference),
            ("bindings.judge", &self.judge),
        ]
        .into_iter()
    }
}

/// Which retrieval backend serves sub-query searches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrieverBackendKind {
    /// In-memory inverted index over a JSONL corpus.
    Embedded,
    /// OpenSearch-compatible HTTP search service.
    Remote,
}

/// Which reranker scores the candidate pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RerankerBackendKind {
    /// Cross-encoder HTTP service.
    Remote,
    /// Deterministic term-coverage scorer; also the fallback when remote fails.
    Lexical,
}

/// Which query text the reranker scores against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RerankQuerySource {
    Rewritten,
    Original,
}

/// How self-consistency candidates are voted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConsensusMode {
    /// Cluster by normalized-token Jaccard similarity.
    Jaccard,
    /// Cluster by exact normalized equality.
    Exact,
}

fn default_retrieval_k() -> usize {
    50
}
fn default_rerank_n() -> usize {
    10
}
fn default_max_subqueries() -> usize {
    5
}
fn default_per_query_deadline_ms() -> u64 {
    60_000
}
fn default_batch_deadline_ms() -> u64 {
    7_200_000
}
fn default_concurrency_limit() -> usize {
    4
}
fn default_retriever_backend() -> RetrieverBackendKind {
    RetrieverBackendKind::Embedded
}
fn default_reranker_backend() -> RerankerBackendKind {
    RerankerBackendKind::Lexical
}
fn default_rerank_query() -> RerankQuerySource {
    RerankQuerySource::Rewritten
}
fn default_consensus_mode() -> ConsensusMode {
    ConsensusMode::Jaccard
}
fn default_doc_token_budget() -> usize {
    512
}
fn default_answer_marker() -> String {
    "ANSWER:".to_string()
}

/// Full pipeline configuration. Loadable from a JSON document with the same
/// field names; unspecified fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default)]
    pub bindings: RoleBindings,
    /// Per-sub-query retrieval depth K.
    #[serde(default = "default_retrieval_k")]
    pub retrieval_k: usize,
    /// Documents kept after reranking (N).
    #[serde(default = "default_rerank_n")]
    pub rerank_n: usize,
    #[serde(default = "default_max_subqueries")]
    pub max_subqueries: usize,
    #[serde(default = "default_per_query_deadline_ms")]
    pub per_query_deadline_ms: u64,
    #[serde(default = "default_batch_deadline_ms")]
    pub batch_deadline_ms: u64,
    #[serde(default = "default_concurrency_limit")]
    pub concurrency_limit: usize,
    #[serde(default = "default_retriever_backend")]
    pub retriever_backend: RetrieverBackendKind,
    #[serde(default = "default_reranker_backend")]
    pub reranker_backend: RerankerBackendKind,
    #[serde(default = "default_rerank_query")]
    pub rerank_query: RerankQuerySource,
    #[serde(default = "default_consensus_mode")]
    pub consensus_mode: ConsensusMode,
    /// Whitespace-token budget per document block in the generation prompt.
    #[serde(default = "default_doc_token_budget")]
    pub doc_token_budget: usize,
    /// Line marker the generator is instructed to place before its final answer.
    #[serde(default = "default_answer_marker")]
    pub answer_marker: String,
    /// Remote search endpoint; `RAGLINE_SEARCH_ENDPOINT` overrides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_endpoint: Option<String>,
    /// Remote search index name; `RAGLINE_SEARCH_INDEX` overrides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_index: Option<String>,
    /// Remote reranker endpoint; `RAGLINE_RERANK_ENDPOINT` overrides.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reranker_endpoint: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config deserializes via defaults")
    }
}

/// One validation failure: which field and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigViolation {
    pub field: String,
    pub reason: String,
}

impl std::fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

impl PipelineConfig {
    /// Loads and parses a JSON config file.
    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }

    /// Checks every invariant and returns the complete list of violations,
    /// not just the first. An empty list means the config is usable as-is.
    pub fn validate(&self) -> Result<(), Vec<ConfigViolation>> {
        let mut violations = Vec::new();
        let mut fail = |field: &str, reason: String| {
            violations.push(ConfigViolation {
                field: field.to_string(),
                reason,
            });
        };

        if self.retrieval_k < 1 {
            fail("retrieval_k", "retrieval_k must be ≥ 1".into());
        }
        if self.rerank_n < 1 {
            fail("rerank_n", "rerank_n must be ≥ 1".into());
        }
        if self.max_subqueries < 1 {
            fail("max_subqueries", "max_subqueries must be ≥ 1".into());
        }
        if self.per_query_deadline_ms == 0 {
            fail("per_query_deadline_ms", "deadline must be > 0".into());
        }
        if self.batch_deadline_ms == 0 {
            fail("batch_deadline_ms", "deadline must be > 0".into());
        }
        if self.per_query_deadline_ms > self.batch_deadline_ms {
            fail(
                "per_query_deadline_ms",
                format!(
                    "per-query deadline {} ms exceeds batch deadline {} ms",
                    self.per_query_deadline_ms, self.batch_deadline_ms
                ),
            );
        }
        if self.concurrency_limit < 1 {
            fail("concurrency_limit", "concurrency_limit must be ≥ 1".into());
        }
        if self.doc_token_budget < 1 {
            fail("doc_token_budget", "doc_token_budget must be ≥ 1".into());
        }
        if self.answer_marker.trim().is_empty() {
            fail("answer_marker", "answer marker must be nonempty".into());
        }

        for (path, binding) in self.bindings.iter() {
            let expected = match path {
                "bindings.rewriter" => Role::Rewriter,
                "bindings.decomposer" => Role::Decomposer,
                "bindings.generator" => Role::Generator,
                "bindings.reference" => Role::Reference,
                _ => Role::Judge,
            };
            if binding.role != expected {
                fail(
                    path,
                    format!(
                        "binding role {} does not match slot {}",
                        binding.role.as_str(),
                        expected.as_str()
                    ),
                );
            }
            if binding.model_id.trim().is_empty() {
                fail(&format!("{path}.model_id"), "model_id must be nonempty".into());
            }
            if binding.prompt_template_id.trim().is_empty() {
                fail(
                    &format!("{path}.prompt_template_id"),
                    "prompt_template_id must be nonempty".into(),
                );
            }
            let s = &binding.sampling;
            if s.temperature.is_nan() || s.temperature < 0.0 {
                fail(
                    &format!("{path}.sampling.temperature"),
                    format!("temperature {} must be ≥ 0", s.temperature),
                );
            }
            if s.max_tokens == 0 {
                fail(
                    &format!("{path}.sampling.max_tokens"),
                    "max_tokens must be > 0".into(),
                );
            }
            if s.samples_n < 1 {
                fail(
                    &format!("{path}.sampling.samples_n"),
                    "samples_n must be ≥ 1".into(),
                );
            }
            if s.samples_n > 1 && binding.role != Role::Generator {
                fail(
                    &format!("{path}.sampling.samples_n"),
                    format!(
                        "samples_n > 1 is only permitted for the generator role, not {}",
                        binding.role.as_str()
                    ),
                );
            }
            if s.temperature == 0.0 && s.samples_n > 1 {
                fail(
                    &format!("{path}.sampling.samples_n"),
                    "temperature 0 forces samples_n = 1".into(),
                );
            }
        }

        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }
}
