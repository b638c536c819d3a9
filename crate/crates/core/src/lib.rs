//! Batch retrieval-augmented generation engine.
//!
//! The pipeline takes noisy multi-intent questions through query rewriting,
//! decomposition into sub-queries, per-sub-query top-K retrieval with union
//! dedup, reranking to a top-N context, and chain-of-thought generation with
//! optional self-consistency voting. A judge-based evaluation pass produces
//! pseudo-labeled relevance/faithfulness scores and aggregate reports.
//!
//! Every model-dependent stage sits behind a pluggable backend (HTTP or a
//! deterministic scripted mock), so the whole system runs and verifies at
//! desk scale without any live model.

pub mod config;
pub mod evaluation;
pub mod gateway;
pub mod generation;
pub mod pipeline;
pub mod prompts;
pub mod query_understanding;
pub mod rerank;
pub mod retrieval;
pub mod types;

pub use config::{ModelBinding, PipelineConfig, Role};
pub use pipeline::{BatchSummary, DegradationFlag, Engine, EngineOptions, PipelineRecord};
pub use types::{
    canonicalize, Document, GeneratedAnswer, JudgeMetric, JudgeScore, QueryPlan, RerankedContext,
    RetrievalBundle, ScoredHit, UserQuery,
};
