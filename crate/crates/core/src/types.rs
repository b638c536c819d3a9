//! Shared domain types: queries, plans, documents, retrieval hits, contexts,
//! answers, and judge scores.
//!
//! Everything here is an immutable value object once constructed, so instances
//! can be shared freely across concurrent pipeline workers.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

/// One raw user question as it arrives in a batch. The text may contain
/// spelling errors and multiple intents; the id is opaque and never parsed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserQuery {
    pub id: String,
    pub text: String,
}

impl UserQuery {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
        }
    }

    /// A query is usable when both id and trimmed text are nonempty.
    pub fn is_valid(&self) -> bool {
        !self.id.is_empty() && !self.text.trim().is_empty()
    }
}

/// Output of query understanding: the cleaned-up rewrite plus the ordered
/// sub-queries targeting each intent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryPlan {
    pub original: UserQuery,
    pub rewritten: String,
    pub sub_queries: Vec<String>,
    /// True when decomposition fell back to `[rewritten]`.
    pub decomposition_degraded: bool,
}

impl QueryPlan {
    /// Degraded plan: the single sub-query is the rewritten query itself.
    pub fn degraded(original: UserQuery, rewritten: String) -> Self {
        Self {
            original,
            sub_queries: vec![rewritten.clone()],
            rewritten,
            decomposition_degraded: true,
        }
    }

    pub fn sub_query_count(&self) -> usize {
        self.sub_queries.len()
    }
}

/// One corpus unit: the atom of retrieval, reranking, and grounding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    #[serde(rename = "id")]
    pub doc_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, rename = "url", skip_serializing_if = "Option::is_none")]
    pub source_uri: Option<String>,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            text: text.into(),
            title: None,
            source_uri: None,
        }
    }
}

/// A single retrieval result. Scores are backend-scaled reals; no range is
/// assumed. `sub_query_index` and `rank` are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub doc_id: String,
    pub retrieval_score: f64,
    pub sub_query_index: usize,
    pub rank: usize,
}

/// Deduplicated union of per-sub-query retrieval results.
///
/// `hits` contains each doc_id at most once, ordered by kept score descending
/// (ties by doc_id ascending). `provenance` records every sub-query index that
/// contributed each document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalBundle {
    pub hits: Vec<ScoredHit>,
    pub provenance: BTreeMap<String, BTreeSet<usize>>,
    pub k_per_subquery: usize,
}

impl RetrievalBundle {
    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }
}

/// One reranked candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankedEntry {
    pub doc_id: String,
    pub rerank_score: f64,
}

/// The top-N context selected for generation, sorted by rerank score
/// descending under a deterministic tie rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankedContext {
    pub entries: Vec<RerankedEntry>,
    pub n: usize,
}

impl RerankedContext {
    pub fn doc_ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.doc_id.clone()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One sampled answer candidate with the selection score its cluster earned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerCandidate {
    pub text: String,
    pub selection_score: f64,
}

/// Final answer, the documents it was grounded on, and the sampled candidates
/// when self-consistency was active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedAnswer {
    pub answer_text: String,
    pub used_doc_ids: Vec<String>,
    /// Content hash of the assembled prompt, hex-encoded.
    pub prompt_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidates: Option<Vec<AnswerCandidate>>,
    pub path_count: usize,
}

/// Which judge metric a score belongs to. Each metric has its own admissible
/// value set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeMetric {
    Relevance,
    Faithfulness,
}

impl JudgeMetric {
    /// Admissible integer scores for this metric.
    pub fn admissible(&self) -> &'static [i32] {
        match self {
            JudgeMetric::Relevance => &[-1, 0, 1, 2],
            JudgeMetric::Faithfulness => &[-1, 0, 1],
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            JudgeMetric::Relevance => "relevance",
            JudgeMetric::Faithfulness => "faithfulness",
        }
    }
}

/// A categorical judge verdict with the raw judge text retained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeScore {
    pub metric: JudgeMetric,
    pub value: i32,
    pub raw_judge_output: String,
}

impl JudgeScore {
    /// Constructs a score, rejecting values outside the metric's admissible set.
    pub fn new(metric: JudgeMetric, value: i32, raw: impl Into<String>) -> Result<Self, String> {
        if !metric.admissible().contains(&value) {
            return Err(format!(
                "score {value} not admissible for {}",
                metric.as_str()
            ));
        }
        Ok(Self {
            metric,
            value,
            raw_judge_output: raw.into(),
        })
    }
}

/// Comparison key for text: trimmed, internal whitespace runs collapsed to
/// single spaces, lowercased. Stored text keeps its original case; this key
/// is only ever used for equality checks.
pub fn canonicalize(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}
