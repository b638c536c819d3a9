//! Per-sub-query top-K search and union aggregation.
//!
//! Each sub-query is searched independently (embedded BM25 index or remote
//! service); results are merged into one deduplicated candidate pool. A
//! document seen by several sub-queries keeps its maximum score, so documents
//! highly relevant to any single intent survive into the rerank pool.

mod corpus;
mod index;
mod remote;

pub use corpus::{load_corpus, CorpusError};
pub use index::{build_index, tokenize, IndexError, InvertedIndex, Posting, BM25_B, BM25_K1};
pub use remote::{
    RemoteSearchClient, RemoteSearchError, SEARCH_API_KEY_ENV, SEARCH_ENDPOINT_ENV,
    SEARCH_INDEX_ENV,
};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use crate::types::{Document, QueryPlan, RetrievalBundle, ScoredHit};

#[derive(Debug, Clone)]
pub struct SearchRequest {
    pub query_text: String,
    pub k: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("invalid search request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Remote(#[from] RemoteSearchError),
    #[error("all {attempted} sub-query searches failed; first error: {first_error}")]
    AllSubQueriesFailed {
        attempted: usize,
        first_error: String,
    },
}

/// The configured retrieval backend.
#[derive(Debug, Clone)]
pub enum Retriever {
    Embedded(Arc<InvertedIndex>),
    Remote(RemoteSearchClient),
}

impl Retriever {
    /// Top-k documents with scores, non-increasing, ties by ascending doc_id.
    pub async fn search_docs(
        &self,
        query_text: &str,
        k: usize,
    ) -> Result<Vec<(Document, f64)>, RetrievalError> {
        let mut ranked = match self {
            Retriever::Embedded(index) => index
                .search_top_k(query_text, k)
                .into_iter()
                .map(|(doc_index, score)| (index.document(doc_index).clone(), score))
                .collect::<Vec<_>>(),
            Retriever::Remote(client) => client.search(query_text, k).await?,
        };
        // Remote backends choose their own order; re-apply the tie rule so
        // both backends expose identical ordering semantics.
        ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.doc_id.cmp(&b.0.doc_id))
        });
        ranked.truncate(k);
        Ok(ranked)
    }
}

/// Top-K search for one sub-query, as 1-based ranked hits.
pub async fn search(
    retriever: &Retriever,
    request: &SearchRequest,
) -> Result<Vec<ScoredHit>, RetrievalError> {
    if request.k < 1 {
        return Err(RetrievalError::InvalidRequest("k must be ≥ 1".into()));
    }
    let ranked = retriever.search_docs(&request.query_text, request.k).await?;
    Ok(to_hits(ranked.into_iter().map(|(d, s)| (d.doc_id, s)), 1))
}

fn to_hits(ranked: impl Iterator<Item = (String, f64)>, sub_query_index: usize) -> Vec<ScoredHit> {
    ranked
        .enumerate()
        .map(|(i, (doc_id, retrieval_score))| ScoredHit {
            doc_id,
            retrieval_score,
            sub_query_index,
            rank: i + 1,
        })
        .collect()
}

/// Result of retrieving for a whole plan: the merged bundle, the document
/// texts seen along the way, and whether any sub-query failed.
#[derive(Debug)]
pub struct UnionOutcome {
    pub bundle: RetrievalBundle,
    pub documents: HashMap<String, Document>,
    pub partial: bool,
}

/// Runs top-K search for every sub-query (concurrently) and merges the
/// results. Individual sub-query failures degrade the bundle; the call fails
/// only when every sub-query fails.
pub async fn retrieve_union(
    retriever: &Retriever,
    plan: &QueryPlan,
    k: usize,
) -> Result<UnionOutcome, RetrievalError> {
    let searches = plan
        .sub_queries
        .iter()
        .enumerate()
        .map(|(i, sub_query)| async move {
            let result = retriever.search_docs(sub_query, k).await;
            (i + 1, result)
        });
    let outcomes = futures::future::join_all(searches).await;

    let mut per_sub_query: Vec<(usize, Vec<ScoredHit>)> = Vec::new();
    let mut documents = HashMap::new();
    let mut partial = false;
    let mut first_error = None;
    for (sub_query_index, outcome) in outcomes {
        match outcome {
            Ok(ranked) => {
                for (document, _) in &ranked {
                    documents
                        .entry(document.doc_id.clone())
                        .or_insert_with(|| document.clone());
                }
                per_sub_query.push((
                    sub_query_index,
                    to_hits(
                        ranked.into_iter().map(|(d, s)| (d.doc_id, s)),
                        sub_query_index,
                    ),
                ));
            }
            Err(e) => {
                partial = true;
                if first_error.is_none() {
                    first_error = Some(e.to_string());
                }
            }
        }
    }

    if per_sub_query.is_empty() {
        return Err(RetrievalError::AllSubQueriesFailed {
            attempted: plan.sub_queries.len(),
            first_error: first_error.unwrap_or_else(|| "no sub-queries".into()),
        });
    }

    Ok(UnionOutcome {
        bundle: merge_subquery_results(per_sub_query, k),
        documents,
        partial,
    })
}

/// Deterministic union merge. Input arrival order is irrelevant: results are
/// folded in sub-query-index order, duplicates keep the maximum score and the
/// lexicographically smallest (sub_query_index, rank) as representative, and
/// the final order is (score descending, doc_id ascending).
pub fn merge_subquery_results(
    mut per_sub_query: Vec<(usize, Vec<ScoredHit>)>,
    k: usize,
) -> RetrievalBundle {
    per_sub_query.sort_by_key(|(index, _)| *index);

    struct Merged {
        score: f64,
        representative: (usize, usize),
    }
    let mut merged: BTreeMap<String, Merged> = BTreeMap::new();
    let mut provenance: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();

    for (sub_query_index, hits) in per_sub_query {
        for hit in hits {
            provenance
                .entry(hit.doc_id.clone())
                .or_default()
                .insert(sub_query_index);
            let candidate = (hit.sub_query_index, hit.rank);
            merged
                .entry(hit.doc_id)
                .and_modify(|m| {
                    if hit.retrieval_score > m.score {
                        m.score = hit.retrieval_score;
                    }
                    if candidate < m.representative {
                        m.representative = candidate;
                    }
                })
                .or_insert(Merged {
                    score: hit.retrieval_score,
                    representative: candidate,
                });
        }
    }

    let mut hits: Vec<ScoredHit> = merged
        .into_iter()
        .map(|(doc_id, m)| ScoredHit {
            doc_id,
            retrieval_score: m.score,
            sub_query_index: m.representative.0,
            rank: m.representative.1,
        })
        .collect();
    hits.sort_by(|a, b| {
        b.retrieval_score
            .partial_cmp(&a.retrieval_score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });

    RetrievalBundle {
        hits,
        provenance,
        k_per_subquery: k,
    }
}
