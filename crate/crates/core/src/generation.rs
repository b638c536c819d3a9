//! Answer generation over the reranked context.
//!
//! The prompt numbers the context documents in rerank order, asks for
//! step-by-step reasoning, and requires the final answer after a marker line.
//! Self-consistency samples several reasoning paths and picks a consensus by
//! clustering near-identical answers; a single path reduces exactly to plain
//! generation.

use std::collections::HashMap;

use sha2::{Digest, Sha256};

use crate::config::{ConsensusMode, ModelBinding};
use crate::gateway::{ChatRequest, Gateway, GatewayError};
use crate::prompts;
use crate::types::{canonicalize, AnswerCandidate, Document, GeneratedAnswer, RerankedContext};

/// Single-link clustering threshold on normalized-token Jaccard similarity.
pub const CONSENSUS_JACCARD_THRESHOLD: f64 = 0.8;

#[derive(Debug, thiserror::Error)]
pub enum GenerationError {
    #[error("document {0} is not resolvable")]
    MissingDocument(String),
    #[error("generation context is empty")]
    EmptyContext,
    #[error("model produced an empty answer")]
    EmptyAnswer,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Fully assembled generation prompt with its document order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationPrompt {
    pub system_text: String,
    pub user_text: String,
    pub doc_order: Vec<String>,
}

impl GenerationPrompt {
    /// Content hash over system and user text.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.system_text.len() as u64).to_be_bytes());
        hasher.update(self.system_text.as_bytes());
        hasher.update(self.user_text.as_bytes());
        hex::encode(hasher.finalize())
    }
}

/// First `budget` whitespace tokens; text under budget passes through intact.
fn truncate_tokens(text: &str, budget: usize) -> String {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if tokens.len() <= budget {
        text.trim().to_string()
    } else {
        tokens[..budget].join(" ")
    }
}

/// Builds the chain-of-thought prompt: numbered document blocks in context
/// order, the question, and the step-by-step instruction ending at `marker`.
pub fn assemble_prompt(
    q_prime: &str,
    context: &RerankedContext,
    docs: &HashMap<String, Document>,
    template_id: &str,
    doc_token_budget: usize,
    marker: &str,
) -> Result<GenerationPrompt, GenerationError> {
    let mut blocks = Vec::with_capacity(context.entries.len());
    let mut doc_order = Vec::with_capacity(context.entries.len());
    for (i, entry) in context.entries.iter().enumerate() {
        let document = docs
            .get(&entry.doc_id)
            .ok_or_else(|| GenerationError::MissingDocument(entry.doc_id.clone()))?;
        blocks.push(format!(
            "[{}] (id: {})\n{}",
            i + 1,
            document.doc_id,
            truncate_tokens(&document.text, doc_token_budget)
        ));
        doc_order.push(entry.doc_id.clone());
    }
    let template = prompts::template(template_id)
        .unwrap_or_else(|| prompts::template("generate-cot-v1").unwrap());
    let user_text = prompts::render(
        template,
        &[
            ("documents", &blocks.join("\n\n")),
            ("question", q_prime),
            ("marker", marker),
        ],
    );
    Ok(GenerationPrompt {
        system_text: prompts::system_prompt(template_id).to_string(),
        user_text,
        doc_order,
    })
}

/// Text after the last marker line, or the full completion when the marker is
/// absent (reported via the bool).
fn extract_answer(completion: &str, marker: &str) -> (String, bool) {
    if let Some(pos) = completion.rfind(marker) {
        let tail = completion[pos + marker.len()..].trim();
        if !tail.is_empty() {
            return (tail.to_string(), false);
        }
    }
    (completion.trim().to_string(), true)
}

/// Generation result plus degradation detail the pipeline records.
#[derive(Debug, Clone)]
pub struct GenerationOutcome {
    pub answer: GeneratedAnswer,
    pub marker_missing: bool,
    /// Some sampled paths failed; consensus ran over the survivors.
    pub paths_degraded: bool,
}

/// One completion over the assembled prompt (Generate with a single path).
#[allow(clippy::too_many_arguments)]
pub async fn generate(
    gateway: &Gateway,
    binding: &ModelBinding,
    q_prime: &str,
    context: &RerankedContext,
    docs: &HashMap<String, Document>,
    doc_token_budget: usize,
    marker: &str,
    deadline_ms: u64,
) -> Result<GenerationOutcome, GenerationError> {
    if context.is_empty() {
        return Err(GenerationError::EmptyContext);
    }
    let prompt = assemble_prompt(
        q_prime,
        context,
        docs,
        &binding.prompt_template_id,
        doc_token_budget,
        marker,
    )?;
    let request = ChatRequest {
        binding: binding.clone(),
        system_prompt: prompt.system_text.clone(),
        user_prompt: prompt.user_text.clone(),
        deadline_ms,
    };
    let response = gateway.complete(&request).await?;
    if response.text.trim().is_empty() {
        return Err(GenerationError::EmptyAnswer);
    }
    let (answer_text, marker_missing) = extract_answer(&response.text, marker);
    Ok(GenerationOutcome {
        answer: GeneratedAnswer {
            answer_text,
            used_doc_ids: prompt.doc_order.clone(),
            prompt_digest: prompt.digest(),
            candidates: None,
            path_count: 1,
        },
        marker_missing,
        paths_degraded: false,
    })
}

/// Samples `paths` reasoning paths and selects the consensus answer. With
/// `paths == 1` this is exactly `generate`.
#[allow(clippy::too_many_arguments)]
pub async fn self_consistent_generate(
    gateway: &Gateway,
    binding: &ModelBinding,
    q_prime: &str,
    context: &RerankedContext,
    docs: &HashMap<String, Document>,
    doc_token_budget: usize,
    marker: &str,
    consensus_mode: ConsensusMode,
    paths: u32,
    deadline_ms: u64,
) -> Result<GenerationOutcome, GenerationError> {
    if paths <= 1 {
        return generate(
            gateway,
            binding,
            q_prime,
            context,
            docs,
            doc_token_budget,
            marker,
            deadline_ms,
        )
        .await;
    }
    if context.is_empty() {
        return Err(GenerationError::EmptyContext);
    }
    let prompt = assemble_prompt(
        q_prime,
        context,
        docs,
        &binding.prompt_template_id,
        doc_token_budget,
        marker,
    )?;
    let request = ChatRequest {
        binding: binding.clone(),
        system_prompt: prompt.system_text.clone(),
        user_prompt: prompt.user_text.clone(),
        deadline_ms,
    };
    let sampled = gateway.complete_n(&request, paths).await?;
    let mut extracted: Vec<(String, bool)> = Vec::new();
    for response in &sampled.responses {
        if response.text.trim().is_empty() {
            continue;
        }
        extracted.push(extract_answer(&response.text, marker));
    }
    if extracted.is_empty() {
        return Err(GenerationError::EmptyAnswer);
    }
    let answers: Vec<String> = extracted.iter().map(|(text, _)| text.clone()).collect();
    let (winner, selection_score) = select_consensus(&answers, consensus_mode);
    let cluster_ids = cluster_candidates(&answers, consensus_mode);
    let total = answers.len() as f64;
    let mut cluster_sizes: HashMap<usize, usize> = HashMap::new();
    for id in &cluster_ids {
        *cluster_sizes.entry(*id).or_insert(0) += 1;
    }
    let candidates: Vec<AnswerCandidate> = answers
        .iter()
        .zip(&cluster_ids)
        .map(|(text, id)| AnswerCandidate {
            text: text.clone(),
            selection_score: cluster_sizes[id] as f64 / total,
        })
        .collect();
    let paths_degraded = sampled.degraded || (extracted.len() as u32) < paths;
    debug_assert_eq!(selection_score, candidates[winner].selection_score);

    Ok(GenerationOutcome {
        answer: GeneratedAnswer {
            answer_text: answers[winner].clone(),
            used_doc_ids: prompt.doc_order.clone(),
            prompt_digest: prompt.digest(),
            candidates: Some(candidates),
            path_count: answers.len(),
        },
        marker_missing: extracted[winner].1,
        paths_degraded,
    })
}

/// Normalized token set used for candidate similarity.
fn answer_tokens(text: &str) -> std::collections::BTreeSet<String> {
    normalize_answer(text).split_whitespace().map(str::to_string).collect()
}

/// Canonicalized text with terminal punctuation stripped.
fn normalize_answer(text: &str) -> String {
    canonicalize(text)
        .trim_end_matches(['.', '!', '?', ',', ';', ':'])
        .to_string()
}

fn jaccard(a: &std::collections::BTreeSet<String>, b: &std::collections::BTreeSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let intersection = a.intersection(b).count() as f64;
    let union = a.union(b).count() as f64;
    intersection / union
}

/// Single-link clusters over the candidates; returns one cluster id per
/// candidate (ids are the smallest member index).
fn cluster_candidates(candidates: &[String], mode: ConsensusMode) -> Vec<usize> {
    let n = candidates.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    let normalized: Vec<String> = candidates.iter().map(|c| normalize_answer(c)).collect();
    let token_sets: Vec<_> = candidates.iter().map(|c| answer_tokens(c)).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            let linked = match mode {
                ConsensusMode::Exact => normalized[i] == normalized[j],
                ConsensusMode::Jaccard => {
                    jaccard(&token_sets[i], &token_sets[j]) >= CONSENSUS_JACCARD_THRESHOLD
                }
            };
            if linked {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    // Root at the smaller index so cluster ids are stable.
                    let (lo, hi) = (a.min(b), a.max(b));
                    parent[hi] = lo;
                }
            }
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}

/// Consensus vote: largest cluster wins (ties to the cluster holding the
/// lowest path index); within the winner, the medoid by summed similarity
/// (ties to the lowest index). Returns (winner index, cluster share).
pub fn select_consensus(candidates: &[String], mode: ConsensusMode) -> (usize, f64) {
    if candidates.is_empty() {
        return (0, 0.0);
    }
    let cluster_ids = cluster_candidates(candidates, mode);
    let n = candidates.len();
    let mut sizes: HashMap<usize, usize> = HashMap::new();
    for id in &cluster_ids {
        *sizes.entry(*id).or_insert(0) += 1;
    }
    // Cluster ids equal their smallest member index, so preferring the lower
    // id on ties is exactly "cluster containing the lowest path index".
    let (&winner_cluster, &winner_size) = sizes
        .iter()
        .max_by(|(id_a, size_a), (id_b, size_b)| {
            size_a.cmp(size_b).then_with(|| id_b.cmp(id_a))
        })
        .expect("nonempty candidates");

    let members: Vec<usize> = (0..n).filter(|i| cluster_ids[*i] == winner_cluster).collect();
    let token_sets: Vec<_> = candidates.iter().map(|c| answer_tokens(c)).collect();
    let mut best = members[0];
    let mut best_sum = f64::MIN;
    for &i in &members {
        let sum: f64 = members
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| jaccard(&token_sets[i], &token_sets[j]))
            .sum();
        if sum > best_sum {
            best_sum = sum;
            best = i;
        }
    }
    (best, winner_size as f64 / n as f64)
}
