//! End-to-end orchestration: per-query pipeline execution under deadlines
//! with staged degradation, batch processing with bounded concurrency, and
//! the evaluation pass over batch output.
//!
//! Degradation ladder, cheapest sacrifice first as time runs out:
//!   1. self-consistency collapses to a single path
//!   2. decomposition is skipped (plan = rewritten query alone)
//!   3. reranking is skipped (first N bundle hits)
//!   4. rewriting is skipped (original query text)
//!
//! The ladder only ratchets forward and never skips a later rung without the
//! earlier ones, so record flags always form a prefix of that order.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::config::{PipelineConfig, RerankQuerySource, RerankerBackendKind, RetrieverBackendKind};
use crate::evaluation::{
    build_report, generate_pseudo_answer, judge_faithfulness, judge_relevance, EvalReport,
    JudgeVerdictSet,
};
use crate::gateway::{ChatBackend, Gateway, GatewayError, HttpChatBackend, ResponseCache, ScriptedMock};
use crate::generation::{self_consistent_generate, GenerationError};
use crate::query_understanding::{decompose_query, rewrite_query};
use crate::rerank::{rerank, RemoteReranker, RerankRequest, Reranker};
use crate::retrieval::{
    build_index, load_corpus, retrieve_union, RemoteSearchClient, RetrievalError, Retriever,
};
use crate::types::{Document, JudgeMetric, JudgeScore, QueryPlan, RerankedContext, RerankedEntry, UserQuery};

/// Remaining-budget fractions (of the nominal per-query deadline) below which
/// each ladder rung engages.
const LADDER_SC_FRACTION: f64 = 0.50;
const LADDER_DECOMPOSE_FRACTION: f64 = 0.35;
const LADDER_RERANK_FRACTION: f64 = 0.20;
const LADDER_REWRITE_FRACTION: f64 = 0.10;

/// Why a record is less than a full five-stage run. Serialized names are
/// stable; the set is ordered by rung.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradationFlag {
    RewriteFallback,
    DecomposeFallback,
    RetrievalPartial,
    RerankFallback,
    MarkerMissing,
    ScPartial,
    DeadlineDegraded,
}

/// One retrieved document reference in a record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedDoc {
    pub doc_id: String,
    pub score: f64,
}

/// Everything one query's pass through the pipeline produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRecord {
    pub query_id: String,
    pub question: String,
    pub rewritten: String,
    pub sub_queries: Vec<String>,
    pub retrieved: Vec<RetrievedDoc>,
    pub reranked: Vec<String>,
    pub answer_text: String,
    pub path_count: usize,
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub degradation_flags: BTreeSet<DegradationFlag>,
    pub stage_timings_ms: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordStatus {
    Ok,
    Failed,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("invalid config:\n{0}")]
    InvalidConfig(String),
    #[error("corpus error: {0}")]
    Corpus(String),
    #[error("transcript error: {0}")]
    Transcript(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("input error: {0}")]
    Input(String),
}

/// Latency percentiles over a batch, in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub p50: u64,
    pub p90: u64,
    pub p99: u64,
    pub max: u64,
}

/// What `run_batch` reports after writing the records file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub total: usize,
    pub ok: usize,
    pub failed: usize,
    pub degradation_counts: BTreeMap<String, u64>,
    pub latency_ms: LatencySummary,
    pub wall_ms: u64,
}

impl BatchSummary {
    /// True when every record succeeded with zero degradation flags.
    pub fn is_clean(&self) -> bool {
        self.failed == 0 && self.degradation_counts.is_empty()
    }
}

/// Shared pipeline engine: validated config plus live backends. Cloneable and
/// safe to use from concurrent workers.
#[derive(Clone)]
pub struct Engine {
    config: Arc<PipelineConfig>,
    gateway: Arc<Gateway>,
    retriever: Retriever,
    reranker: Reranker,
    /// Zeroes recorded stage timings so replayed runs are byte-identical.
    deterministic: bool,
    documents: Arc<HashMap<String, Document>>,
}

/// Construction-time options for [`Engine`].
#[derive(Debug, Default)]
pub struct EngineOptions {
    pub corpus_path: Option<PathBuf>,
    pub mock_transcript: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub deterministic: bool,
}

impl Engine {
    pub fn new(config: PipelineConfig, options: EngineOptions) -> Result<Self, EngineError> {
        if let Err(violations) = config.validate() {
            let lines: Vec<String> = violations.iter().map(|v| format!("  - {v}")).collect();
            return Err(EngineError::InvalidConfig(lines.join("\n")));
        }

        let backend = match &options.mock_transcript {
            Some(path) => ChatBackend::Scripted(
                ScriptedMock::from_file(path)
                    .map_err(|e| EngineError::Transcript(e.to_string()))?,
            ),
            None => ChatBackend::Http(HttpChatBackend::new(None)),
        };
        let cache = match &options.cache_dir {
            Some(dir) => ResponseCache::with_dir(dir.clone())?,
            None => ResponseCache::in_memory(),
        };
        let gateway = Gateway::new(backend, cache, config.concurrency_limit);

        let mut documents = HashMap::new();
        let retriever = match config.retriever_backend {
            RetrieverBackendKind::Embedded => {
                let path = options.corpus_path.as_ref().ok_or_else(|| {
                    EngineError::Corpus("embedded retrieval needs a corpus path".into())
                })?;
                let corpus = load_corpus(path).map_err(|e| EngineError::Corpus(e.to_string()))?;
                for document in &corpus {
                    documents.insert(document.doc_id.clone(), document.clone());
                }
                let index =
                    build_index(corpus).map_err(|e| EngineError::Corpus(e.to_string()))?;
                Retriever::Embedded(Arc::new(index))
            }
            RetrieverBackendKind::Remote => Retriever::Remote(
                RemoteSearchClient::from_env(
                    config.search_endpoint.as_deref(),
                    config.search_index.as_deref(),
                )
                .map_err(|e| EngineError::Corpus(e.to_string()))?,
            ),
        };

        let reranker = match config.reranker_backend {
            RerankerBackendKind::Lexical => Reranker::Lexical,
            RerankerBackendKind::Remote => Reranker::Remote(
                RemoteReranker::from_env(config.reranker_endpoint.as_deref())
                    .map_err(|e| EngineError::Corpus(e.to_string()))?,
            ),
        };

        Ok(Self {
            config: Arc::new(config),
            gateway,
            retriever,
            reranker,
            deterministic: options.deterministic,
            documents: Arc::new(documents),
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    /// Runs the full pipeline for one query under `deadline_ms`, applying the
    /// degradation ladder as the budget shrinks. Always returns a record —
    /// failures are recorded, never thrown.
    pub async fn run_single(&self, query: &UserQuery, deadline_ms: u64) -> PipelineRecord {
        let started = Instant::now();
        let nominal_ms = self.config.per_query_deadline_ms;
        let deadline = Duration::from_millis(deadline_ms.max(1));
        let mut flags = BTreeSet::new();
        let mut timings: BTreeMap<String, u64> = BTreeMap::new();

        let remaining_ms =
            |started: &Instant| deadline.saturating_sub(started.elapsed()).as_millis() as u64;

        let mut level = ladder_level(deadline_ms, nominal_ms);
        // Highest rung still reachable without breaking prefix order; shrinks
        // once a rung's stage has actually executed.
        let mut level_cap = 4u8;

        let mut record = PipelineRecord {
            query_id: query.id.clone(),
            question: query.text.clone(),
            rewritten: String::new(),
            sub_queries: Vec::new(),
            retrieved: Vec::new(),
            reranked: Vec::new(),
            answer_text: String::new(),
            path_count: 1,
            status: RecordStatus::Ok,
            error: None,
            degradation_flags: BTreeSet::new(),
            stage_timings_ms: BTreeMap::new(),
        };

        // Stage 1: rewrite.
        let rewritten = if level >= 4 {
            flags.insert(DegradationFlag::RewriteFallback);
            flags.insert(DegradationFlag::DeadlineDegraded);
            query.text.clone()
        } else {
            level_cap = 3;
            let stage_start = Instant::now();
            let outcome = rewrite_query(
                &self.gateway,
                &self.config.bindings.rewriter,
                query,
                remaining_ms(&started).max(1),
            )
            .await;
            self.record_timing(&mut timings, "rewrite", stage_start);
            match outcome {
                Ok(out) => {
                    if out.degraded {
                        flags.insert(DegradationFlag::RewriteFallback);
                    }
                    out.rewritten
                }
                Err(e) => {
                    flags.insert(DegradationFlag::RewriteFallback);
                    if matches!(e, GatewayError::DeadlineExceeded) {
                        flags.insert(DegradationFlag::DeadlineDegraded);
                    }
                    query.text.clone()
                }
            }
        };
        record.rewritten = rewritten.clone();

        // Stage 2: decompose.
        level = ratchet(level, remaining_ms(&started), nominal_ms, level_cap);
        let plan = if level >= 2 {
            flags.insert(DegradationFlag::DecomposeFallback);
            flags.insert(DegradationFlag::DeadlineDegraded);
            QueryPlan::degraded(query.clone(), rewritten.clone())
        } else {
            level_cap = 1;
            let stage_start = Instant::now();
            let outcome = decompose_query(
                &self.gateway,
                &self.config.bindings.decomposer,
                &rewritten,
                self.config.max_subqueries,
                remaining_ms(&started).max(1),
            )
            .await;
            self.record_timing(&mut timings, "decompose", stage_start);
            match outcome {
                Ok(out) => {
                    if out.degraded {
                        flags.insert(DegradationFlag::DecomposeFallback);
                    }
                    QueryPlan {
                        original: query.clone(),
                        rewritten: rewritten.clone(),
                        sub_queries: out.sub_queries,
                        decomposition_degraded: out.degraded,
                    }
                }
                Err(e) => {
                    flags.insert(DegradationFlag::DecomposeFallback);
                    if matches!(e, GatewayError::DeadlineExceeded) {
                        flags.insert(DegradationFlag::DeadlineDegraded);
                    }
                    QueryPlan::degraded(query.clone(), rewritten.clone())
                }
            }
        };
        record.sub_queries = plan.sub_queries.clone();

        // Stage 3: retrieval (never skipped; the pipeline is nothing without it).
        let stage_start = Instant::now();
        let union = retrieve_union(&self.retriever, &plan, self.config.retrieval_k).await;
        self.record_timing(&mut timings, "retrieve", stage_start);
        let (bundle, documents) = match union {
            Ok(outcome) => {
                if outcome.partial {
                    flags.insert(DegradationFlag::RetrievalPartial);
                }
                (outcome.bundle, outcome.documents)
            }
            Err(e) => {
                flags.insert(DegradationFlag::RetrievalPartial);
                record.degradation_flags = flags;
                record.stage_timings_ms = timings;
                record.status = RecordStatus::Failed;
                record.error = Some(match e {
                    RetrievalError::AllSubQueriesFailed { .. } => e.to_string(),
                    other => other.to_string(),
                });
                return record;
            }
        };
        record.retrieved = bundle
            .hits
            .iter()
            .map(|h| RetrievedDoc {
                doc_id: h.doc_id.clone(),
                score: h.retrieval_score,
            })
            .collect();

        if bundle.is_empty() {
            record.degradation_flags = flags;
            record.stage_timings_ms = timings;
            record.status = RecordStatus::Failed;
            record.error = Some("no documents retrieved for any sub-query".into());
            return record;
        }

        // Stage 4: rerank.
        level = ratchet(level, remaining_ms(&started), nominal_ms, level_cap);
        let context = if level >= 3 {
            flags.insert(DegradationFlag::RerankFallback);
            flags.insert(DegradationFlag::DeadlineDegraded);
            RerankedContext {
                entries: bundle
                    .hits
                    .iter()
                    .take(self.config.rerank_n)
                    .map(|h| RerankedEntry {
                        doc_id: h.doc_id.clone(),
                        rerank_score: h.retrieval_score,
                    })
                    .collect(),
                n: self.config.rerank_n,
            }
        } else {
            let query_text = match self.config.rerank_query {
                RerankQuerySource::Rewritten => rewritten.clone(),
                RerankQuerySource::Original => query.text.clone(),
            };
            let request = RerankRequest {
                query_text,
                candidates: bundle
                    .hits
                    .iter()
                    .map(|h| {
                        let text = documents
                            .get(&h.doc_id)
                            .map(|d| d.text.clone())
                            .unwrap_or_default();
                        (h.doc_id.clone(), text)
                    })
                    .collect(),
                n: self.config.rerank_n,
            };
            let stage_start = Instant::now();
            let outcome = rerank(&request, &self.reranker).await;
            self.record_timing(&mut timings, "rerank", stage_start);
            match outcome {
                Ok(out) => {
                    if out.fallback_used {
                        flags.insert(DegradationFlag::RerankFallback);
                    }
                    out.context
                }
                Err(e) => {
                    record.degradation_flags = flags;
                    record.stage_timings_ms = timings;
                    record.status = RecordStatus::Failed;
                    record.error = Some(e.to_string());
                    return record;
                }
            }
        };
        record.reranked = context.doc_ids();

        // Stage 5: generation, with self-consistency unless the ladder says no.
        level = ratchet(level, remaining_ms(&started), nominal_ms, level_cap);
        let configured_paths = self.config.bindings.generator.sampling.samples_n;
        let paths = if level >= 1 { 1 } else { configured_paths };
        if paths < configured_paths {
            flags.insert(DegradationFlag::DeadlineDegraded);
        }
        let stage_start = Instant::now();
        let generated = self_consistent_generate(
            &self.gateway,
            &self.config.bindings.generator,
            &rewritten,
            &context,
            &documents,
            self.config.doc_token_budget,
            &self.config.answer_marker,
            self.config.consensus_mode,
            paths,
            remaining_ms(&started).max(1),
        )
        .await;
        self.record_timing(&mut timings, "generate", stage_start);

        match generated {
            Ok(outcome) => {
                if outcome.marker_missing {
                    flags.insert(DegradationFlag::MarkerMissing);
                }
                if outcome.paths_degraded {
                    flags.insert(DegradationFlag::ScPartial);
                }
                record.answer_text = outcome.answer.answer_text;
                record.path_count = outcome.answer.path_count;
            }
            Err(e) => {
                record.status = RecordStatus::Failed;
                if matches!(e, GenerationError::Gateway(GatewayError::DeadlineExceeded)) {
                    flags.insert(DegradationFlag::DeadlineDegraded);
                }
                record.error = Some(e.to_string());
            }
        }

        record.degradation_flags = flags;
        record.stage_timings_ms = timings;
        record
    }

    fn record_timing(&self, timings: &mut BTreeMap<String, u64>, stage: &str, start: Instant) {
        let ms = if self.deterministic {
            0
        } else {
            start.elapsed().as_millis() as u64
        };
        timings.insert(stage.to_string(), ms);
    }

    /// Processes a question batch with bounded concurrency, preserving input
    /// order in the output file. The remaining batch budget is divided across
    /// unstarted questions at dispatch time, capped by the per-query deadline.
    pub async fn run_batch(
        &self,
        input_path: &Path,
        output_path: &Path,
    ) -> Result<BatchSummary, EngineError> {
        let questions = load_questions(input_path)?;
        let batch_start = Instant::now();
        let batch_budget = Duration::from_millis(self.config.batch_deadline_ms);
        let semaphore = Arc::new(Semaphore::new(self.config.concurrency_limit));
        let unstarted = Arc::new(AtomicUsize::new(questions.len()));

        let mut handles = Vec::with_capacity(questions.len());
        for (index, query) in questions.into_iter().enumerate() {
            let engine = self.clone();
            let semaphore = Arc::clone(&semaphore);
            let unstarted = Arc::clone(&unstarted);
            handles.push(tokio::spawn(async move {
                let _permit = semaphore.acquire().await.expect("semaphore open");
                let remaining_batch = batch_budget.saturating_sub(batch_start.elapsed());
                let pending = unstarted.fetch_sub(1, Ordering::SeqCst).max(1);
                let share_ms = (remaining_batch.as_millis() as u64 / pending as u64).max(1);
                let deadline_ms = share_ms.min(engine.config.per_query_deadline_ms);
                let query_start = Instant::now();
                let record = engine.run_single(&query, deadline_ms).await;
                (index, record, query_start.elapsed().as_millis() as u64)
            }));
        }

        let mut results = Vec::with_capacity(handles.len());
        for handle in handles {
            match handle.await {
                Ok(result) => results.push(result),
                Err(join_error) => {
                    return Err(EngineError::Input(format!(
                        "worker panicked: {join_error}"
                    )))
                }
            }
        }
        results.sort_by_key(|(index, _, _)| *index);

        let mut file = std::io::BufWriter::new(std::fs::File::create(output_path)?);
        let mut latencies = Vec::with_capacity(results.len());
        let mut degradation_counts: BTreeMap<String, u64> = BTreeMap::new();
        let mut ok = 0usize;
        let mut failed = 0usize;
        for (_, record, latency) in &results {
            serde_json::to_writer(&mut file, record)
                .map_err(|e| EngineError::Input(format!("serialize record: {e}")))?;
            file.write_all(b"\n")?;
            latencies.push(*latency);
            match record.status {
                RecordStatus::Ok => ok += 1,
                RecordStatus::Failed => failed += 1,
            }
            for flag in &record.degradation_flags {
                let name = serde_json::to_value(flag)
                    .expect("flag serializes")
                    .as_str()
                    .unwrap()
                    .to_string();
                *degradation_counts.entry(name).or_insert(0) += 1;
            }
        }
        file.flush()?;

        Ok(BatchSummary {
            total: results.len(),
            ok,
            failed,
            degradation_counts,
            latency_ms: percentiles(&mut latencies),
            wall_ms: batch_start.elapsed().as_millis() as u64,
        })
    }

    /// Evaluates a records file: pseudo answer per record, relevance and
    /// faithfulness verdicts, verdicts JSONL plus the aggregate report.
    /// Abstentions (failed or empty answers) score 0/0 without judge calls.
    pub async fn run_eval(
        &self,
        records_path: &Path,
        verdicts_path: &Path,
    ) -> Result<EvalReport, EngineError> {
        let records = load_records(records_path)?;
        let semaphore = Arc::new(Semaphore::new(self.config.concurrency_limit));

        let mut handles = Vec::with_capacity(records.len());
        for (index, record) in records.into_iter().enumerate() {
            let engine = self.clone();
            let semaphore = Arc::clone(&semaphore);
            handles.push(tokio::spawn(async move {
                let _permit = semaphore.acquire().await.expect("semaphore open");
                (index, engine.evaluate_record(&record).await)
            }));
        }

        let mut outcomes = Vec::with_capacity(handles.len());
        for handle in handles {
            outcomes.push(
                handle
                    .await
                    .map_err(|e| EngineError::Input(format!("eval worker panicked: {e}")))?,
            );
        }
        outcomes.sort_by_key(|(index, _)| *index);

        let mut verdicts = Vec::new();
        let mut unevaluable = 0u64;
        let mut file = std::io::BufWriter::new(std::fs::File::create(verdicts_path)?);
        for (_, outcome) in outcomes {
            match outcome {
                Some(verdict) => {
                    serde_json::to_writer(&mut file, &verdict)
                        .map_err(|e| EngineError::Input(format!("serialize verdict: {e}")))?;
                    file.write_all(b"\n")?;
                    verdicts.push(verdict);
                }
                None => unevaluable += 1,
            }
        }
        file.flush()?;

        Ok(build_report(&verdicts, unevaluable))
    }

    /// One record's verdicts; None when the sample is unevaluable.
    async fn evaluate_record(&self, record: &PipelineRecord) -> Option<JudgeVerdictSet> {
        let deadline = self.config.per_query_deadline_ms;

        // Abstention short-circuit: no judge calls at all.
        if record.status == RecordStatus::Failed || record.answer_text.trim().is_empty() {
            return Some(JudgeVerdictSet {
                question_id: record.query_id.clone(),
                relevance: JudgeScore {
                    metric: JudgeMetric::Relevance,
                    value: 0,
                    raw_judge_output: String::new(),
                },
                faithfulness: JudgeScore {
                    metric: JudgeMetric::Faithfulness,
                    value: 0,
                    raw_judge_output: String::new(),
                },
                pseudo_answer: String::new(),
                judged_answer: record.answer_text.clone(),
            });
        }

        let mut document_texts = Vec::with_capacity(record.reranked.len());
        for doc_id in &record.reranked {
            document_texts.push(self.documents.get(doc_id)?.text.clone());
        }
        if document_texts.is_empty() {
            return None;
        }

        let pseudo = generate_pseudo_answer(
            &self.gateway,
            &self.config.bindings.reference,
            &record.rewritten,
            &document_texts,
            deadline,
        )
        .await
        .ok()?;

        let relevance = judge_relevance(
            &self.gateway,
            &self.config.bindings.judge,
            &record.rewritten,
            &pseudo,
            &record.answer_text,
            deadline,
        )
        .await
        .ok()?;

        let faithfulness = judge_faithfulness(
            &self.gateway,
            &self.config.bindings.judge,
            &record.rewritten,
            &record.answer_text,
            &document_texts,
            deadline,
        )
        .await
        .ok()?;

        Some(JudgeVerdictSet {
            question_id: record.query_id.clone(),
            relevance,
            faithfulness,
            pseudo_answer: pseudo,
            judged_answer: record.answer_text.clone(),
        })
    }
}

/// Ratchets the ladder level forward based on the remaining budget, never
/// past what prefix order still allows.
fn ratchet(current: u8, remaining_ms: u64, nominal_ms: u64, cap: u8) -> u8 {
    current.max(ladder_level(remaining_ms, nominal_ms).min(cap))
}

/// Ladder level implied by remaining budget as a fraction of the nominal
/// per-query deadline: 0 = run everything … 4 = bare minimum pipeline.
fn ladder_level(remaining_ms: u64, nominal_ms: u64) -> u8 {
    let ratio = remaining_ms as f64 / nominal_ms.max(1) as f64;
    if ratio < LADDER_REWRITE_FRACTION {
        4
    } else if ratio < LADDER_RERANK_FRACTION {
        3
    } else if ratio < LADDER_DECOMPOSE_FRACTION {
        2
    } else if ratio < LADDER_SC_FRACTION {
        1
    } else {
        0
    }
}

fn percentiles(latencies: &mut [u64]) -> LatencySummary {
    if latencies.is_empty() {
        return LatencySummary {
            p50: 0,
            p90: 0,
            p99: 0,
            max: 0,
        };
    }
    latencies.sort_unstable();
    let pick = |q: f64| {
        let rank = ((q * latencies.len() as f64).ceil() as usize).clamp(1, latencies.len());
        latencies[rank - 1]
    };
    LatencySummary {
        p50: pick(0.50),
        p90: pick(0.90),
        p99: pick(0.99),
        max: *latencies.last().unwrap(),
    }
}

#[derive(Debug, Deserialize)]
struct QuestionLine {
    id: String,
    question: String,
}

/// Loads and validates the input batch. Any malformed line, blank field, or
/// duplicate id aborts before processing starts.
pub fn load_questions(path: &Path) -> Result<Vec<UserQuery>, EngineError> {
    let file = std::fs::File::open(path).map_err(|e| {
        EngineError::Input(format!("cannot read questions {}: {e}", path.display()))
    })?;
    let reader = std::io::BufReader::new(file);
    let mut queries = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| EngineError::Input(format!("line {line_no}: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: QuestionLine = serde_json::from_str(&line)
            .map_err(|e| EngineError::Input(format!("line {line_no}: {e}")))?;
        if parsed.id.trim().is_empty() || parsed.question.trim().is_empty() {
            return Err(EngineError::Input(format!(
                "line {line_no}: id and question must be nonempty"
            )));
        }
        if !seen.insert(parsed.id.clone()) {
            return Err(EngineError::Input(format!(
                "line {line_no}: duplicate question id {}",
                parsed.id
            )));
        }
        queries.push(UserQuery::new(parsed.id, parsed.question));
    }
    Ok(queries)
}

fn load_records(path: &Path) -> Result<Vec<PipelineRecord>, EngineError> {
    let file = std::fs::File::open(path).map_err(|e| {
        EngineError::Input(format!("cannot read records {}: {e}", path.display()))
    })?;
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| EngineError::Input(format!("line {}: {e}", idx + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PipelineRecord = serde_json::from_str(&line)
            .map_err(|e| EngineError::Input(format!("line {}: {e}", idx + 1)))?;
        records.push(record);
    }
    Ok(records)
}
