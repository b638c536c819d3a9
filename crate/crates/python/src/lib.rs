//! Python bindings for the ragline engine.
//!
//! Exposes the deterministic building blocks (canonicalization, decomposition
//! parsing, judge-score parsing, score aggregation, consensus voting, lexical
//! scoring), a BM25 index class, and a `Pipeline` class that drives full
//! batch runs and evaluation from Python.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use ragline::config::{ConsensusMode, PipelineConfig};
use ragline::pipeline::{Engine, EngineOptions};
use ragline::retrieval::InvertedIndex;
use ragline::types::{JudgeMetric, UserQuery};

fn json_to_py(py: Python<'_>, value: &serde_json::Value) -> PyResult<Py<PyAny>> {
    use serde_json::Value;
    Ok(match value {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any().unbind()
            } else if let Some(u) = n.as_u64() {
                u.into_pyobject(py)?.into_any().unbind()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any().unbind()
            }
        }
        Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any().unbind()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (key, item) in map {
                dict.set_item(key, json_to_py(py, item)?)?;
            }
            dict.into_any().unbind()
        }
    })
}

fn to_py_json<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let json = serde_json::to_value(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    json_to_py(py, &json)
}

fn consensus_mode(mode: &str) -> PyResult<ConsensusMode> {
    match mode {
        "jaccard" => Ok(ConsensusMode::Jaccard),
        "exact" => Ok(ConsensusMode::Exact),
        other => Err(PyValueError::new_err(format!(
            "unknown consensus mode {other:?}; use \"jaccard\" or \"exact\""
        ))),
    }
}

fn judge_metric(metric: &str) -> PyResult<JudgeMetric> {
    match metric {
        "relevance" => Ok(JudgeMetric::Relevance),
        "faithfulness" => Ok(JudgeMetric::Faithfulness),
        other => Err(PyValueError::new_err(format!(
            "unknown metric {other:?}; use \"relevance\" or \"faithfulness\""
        ))),
    }
}

/// Whitespace-collapsed lowercase comparison key.
#[pyfunction]
fn canonicalize(text: &str) -> String {
    ragline::types::canonicalize(text)
}

/// Lowercased alphanumeric tokens, split on non-alphanumeric runs.
#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    ragline::retrieval::tokenize(text)
}

/// Parses raw decomposition output. Returns (sub_queries, parse_mode) where
/// parse_mode is one of "strict_json", "fenced_json", "line_fallback",
/// "degraded".
#[pyfunction]
fn parse_decomposition(raw: &str, max_m: usize) -> PyResult<(Vec<String>, String)> {
    let payload = ragline::query_understanding::parse_decomposition(raw, max_m);
    let mode = serde_json::to_value(payload.parse_mode)
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok((payload.sub_queries, mode.as_str().unwrap_or("degraded").to_string()))
}

/// First admissible integer token in a judge reply. Raises ValueError when
/// none is present.
#[pyfunction]
fn parse_judge_score(raw: &str, admissible: Vec<i32>) -> PyResult<i32> {
    ragline::evaluation::parse_judge_score(raw, &admissible)
        .map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Score-weighted sum over a {score: count} histogram for "relevance" or
/// "faithfulness".
#[pyfunction]
fn aggregate_scores(metric: &str, counts: BTreeMap<i32, u64>) -> PyResult<i64> {
    let metric = judge_metric(metric)?;
    let pairs: Vec<(i32, u64)> = counts.into_iter().collect();
    let histogram = ragline::evaluation::ScoreHistogram::from_counts(metric, &pairs)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(ragline::evaluation::aggregate_scores(&histogram))
}

/// Consensus vote over candidate answers. Returns (winner_index, share).
#[pyfunction]
#[pyo3(signature = (candidates, mode = "jaccard"))]
fn select_consensus(candidates: Vec<String>, mode: &str) -> PyResult<(usize, f64)> {
    if candidates.is_empty() {
        return Err(PyValueError::new_err("candidates must be nonempty"));
    }
    Ok(ragline::generation::select_consensus(
        &candidates,
        consensus_mode(mode)?,
    ))
}

/// Unique-query-term coverage of a document, in [0, 1].
#[pyfunction]
fn lexical_score(query: &str, doc: &str) -> f64 {
    ragline::rerank::score_pair_lexical(query, doc)
}

/// In-memory BM25 index over a JSONL corpus.
#[pyclass]
struct Bm25Index {
    index: Arc<InvertedIndex>,
}

#[pymethods]
impl Bm25Index {
    #[new]
    fn new(corpus_path: PathBuf) -> PyResult<Self> {
        let corpus = ragline::retrieval::load_corpus(&corpus_path)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let index = ragline::retrieval::build_index(corpus)
            .map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self {
            index: Arc::new(index),
        })
    }

    /// Top-k search: list of (doc_id, score), scores non-increasing.
    fn search(&self, query: &str, k: usize) -> Vec<(String, f64)> {
        self.index
            .search_top_k(query, k)
            .into_iter()
            .map(|(doc_index, score)| (self.index.document(doc_index).doc_id.clone(), score))
            .collect()
    }

    fn doc_count(&self) -> usize {
        self.index.doc_count()
    }

    fn avg_doc_length(&self) -> f64 {
        self.index.avg_doc_length()
    }

    fn stats(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py_json(
            py,
            &serde_json::json!({
                "doc_count": self.index.doc_count(),
                "avg_doc_length": self.index.avg_doc_length(),
                "distinct_terms": self.index.distinct_terms(),
                "total_postings": self.index.total_postings(),
            }),
        )
    }

    fn __repr__(&self) -> String {
        format!(
            "Bm25Index(doc_count={}, distinct_terms={})",
            self.index.doc_count(),
            self.index.distinct_terms()
        )
    }
}

/// Full pipeline driver bound to a corpus and (usually) a scripted mock
/// transcript.
#[pyclass]
struct Pipeline {
    engine: Engine,
    runtime: tokio::runtime::Runtime,
}

#[pymethods]
impl Pipeline {
    #[new]
    #[pyo3(signature = (corpus_path, mock_transcript = None, config_path = None, cache_dir = None, deterministic = false))]
    fn new(
        corpus_path: PathBuf,
        mock_transcript: Option<PathBuf>,
        config_path: Option<PathBuf>,
        cache_dir: Option<PathBuf>,
        deterministic: bool,
    ) -> PyResult<Self> {
        let config = match config_path {
            Some(path) => {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| PyValueError::new_err(format!("read config: {e}")))?;
                PipelineConfig::from_json(&text)
                    .map_err(|e| PyValueError::new_err(format!("parse config: {e}")))?
            }
            None => PipelineConfig::default(),
        };
        let engine = Engine::new(
            config,
            EngineOptions {
                corpus_path: Some(corpus_path),
                mock_transcript,
                cache_dir,
                deterministic,
            },
        )
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
        let runtime = tokio::runtime::Runtime::new()
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok(Self { engine, runtime })
    }

    /// Runs one query through rewrite → decompose → retrieve → rerank →
    /// generate and returns the full record as a dict.
    #[pyo3(signature = (query_id, question, deadline_ms = None))]
    fn run_query(
        &self,
        py: Python<'_>,
        query_id: &str,
        question: &str,
        deadline_ms: Option<u64>,
    ) -> PyResult<Py<PyAny>> {
        let query = UserQuery::new(query_id, question);
        if !query.is_valid() {
            return Err(PyValueError::new_err("query id and text must be nonempty"));
        }
        let deadline = deadline_ms.unwrap_or(self.engine.config().per_query_deadline_ms);
        let record = self.runtime.block_on(self.engine.run_single(&query, deadline));
        to_py_json(py, &record)
    }

    /// Processes a JSONL question batch into a records file; returns the
    /// batch summary as a dict.
    fn run_batch(
        &self,
        py: Python<'_>,
        input_path: PathBuf,
        output_path: PathBuf,
    ) -> PyResult<Py<PyAny>> {
        let summary = self
            .runtime
            .block_on(self.engine.run_batch(&input_path, &output_path))
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        to_py_json(py, &summary)
    }

    /// Judges a records file; writes verdicts JSONL and returns the report.
    fn run_eval(
        &self,
        py: Python<'_>,
        records_path: PathBuf,
        verdicts_path: PathBuf,
    ) -> PyResult<Py<PyAny>> {
        let report = self
            .runtime
            .block_on(self.engine.run_eval(&records_path, &verdicts_path))
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        to_py_json(py, &report)
    }

    fn __repr__(&self) -> String {
        let config = self.engine.config();
        format!(
            "Pipeline(k={}, n={}, max_subqueries={})",
            config.retrieval_k, config.rerank_n, config.max_subqueries
        )
    }
}

#[pymodule]
fn ragline_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(canonicalize, m)?)?;
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(parse_decomposition, m)?)?;
    m.add_function(wrap_pyfunction!(parse_judge_score, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_scores, m)?)?;
    m.add_function(wrap_pyfunction!(select_consensus, m)?)?;
    m.add_function(wrap_pyfunction!(lexical_score, m)?)?;
    m.add_class::<Bm25Index>()?;
    m.add_class::<Pipeline>()?;
    Ok(())
}
