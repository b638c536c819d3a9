//! Engine-level end-to-end tests against scripted transcripts and an
//! embedded corpus: the degradation ladder, crash-freedom, batch budget
//! division, and the evaluation pass.

use std::io::Write;
use std::path::{Path, PathBuf};

use ragline::config::{PipelineConfig, RerankerBackendKind, RetrieverBackendKind};
use ragline::pipeline::{DegradationFlag, Engine, EngineOptions, RecordStatus};
use ragline::types::UserQuery;

fn write_file(dir: &Path, name: &str, content: &str) -> PathBuf {
    let path = dir.join(name);
    let mut file = std::fs::File::create(&path).unwrap();
    file.write_all(content.as_bytes()).unwrap();
    path
}

fn demo_corpus() -> String {
    [
        r#"{"id":"d-paris","text":"Paris is the capital of France and its largest city."}"#,
        r#"{"id":"d-france","text":"France is a country in western Europe with capital Paris."}"#,
        r#"{"id":"d-norway","text":"Norway has a cold coastal climate with heavy rainfall."}"#,
        r#"{"id":"d-spain","text":"Spain has a warm mediterranean climate in the south."}"#,
        r#"{"id":"d-economy","text":"The economy of Norway relies on oil while Spain relies on tourism."}"#,
        r#"{"id":"d-filler","text":"Unrelated filler text about gardening and cooking."}"#,
    ]
    .join("\n")
}

/// Transcript covering one happy-path question about the capital of France.
fn happy_transcript() -> String {
    [
        r#"{"match":"(?s)Rewrite the user question.*captial of france","regex":true,"response":"What is the capital of France?"}"#,
        r#"{"match":"(?s)Split the question.*capital of France","regex":true,"response":"[\"capital of France\", \"largest city of France\"]"}"#,
        r#"{"match":"(?s)Answer the question using.*capital of France","regex":true,"response":"The documents say Paris. ANSWER: Paris"}"#,
    ]
    .join("\n")
}

fn engine_with(
    dir: &Path,
    transcript: &str,
    mutate: impl FnOnce(&mut PipelineConfig),
) -> Engine {
    let corpus = write_file(dir, "corpus.jsonl", &demo_corpus());
    let transcript = write_file(dir, "transcript.jsonl", transcript);
    let mut config = PipelineConfig {
        retriever_backend: RetrieverBackendKind::Embedded,
        reranker_backend: RerankerBackendKind::Lexical,
        per_query_deadline_ms: 2_000,
        batch_deadline_ms: 600_000,
        concurrency_limit: 2,
        ..PipelineConfig::default()
    };
    mutate(&mut config);
    Engine::new(
        config,
        EngineOptions {
            corpus_path: Some(corpus),
            mock_transcript: Some(transcript),
            cache_dir: None,
            deterministic: false,
        },
    )
    .unwrap()
}

#[tokio::test]
async fn happy_path_runs_all_five_stages() {
    let dir = tempfile::tempdir().unwrap();
    let engine = engine_with(dir.path(), &happy_transcript(), |_| {});
    let record = engine
        .run_single(&UserQuery::new("q1", "what is teh captial of france"), 2_000)
        .await;

    assert_eq!(record.status, RecordStatus::Ok);
    assert!(record.degradation_flags.is_empty(), "{:?}", record.degradation_flags);
    assert_eq!(record.rewritten, "What is the capital of France?");
    assert_eq!(record.sub_queries.len(), 2);
    assert!(!record.retrieved.is_empty());
    assert!(!record.reranked.is_empty());
    assert_eq!(record.answer_text, "Paris");
    assert_eq!(record.path_count, 1);
    for stage in ["rewrite", "decompose", "retrieve", "rerank", "generate"] {
        assert!(record.stage_timings_ms.contains_key(stage), "missing {stage}");
    }
}

#[tokio::test]
async fn slow_rewrite_skips_decomposition_in_ladder_order() {
    let dir = tempfile::tempdir().unwrap();
    // Rewrite burns 70% of the budget; the decompose gate then sits below the
    // 35% threshold and the ladder skips decomposition (and with it, any
    // self-consistency sampling).
    let transcript = [
        r#"{"match":"(?s)Rewrite the user question.*captial of france","regex":true,"response":"SLEEP:700:What is the capital of France?"}"#,
        r#"{"match":"(?s)Answer the question using.*capital of France","regex":true,"responses":["The answer is clear. ANSWER: Paris","ANSWER: Paris","ANSWER: paris","ANSWER: Lyon"]}"#,
    ]
    .join("\n");
    let engine = engine_with(dir.path(), &transcript, |config| {
        config.per_query_deadline_ms = 1_000;
        config.bindings.generator.sampling.temperature = 0.7;
        config.bindings.generator.sampling.samples_n = 4;
    });
    let record = engine
        .run_single(&UserQuery::new("q1", "what is teh captial of france"), 1_000)
        .await;

    assert_eq!(record.status, RecordStatus::Ok);
    assert!(record.degradation_flags.contains(&DegradationFlag::DecomposeFallback));
    assert!(record.degradation_flags.contains(&DegradationFlag::DeadlineDegraded));
    assert_eq!(record.sub_queries, vec!["What is the capital of France?".to_string()]);
    // Self-consistency collapsed to a single path before decomposition was
    // sacrificed, so the record must not carry sampled candidates.
    assert_eq!(record.path_count, 1);
    assert!(!record.stage_timings_ms.contains_key("decompose"));
}

#[tokio::test]
async fn slow_decompose_collapses_self_consistency_only() {
    let dir = tempfile::tempdir().unwrap();
    let transcript = [
        r#"{"match":"(?s)Rewrite the user question.*captial of france","regex":true,"response":"What is the capital of France?"}"#,
        r#"{"match":"(?s)Split the question.*capital of France","regex":true,"response":"SLEEP:600:[\"capital of France\"]"}"#,
        r#"{"match":"(?s)Answer the question using.*capital of France","regex":true,"responses":["ANSWER: Paris","ANSWER: Paris","ANSWER: paris","ANSWER: Lyon"]}"#,
    ]
    .join("\n");
    let engine = engine_with(dir.path(), &transcript, |config| {
        config.per_query_deadline_ms = 1_000;
        config.bindings.generator.sampling.temperature = 0.7;
        config.bindings.generator.sampling.samples_n = 4;
    });
    let record = engine
        .run_single(&UserQuery::new("q1", "what is teh captial of france"), 1_000)
        .await;

    assert_eq!(record.status, RecordStatus::Ok);
    // Decomposition ran (slowly); only the sc rung engaged afterwards.
    assert!(record.stage_timings_ms.contains_key("decompose"));
    assert!(!record.degradation_flags.contains(&DegradationFlag::DecomposeFallback));
    assert!(record.degradation_flags.contains(&DegradationFlag::DeadlineDegraded));
    assert_eq!(record.path_count, 1);
}

#[tokio::test]
async fn dead_remote_reranker_falls_back_to_lexical() {
    let dir = tempfile::tempdir().unwrap();
    let engine = engine_with(dir.path(), &happy_transcript(), |config| {
        config.reranker_backend = RerankerBackendKind::Remote;
        config.reranker_endpoint = Some("http://127.0.0.1:1/rerank".into());
    });
    let record = engine
        .run_single(&UserQuery::new("q1", "what is teh captial of france"), 5_000)
        .await;

    assert_eq!(record.status, RecordStatus::Ok);
    assert!(record.degradation_flags.contains(&DegradationFlag::RerankFallback));
    assert!(!record.degradation_flags.contains(&DegradationFlag::DeadlineDegraded));
    assert_eq!(record.answer_text, "Paris");
}

#[tokio::test]
async fn failing_generator_paths_degrade_to_survivors() {
    let dir = tempfile::tempdir().unwrap();
    let transcript = [
        r#"{"match":"(?s)Rewrite the user question.*captial of france","regex":true,"response":"What is the capital of France?"}"#,
        r#"{"match":"(?s)Split the question.*capital of France","regex":true,"response":"[\"capital of France\"]"}"#,
        r#"{"match":"(?s)Answer the question using.*capital of France","regex":true,"responses":["ANSWER: Paris","FAIL","ANSWER: Paris","ANSWER: Lyon"]}"#,
    ]
    .join("\n");
    let engine = engine_with(dir.path(), &transcript, |config| {
        config.per_query_deadline_ms = 2_000;
        config.bindings.generator.sampling.temperature = 0.7;
        config.bindings.generator.sampling.samples_n = 4;
    });
    let record = engine
        .run_single(&UserQuery::new("q1", "what is teh captial of france"), 2_000)
        .await;

    assert_eq!(record.status, RecordStatus::Ok);
    assert!(record.degradation_flags.contains(&DegradationFlag::ScPartial));
    assert_eq!(record.path_count, 3);
    assert_eq!(record.answer_text, "Paris");
}

#[tokio::test]
async fn batch_survives_dead_generator_and_preserves_order() {
    let dir = tempfile::tempdir().unwrap();
    // q-dead has no generate entry: its generation prompt matches nothing and
    // fails fatally. The batch must still emit both records, in input order.
    let transcript = [
        r#"{"match":"(?s)Rewrite the user question.*captial of france","regex":true,"response":"What is the capital of France?"}"#,
        r#"{"match":"(?s)Split the question.*capital of France","regex":true,"response":"[\"capital of France\"]"}"#,
        r#"{"match":"(?s)Answer the question using.*capital of France","regex":true,"response":"ANSWER: Paris"}"#,
        r#"{"match":"(?s)Rewrite the user question.*norway","regex":true,"response":"What is the climate of Norway?"}"#,
        r#"{"match":"(?s)Split the question.*Norway","regex":true,"response":"[\"Norway climate\"]"}"#,
    ]
    .join("\n");
    let engine = engine_with(dir.path(), &transcript, |_| {});
    let input = write_file(
        dir.path(),
        "questions.jsonl",
        &[
            r#"{"id":"q-dead","question":"what about norway weather"}"#,
            r#"{"id":"q-ok","question":"what is teh captial of france"}"#,
        ]
        .join("\n"),
    );
    let output = dir.path().join("records.jsonl");
    let summary = engine.run_batch(&input, &output).await.unwrap();

    assert_eq!(summary.total, 2);
    assert_eq!(summary.ok, 1);
    assert_eq!(summary.failed, 1);

    let lines: Vec<String> = std::fs::read_to_string(&output)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].contains(r#""query_id":"q-dead""#));
    assert!(lines[0].contains(r#""status":"failed""#));
    assert!(lines[1].contains(r#""query_id":"q-ok""#));
    assert!(lines[1].contains(r#""status":"ok""#));
}

#[tokio::test]
async fn batch_budget_division_shrinks_later_deadlines() {
    let dir = tempfile::tempdir().unwrap();
    let transcript = [
        r#"{"match":"Rewrite the user question","response":"SLEEP:250:What is the capital of France?"}"#,
        r#"{"match":"Split the question","response":"[\"capital of France\"]"}"#,
        r#"{"match":"Answer the question using","response":"ANSWER: Paris"}"#,
    ]
    .join("\n");
    let engine = engine_with(dir.path(), &transcript, |config| {
        config.per_query_deadline_ms = 600;
        config.batch_deadline_ms = 900;
        config.concurrency_limit = 1;
    });
    let input = write_file(
        dir.path(),
        "questions.jsonl",
        &(1..=3)
            .map(|i| format!(r#"{{"id":"q{i}","question":"question number {i}"}}"#))
            .collect::<Vec<_>>()
            .join("\n"),
    );
    let output = dir.path().join("records.jsonl");
    let summary = engine.run_batch(&input, &output).await.unwrap();

    // Equal division of the 900 ms batch budget grants ~300 ms per query,
    // under the 600 ms nominal deadline, so the ladder engages everywhere.
    assert_eq!(summary.total, 3);
    assert!(
        summary.degradation_counts.get("deadline_degraded").copied().unwrap_or(0) >= 2,
        "{:?}",
        summary.degradation_counts
    );
    let ids: Vec<String> = std::fs::read_to_string(&output)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["query_id"]
            .as_str()
            .unwrap()
            .to_string())
        .collect();
    assert_eq!(ids, vec!["q1", "q2", "q3"]);
}

#[tokio::test]
async fn all_search_backends_down_is_a_failure_record() {
    let dir = tempfile::tempdir().unwrap();
    let corpusless = [
        r#"{"match":"Rewrite the user question","response":"What is the capital of France?"}"#,
        r#"{"match":"Split the question","response":"[\"capital of France\"]"}"#,
    ]
    .join("\n");
    let transcript = write_file(dir.path(), "transcript.jsonl", &corpusless);
    let config = PipelineConfig {
        retriever_backend: RetrieverBackendKind::Remote,
        search_endpoint: Some("http://127.0.0.1:1".into()),
        search_index: Some("docs".into()),
        per_query_deadline_ms: 5_000,
        ..PipelineConfig::default()
    };
    let engine = Engine::new(
        config,
        EngineOptions {
            corpus_path: None,
            mock_transcript: Some(transcript),
            cache_dir: None,
            deterministic: false,
        },
    )
    .unwrap();
    let record = engine
        .run_single(&UserQuery::new("q1", "any question at all"), 5_000)
        .await;

    assert_eq!(record.status, RecordStatus::Failed);
    assert!(record.answer_text.is_empty());
    assert!(record.degradation_flags.contains(&DegradationFlag::RetrievalPartial));
    assert!(record.error.is_some());
}

#[tokio::test]
async fn eval_judges_records_and_short_circuits_abstentions() {
    let dir = tempfile::tempdir().unwrap();
    let transcript = [
        // Batch stages for two questions; the third question fails generation.
        // Generation matchers pin the exact question line — document blocks
        // in the prompt can mention other topics.
        r#"{"match":"(?s)Rewrite the user question.*captial of france","regex":true,"response":"What is the capital of France?"}"#,
        r#"{"match":"(?s)Split the question.*capital of France","regex":true,"response":"[\"capital of France\"]"}"#,
        r#"{"match":"(?s)Answer the question using.*Question: What is the capital of France\\?","regex":true,"response":"ANSWER: Paris"}"#,
        r#"{"match":"(?s)Rewrite the user question.*norway","regex":true,"response":"What is the climate of Norway?"}"#,
        r#"{"match":"(?s)Split the question.*Norway","regex":true,"response":"[\"Norway climate\"]"}"#,
        r#"{"match":"(?s)Answer the question using.*Question: What is the climate of Norway\\?","regex":true,"response":"ANSWER: Cold and rainy"}"#,
        r#"{"match":"(?s)Rewrite the user question.*spain","regex":true,"response":"What is the climate of Spain?"}"#,
        r#"{"match":"(?s)Split the question.*Spain","regex":true,"response":"[\"Spain climate\"]"}"#,
        // Eval stages: pseudo answers and judges.
        r#"{"match":"write the best possible direct answer","response":"A plausible reference answer."}"#,
        r#"{"match":"expert evaluator assessing the quality of a predicted answer","response":"2"}"#,
        r#"{"match":"grounded in the provided source documents","response":"1"}"#,
    ]
    .join("\n");
    let engine = engine_with(dir.path(), &transcript, |_| {});
    let input = write_file(
        dir.path(),
        "questions.jsonl",
        &[
            r#"{"id":"q1","question":"what is teh captial of france"}"#,
            r#"{"id":"q2","question":"hows norway weather"}"#,
            r#"{"id":"q3","question":"hows spain weather"}"#,
        ]
        .join("\n"),
    );
    let records = dir.path().join("records.jsonl");
    let summary = engine.run_batch(&input, &records).await.unwrap();
    assert_eq!(summary.failed, 1); // q3's generation prompt matches nothing

    let calls_before_eval = engine.gateway().call_count();
    let verdicts = dir.path().join("verdicts.jsonl");
    let report = engine.run_eval(&records, &verdicts).await.unwrap();

    // Two judged records cost 3 calls each; the abstention costs zero.
    assert_eq!(engine.gateway().call_count() - calls_before_eval, 6);
    assert_eq!(report.evaluated, 3);
    assert_eq!(report.unevaluable, 0);
    assert_eq!(report.relevance.weighted_sum, 4); // 2 + 2 + 0
    assert_eq!(report.faithfulness.weighted_sum, 2); // 1 + 1 + 0
    assert_eq!(report.per_question.len(), 3);
    assert_eq!(report.per_question[2].question_id, "q3");
    assert_eq!(report.per_question[2].relevance, 0);

    let verdict_lines = std::fs::read_to_string(&verdicts).unwrap();
    assert_eq!(verdict_lines.lines().count(), 3);
}

#[tokio::test]
async fn empty_records_file_yields_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    let engine = engine_with(dir.path(), &happy_transcript(), |_| {});
    let records = write_file(dir.path(), "records.jsonl", "");
    let verdicts = dir.path().join("verdicts.jsonl");
    let report = engine.run_eval(&records, &verdicts).await.unwrap();
    assert_eq!(report.evaluated, 0);
    assert_eq!(report.relevance.weighted_sum, 0);
}
