//! Judge-based evaluation: pseudo answers from a reference model, relevance
//! and faithfulness verdicts from a judge model, score parsing, and report
//! aggregation.
//!
//! Pseudo answers are used strictly as the golden slot for judging — nothing
//! in this module feeds back into answer generation. Abstentions (empty
//! predictions) score relevance 0 without any model call.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::ModelBinding;
use crate::gateway::{ChatRequest, Gateway, GatewayError};
use crate::prompts;
use crate::types::{JudgeMetric, JudgeScore};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no admissible score in judge output: {0:?}")]
    NoAdmissibleScore(String),
    #[error("judge output unparseable after re-ask: {0:?}")]
    JudgeUnparseable(String),
    #[error("reference model produced an empty pseudo answer")]
    EmptyPseudoAnswer,
    #[error("invalid evaluation input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Scans `raw` for word-boundary-delimited integer tokens (optional leading
/// minus) and returns the first one inside the admissible set.
pub fn parse_judge_score(raw: &str, admissible: &[i32]) -> Result<i32, EvalError> {
    if admissible.is_empty() {
        return Err(EvalError::InvalidInput("admissible set is empty".into()));
    }
    let bytes = raw.as_bytes();
    let pattern = regex::Regex::new(r"-?\d+").expect("static regex");
    for m in pattern.find_iter(raw) {
        if m.start() > 0 {
            let prev = bytes[m.start() - 1] as char;
            if prev.is_ascii_alphanumeric() || prev == '_' || prev == '-' {
                continue;
            }
        }
        if m.end() < bytes.len() {
            let next = bytes[m.end()] as char;
            if next.is_ascii_alphanumeric() || next == '_' {
                continue;
            }
        }
        let Ok(value) = m.as_str().parse::<i32>() else {
            continue;
        };
        if admissible.contains(&value) {
            return Ok(value);
        }
    }
    Err(EvalError::NoAdmissibleScore(truncate(raw)))
}

fn truncate(raw: &str) -> String {
    let mut cut = raw.len().min(120);
    while !raw.is_char_boundary(cut) {
        cut -= 1;
    }
    raw[..cut].to_string()
}

/// One reference-model call producing the pseudo golden answer for a
/// question. The document texts must be in context order.
pub async fn generate_pseudo_answer(
    gateway: &Gateway,
    reference_binding: &ModelBinding,
    question: &str,
    document_texts: &[String],
    deadline_ms: u64,
) -> Result<String, EvalError> {
    if document_texts.is_empty() {
        return Err(EvalError::InvalidInput(
            "pseudo answer needs at least one document".into(),
        ));
    }
    let template = prompts::template(&reference_binding.prompt_template_id)
        .unwrap_or_else(|| prompts::template("pseudo-answer-v1").unwrap());
    let request = ChatRequest {
        binding: reference_binding.clone(),
        system_prompt: prompts::system_prompt(&reference_binding.prompt_template_id).to_string(),
        user_prompt: prompts::render(
            template,
            &[
                ("documents", &numbered_blocks(document_texts)),
                ("question", question),
            ],
        ),
        deadline_ms,
    };
    let response = gateway.complete(&request).await?;
    let answer = response.text.trim().to_string();
    if answer.is_empty() {
        return Err(EvalError::EmptyPseudoAnswer);
    }
    Ok(answer)
}

fn numbered_blocks(texts: &[String]) -> String {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| format!("[{}] {}", i + 1, t))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Judges semantic equivalence and relevance of `prediction` against the
/// golden answer on the {-1, 0, 1, 2} scale. An empty prediction is the
/// abstention case: scored 0 with no model call.
pub async fn judge_relevance(
    gateway: &Gateway,
    judge_binding: &ModelBinding,
    question: &str,
    golden: &str,
    prediction: &str,
    deadline_ms: u64,
) -> Result<JudgeScore, EvalError> {
    if prediction.trim().is_empty() {
        return Ok(JudgeScore {
            metric: JudgeMetric::Relevance,
            value: 0,
            raw_judge_output: String::new(),
        });
    }
    let template = prompts::template("judge-relevance-v1").unwrap();
    let user_prompt = prompts::render(
        template,
        &[
            ("question", question),
            ("answer", golden),
            ("prediction", prediction),
        ],
    );
    ask_judge(
        gateway,
        judge_binding,
        user_prompt,
        JudgeMetric::Relevance,
        deadline_ms,
    )
    .await
}

/// Judges grounding of `prediction` in the documents on the {-1, 0, 1} scale.
pub async fn judge_faithfulness(
    gateway: &Gateway,
    judge_binding: &ModelBinding,
    question: &str,
    prediction: &str,
    document_texts: &[String],
    deadline_ms: u64,
) -> Result<JudgeScore, EvalError> {
    if document_texts.is_empty() {
        return Err(EvalError::InvalidInput(
            "faithfulness needs at least one document".into(),
        ));
    }
    let template = prompts::template("judge-faithfulness-v1").unwrap();
    let user_prompt = prompts::render(
        template,
        &[
            ("documents", &numbered_blocks(document_texts)),
            ("question", question),
            ("prediction", prediction),
        ],
    );
    ask_judge(
        gateway,
        judge_binding,
        user_prompt,
        JudgeMetric::Faithfulness,
        deadline_ms,
    )
    .await
}

/// One judge call, and on an unparseable verdict exactly one re-ask with a
/// terse reminder appended (a new prompt, so the cache cannot replay the
/// same bad reply).
async fn ask_judge(
    gateway: &Gateway,
    judge_binding: &ModelBinding,
    user_prompt: String,
    metric: JudgeMetric,
    deadline_ms: u64,
) -> Result<JudgeScore, EvalError> {
    let system = prompts::system_prompt("judge-relevance-v1").to_string();
    let request = ChatRequest {
        binding: judge_binding.clone(),
        system_prompt: system.clone(),
        user_prompt: user_prompt.clone(),
        deadline_ms,
    };
    let response = gateway.complete(&request).await?;
    match parse_judge_score(&response.text, metric.admissible()) {
        Ok(value) => {
            return Ok(JudgeScore {
                metric,
                value,
                raw_judge_output: response.text,
            })
        }
        Err(EvalError::NoAdmissibleScore(_)) => {}
        Err(e) => return Err(e),
    }

    let retry = ChatRequest {
        binding: judge_binding.clone(),
        system_prompt: system,
        user_prompt: format!("{user_prompt}\n\nReturn only the numerical score."),
        deadline_ms,
    };
    let response = gateway.complete(&retry).await?;
    match parse_judge_score(&response.text, metric.admissible()) {
        Ok(value) => Ok(JudgeScore {
            metric,
            value,
            raw_judge_output: response.text,
        }),
        Err(_) => Err(EvalError::JudgeUnparseable(truncate(&response.text))),
    }
}

/// Per-metric score counts. Keys are exactly the metric's admissible values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreHistogram {
    pub metric: JudgeMetric,
    pub counts: BTreeMap<i32, u64>,
}

impl ScoreHistogram {
    pub fn new(metric: JudgeMetric) -> Self {
        Self {
            metric,
            counts: metric.admissible().iter().map(|&v| (v, 0)).collect(),
        }
    }

    /// Builds a histogram from explicit counts, rejecting non-admissible keys.
    pub fn from_counts(metric: JudgeMetric, counts: &[(i32, u64)]) -> Result<Self, EvalError> {
        let mut histogram = Self::new(metric);
        for &(value, count) in counts {
            if !metric.admissible().contains(&value) {
                return Err(EvalError::InvalidInput(format!(
                    "count key {value} not admissible for {}",
                    metric.as_str()
                )));
            }
            *histogram.counts.get_mut(&value).unwrap() += count;
        }
        Ok(histogram)
    }

    pub fn add(&mut self, score: &JudgeScore) {
        debug_assert_eq!(score.metric, self.metric);
        if let Some(slot) = self.counts.get_mut(&score.value) {
            *slot += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// Score-weighted sum over the histogram: Σ value × count.
pub fn aggregate_scores(histogram: &ScoreHistogram) -> i64 {
    histogram
        .counts
        .iter()
        .map(|(&value, &count)| value as i64 * count as i64)
        .sum()
}

/// Everything the judges concluded about one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdictSet {
    pub question_id: String,
    pub relevance: JudgeScore,
    pub faithfulness: JudgeScore,
    pub pseudo_answer: String,
    pub judged_answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub counts: BTreeMap<i32, u64>,
    pub weighted_sum: i64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRow {
    pub question_id: String,
    pub relevance: i32,
    pub faithfulness: i32,
}

/// Aggregate evaluation report over a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub evaluated: u64,
    pub unevaluable: u64,
    pub relevance: MetricReport,
    pub faithfulness: MetricReport,
    pub per_question: Vec<QuestionRow>,
}

fn metric_report(histogram: &ScoreHistogram) -> MetricReport {
    let weighted_sum = aggregate_scores(histogram);
    let total = histogram.total();
    MetricReport {
        counts: histogram.counts.clone(),
        weighted_sum,
        mean: if total == 0 {
            0.0
        } else {
            weighted_sum as f64 / total as f64
        },
    }
}

/// Builds the deterministic report: histograms, weighted sums, means, and
/// per-question rows ordered by question_id.
pub fn build_report(verdicts: &[JudgeVerdictSet], unevaluable: u64) -> EvalReport {
    let mut relevance = ScoreHistogram::new(JudgeMetric::Relevance);
    let mut faithfulness = ScoreHistogram::new(JudgeMetric::Faithfulness);
    let mut per_question: Vec<QuestionRow> = verdicts
        .iter()
        .map(|v| {
            relevance.add(&v.relevance);
            faithfulness.add(&v.faithfulness);
            QuestionRow {
                question_id: v.question_id.clone(),
                relevance: v.relevance.value,
                faithfulness: v.faithfulness.value,
            }
        })
        .collect();
    per_question.sort_by(|a, b| a.question_id.cmp(&b.question_id));
    EvalReport {
        evaluated: verdicts.len() as u64,
        unevaluable,
        relevance: metric_report(&relevance),
        faithfulness: metric_report(&faithfulness),
        per_question,
    }
}

/// Human-readable table for standard output.
pub fn render_report_table(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "evaluated: {}    unevaluable: {}\n",
        report.evaluated, report.unevaluable
    ));
    for (name, metric) in [
        ("relevance", &report.relevance),
        ("faithfulness", &report.faithfulness),
    ] {
        let counts = metric
            .counts
            .iter()
            .map(|(v, c)| format!("{v}:{c}"))
            .collect::<Vec<_>>()
            .join("  ");
        out.push_str(&format!(
            "{name:<13} sum {:>6}  mean {:>7.3}  [{counts}]\n",
            metric.weighted_sum, metric.mean
        ));
    }
    out
}
