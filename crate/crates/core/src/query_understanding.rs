//! Query rewriting and multi-intent decomposition.
//!
//! A noisy user question is first rewritten into a clean single-line form,
//! then decomposed into at most `max_subqueries` focused sub-queries. Both
//! steps degrade safely: an empty rewrite falls back to the original text,
//! and any unparseable decomposition falls back to the rewritten query alone.
//! No model behavior can make a query unanswerable here.

use serde::{Deserialize, Serialize};

use crate::config::ModelBinding;
use crate::gateway::{ChatRequest, Gateway, GatewayError};
use crate::prompts;
use crate::types::{canonicalize, UserQuery};

/// Which parsing stage produced the sub-queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseMode {
    /// The whole reply was a JSON array of strings.
    StrictJson,
    /// A fenced or bracketed JSON array was extracted from surrounding prose.
    FencedJson,
    /// Newline/semicolon-split lines, list markers stripped.
    LineFallback,
    /// Nothing usable; the caller substitutes the rewritten query.
    Degraded,
}

/// Sub-queries as parsed from raw model output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecompositionPayload {
    pub sub_queries: Vec<String>,
    pub parse_mode: ParseMode,
}

/// Rewrite result; `degraded` means the model output was unusable and the
/// original text was kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteOutcome {
    pub rewritten: String,
    pub degraded: bool,
}

/// Decomposition result destined for a `QueryPlan`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecompositionOutcome {
    pub sub_queries: Vec<String>,
    pub degraded: bool,
    pub parse_mode: ParseMode,
}

/// Rewrites a noisy query into a clean, retrieval-friendly single line.
/// Empty or whitespace model output falls back to the original text.
pub async fn rewrite_query(
    gateway: &Gateway,
    binding: &ModelBinding,
    query: &UserQuery,
    deadline_ms: u64,
) -> Result<RewriteOutcome, GatewayError> {
    let template = prompts::template(&binding.prompt_template_id)
        .unwrap_or_else(|| prompts::template("rewrite-v1").unwrap());
    let request = ChatRequest {
        binding: binding.clone(),
        system_prompt: prompts::system_prompt(&binding.prompt_template_id).to_string(),
        user_prompt: prompts::render(template, &[("query", &query.text)]),
        deadline_ms,
    };
    let response = gateway.complete(&request).await?;
    let rewritten = first_line(&response.text);
    if rewritten.is_empty() {
        return Ok(RewriteOutcome {
            rewritten: query.text.clone(),
            degraded: true,
        });
    }
    Ok(RewriteOutcome {
        rewritten,
        degraded: false,
    })
}

/// Decomposes the rewritten query into 1..=`max_m` sub-queries. Parse failure
/// is not an error: the outcome degrades to `[q_prime]`.
pub async fn decompose_query(
    gateway: &Gateway,
    binding: &ModelBinding,
    q_prime: &str,
    max_m: usize,
    deadline_ms: u64,
) -> Result<DecompositionOutcome, GatewayError> {
    let template = prompts::template(&binding.prompt_template_id)
        .unwrap_or_else(|| prompts::template("decompose-v1").unwrap());
    let request = ChatRequest {
        binding: binding.clone(),
        system_prompt: prompts::system_prompt(&binding.prompt_template_id).to_string(),
        user_prompt: prompts::render(
            template,
            &[("query", q_prime), ("max_m", &max_m.to_string())],
        ),
        deadline_ms,
    };
    let response = gateway.complete(&request).await?;
    let payload = parse_decomposition(&response.text, max_m);
    if payload.sub_queries.is_empty() {
        return Ok(DecompositionOutcome {
            sub_queries: vec![q_prime.to_string()],
            degraded: true,
            parse_mode: ParseMode::Degraded,
        });
    }
    Ok(DecompositionOutcome {
        sub_queries: payload.sub_queries,
        degraded: false,
        parse_mode: payload.parse_mode,
    })
}

/// Total, deterministic parser for decomposition output. Stages, in order:
/// strict JSON array, extracted fenced/bracketed JSON array, line split,
/// degraded (empty). Results are cleaned, deduplicated by canonicalized text
/// preserving first occurrence, and truncated to `max_m`.
pub fn parse_decomposition(raw: &str, max_m: usize) -> DecompositionPayload {
    if let Some(items) = strict_json_array(raw) {
        if let Some(cleaned) = clean(items, max_m) {
            return DecompositionPayload {
                sub_queries: cleaned,
                parse_mode: ParseMode::StrictJson,
            };
        }
    }
    if let Some(items) = extracted_json_array(raw) {
        if let Some(cleaned) = clean(items, max_m) {
            return DecompositionPayload {
                sub_queries: cleaned,
                parse_mode: ParseMode::FencedJson,
            };
        }
    }
    if let Some(cleaned) = clean(split_lines(raw), max_m) {
        return DecompositionPayload {
            sub_queries: cleaned,
            parse_mode: ParseMode::LineFallback,
        };
    }
    DecompositionPayload {
        sub_queries: Vec::new(),
        parse_mode: ParseMode::Degraded,
    }
}

fn strict_json_array(raw: &str) -> Option<Vec<String>> {
    serde_json::from_str::<Vec<String>>(raw.trim()).ok()
}

/// Finds the first substring that parses as a JSON array of strings, either
/// inside a code fence or as a balanced bracket run.
fn extracted_json_array(raw: &str) -> Option<Vec<String>> {
    if let Some(start) = raw.find("```") {
        let after = &raw[start + 3..];
        if let Some(end) = after.find("```") {
            let body = after[..end].trim_start_matches("json").trim();
            if let Some(items) = strict_json_array(body) {
                return Some(items);
            }
        }
    }
    let bytes = raw.as_bytes();
    for (open, _) in raw.char_indices().filter(|(_, c)| *c == '[') {
        let mut depth = 0usize;
        let mut in_string = false;
        let mut escaped = false;
        for close in open..bytes.len() {
            let c = bytes[close] as char;
            if in_string {
                if escaped {
                    escaped = false;
                } else if c == '\\' {
                    escaped = true;
                } else if c == '"' {
                    in_string = false;
                }
                continue;
            }
            match c {
                '"' => in_string = true,
                '[' => depth += 1,
                ']' => {
                    depth -= 1;
                    if depth == 0 {
                        if let Some(items) = strict_json_array(&raw[open..=close]) {
                            return Some(items);
                        }
                        break;
                    }
                }
                _ => {}
            }
        }
    }
    None
}

fn split_lines(raw: &str) -> Vec<String> {
    raw.split(['\n', ';'])
        .map(strip_list_marker)
        .filter(|line| !line.is_empty())
        .collect()
}

/// Drops leading list markers ("-", "*", "•", "1.", "2)") and wrapping
/// quotes/trailing commas from one candidate line.
fn strip_list_marker(line: &str) -> String {
    let mut s = line.trim();
    s = s.trim_start_matches(['-', '*', '•']).trim_start();
    let digits = s.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &s[digits..];
        if let Some(stripped) = rest.strip_prefix(['.', ')']) {
            s = stripped.trim_start();
        }
    }
    let s = s.trim_end_matches(',').trim();
    let s = if s.len() >= 2 && (s.starts_with('"') && s.ends_with('"')
        || s.starts_with('\'') && s.ends_with('\''))
    {
        &s[1..s.len() - 1]
    } else {
        s
    };
    s.trim().to_string()
}

/// Drops empties, dedups by canonicalized text keeping first occurrence, and
/// truncates to `max_m`. Returns None when nothing survives.
fn clean(items: Vec<String>, max_m: usize) -> Option<Vec<String>> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for item in items {
        let trimmed = item.trim();
        if trimmed.is_empty() {
            continue;
        }
        if seen.insert(canonicalize(trimmed)) {
            out.push(trimmed.to_string());
            if out.len() == max_m {
                break;
            }
        }
    }
    if out.is_empty() {
        None
    } else {
        Some(out)
    }
}

fn first_line(text: &str) -> String {
    let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    strip_list_marker(line)
}
