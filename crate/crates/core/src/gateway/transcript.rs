//! Deterministic scripted chat backend driven by a transcript file.
//!
//! A transcript is JSONL: one entry per line, matched in file order against
//! the request prompt (system and user text concatenated). The first
//! non-exhausted entry whose matcher fires decides the outcome.
//!
//! Entry fields:
//! - `match`: substring to look for, or a regex when `"regex": true`
//! - `response`: the reply text
//! - `responses`: reply texts indexed by sample index (self-consistency paths)
//! - `fail`: `true` to fail as a transient backend error
//! - `sleep_ms`: delay before replying
//! - `times`: how many matches this entry serves before it is skipped
//!
//! Inside `response`/`responses`, the literal value `"FAIL"` is a transient
//! failure directive, and `"SLEEP:<ms>:<text>"` sleeps before replying with
//! `<text>`. A response that genuinely needs to start with those tokens does
//! not belong in a test transcript.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use regex::Regex;
use serde::Deserialize;

use super::{BackendError, BackendRequest};

#[derive(Debug, Deserialize)]
struct RawEntry {
    #[serde(rename = "match")]
    matcher: String,
    #[serde(default)]
    regex: bool,
    #[serde(default)]
    response: Option<String>,
    #[serde(default)]
    responses: Option<Vec<String>>,
    #[serde(default)]
    fail: bool,
    #[serde(default)]
    sleep_ms: Option<u64>,
    #[serde(default)]
    times: Option<u64>,
}

#[derive(Debug)]
enum Matcher {
    Substring(String),
    Pattern(Regex),
}

impl Matcher {
    fn matches(&self, prompt: &str) -> bool {
        match self {
            Matcher::Substring(needle) => prompt.contains(needle),
            Matcher::Pattern(re) => re.is_match(prompt),
        }
    }
}

#[derive(Debug)]
struct Entry {
    matcher: Matcher,
    response: Option<String>,
    responses: Option<Vec<String>>,
    fail: bool,
    sleep_ms: Option<u64>,
    remaining: Option<Mutex<u64>>,
}

/// Scripted mock backend. With a fixed transcript the whole pipeline becomes
/// a pure function of its inputs.
#[derive(Debug)]
pub struct ScriptedMock {
    entries: Vec<Entry>,
    calls: AtomicU64,
}

/// Transcript parse failure with the offending line number.
#[derive(Debug, thiserror::Error)]
#[error("transcript line {line}: {reason}")]
pub struct TranscriptError {
    pub line: usize,
    pub reason: String,
}

impl ScriptedMock {
    pub fn from_jsonl(text: &str) -> Result<Self, TranscriptError> {
        let mut entries = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let raw: RawEntry = serde_json::from_str(trimmed).map_err(|e| TranscriptError {
                line: line_no,
                reason: e.to_string(),
            })?;
            if !raw.fail && raw.response.is_none() && raw.responses.is_none() {
                return Err(TranscriptError {
                    line: line_no,
                    reason: "entry needs one of response, responses, or fail".into(),
                });
            }
            let matcher = if raw.regex {
                Matcher::Pattern(Regex::new(&raw.matcher).map_err(|e| TranscriptError {
                    line: line_no,
                    reason: e.to_string(),
                })?)
            } else {
                Matcher::Substring(raw.matcher)
            };
            entries.push(Entry {
                matcher,
                response: raw.response,
                responses: raw.responses,
                fail: raw.fail,
                sleep_ms: raw.sleep_ms,
                remaining: raw.times.map(Mutex::new),
            });
        }
        Ok(Self {
            entries,
            calls: AtomicU64::new(0),
        })
    }

    pub fn from_file(path: &std::path::Path) -> Result<Self, TranscriptError> {
        let text = std::fs::read_to_string(path).map_err(|e| TranscriptError {
            line: 0,
            reason: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::from_jsonl(&text)
    }

    /// Total backend dispatches served (or failed) so far.
    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub(super) async fn send(&self, request: &BackendRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let prompt = format!("{}\n{}", request.system_prompt, request.user_prompt);
        for entry in &self.entries {
            if !entry.matcher.matches(&prompt) {
                continue;
            }
            if let Some(remaining) = &entry.remaining {
                let mut left = remaining.lock().unwrap();
                if *left == 0 {
                    continue; // exhausted; fall through to later entries
                }
                *left -= 1;
            }
            if let Some(ms) = entry.sleep_ms {
                tokio::time::sleep(Duration::from_millis(ms)).await;
            }
            if entry.fail {
                return Err(BackendError::Transient("scripted failure".into()));
            }
            let text = match (&entry.response, &entry.responses) {
                (Some(text), _) => text.clone(),
                (None, Some(variants)) => {
                    let idx = request.sample_index as usize % variants.len().max(1);
                    variants.get(idx).cloned().unwrap_or_default()
                }
                (None, None) => unreachable!("validated at parse time"),
            };
            return apply_directives(&text).await;
        }
        Err(BackendError::Fatal(format!(
            "no transcript entry matched prompt: {:?}",
            truncate_for_log(&prompt)
        )))
    }
}

async fn apply_directives(text: &str) -> Result<String, BackendError> {
    if text == "FAIL" {
        return Err(BackendError::Transient("scripted failure".into()));
    }
    if let Some(rest) = text.strip_prefix("SLEEP:") {
        if let Some((ms, body)) = rest.split_once(':') {
            if let Ok(ms) = ms.parse::<u64>() {
                tokio::time::sleep(Duration::from_millis(ms)).await;
                return Ok(body.to_string());
            }
        }
    }
    Ok(text.to_string())
}

fn truncate_for_log(prompt: &str) -> String {
    const LIMIT: usize = 160;
    if prompt.len() <= LIMIT {
        prompt.to_string()
    } else {
        let mut cut = LIMIT;
        while !prompt.is_char_boundary(cut) {
            cut -= 1;
        }
        format!("{}…", &prompt[..cut])
    }
}
