//! Versioned prompt template assets and placeholder rendering.
//!
//! Templates are plain-text files compiled into the binary and addressed by
//! the `prompt_template_id` carried on each model binding. Placeholders use
//! `{name}` syntax and are replaced literally — no escaping, no recursion.

/// Looks up a built-in template by id.
pub fn template(id: &str) -> Option<&'static str> {
    match id {
        "rewrite-v1" => Some(include_str!("../assets/prompts/rewrite-v1.txt")),
        "decompose-v1" => Some(include_str!("../assets/prompts/decompose-v1.txt")),
        "generate-cot-v1" => Some(include_str!("../assets/prompts/generate-cot-v1.txt")),
        "pseudo-answer-v1" => Some(include_str!("../assets/prompts/pseudo-answer-v1.txt")),
        "judge-relevance-v1" => Some(include_str!("../assets/prompts/judge-relevance-v1.txt")),
        "judge-faithfulness-v1" => {
            Some(include_str!("../assets/prompts/judge-faithfulness-v1.txt"))
        }
        _ => None,
    }
}

/// Renders a template by substituting each `{name}` with its value.
/// Unknown placeholders are left in place so they surface in test output.
pub fn render(template: &str, substitutions: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in substitutions {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

/// System prompt used for a given template family. Short and fixed; the
/// behavioral instructions live in the user-prompt templates.
pub fn system_prompt(template_id: &str) -> &'static str {
    match template_id {
        "rewrite-v1" => "You clean up noisy search questions without changing their meaning.",
        "decompose-v1" => "You break complex questions into focused search sub-queries.",
        "generate-cot-v1" => {
            "You answer questions by reasoning carefully over the supplied documents."
        }
        "pseudo-answer-v1" => "You write concise reference answers grounded in supplied documents.",
        "judge-relevance-v1" | "judge-faithfulness-v1" => {
            "You are a strict, consistent evaluator. You output only a single numerical score."
        }
        _ => "You are a helpful assistant.",
    }
}
