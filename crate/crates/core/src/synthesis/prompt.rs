use std::sync::OnceLock;

use regex::Regex;

use super::{Stage, SynthesisAttempt, SynthesisRequest};
use crate::llm::ChatMessage;

const SYSTEM_PREAMBLE: &str = "You write controllers for small differential-drive robots. \
Controllers are finite state machines in the language below. Execution starts in the first state. \
Respond with exactly one fenced code block containing a `.swarmctl` program and nothing else.";

pub fn build_synthesis_prompt(request: &SynthesisRequest) -> Vec<ChatMessage> {
    let system = format!("{SYSTEM_PREAMBLE}\n\nGrammar:\n{}", request.grammar_excerpt.trim_end());
    let mut user = format!("Task:\n{}\n", request.description.trim());
    if !request.examples.is_empty() {
        user.push_str("\nExample controllers:\n");
        for ex in &request.examples {
            user.push_str(&format!("\n{}:\n```swarmctl\n{}\n```\n", ex.label, ex.source.trim_end()));
        }
    }
    vec![ChatMessage::system(system), ChatMessage::user(user.trim_end())]
}

fn fence_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // closing fence may share a line with code
    RE.get_or_init(|| Regex::new(r"(?s)```[A-Za-z0-9_-]*[ \t]*\n?(.*?)```").expect("valid regex"))
}

/// Body of the first fenced block, or the whole reply when there is none.
pub fn extract_source(response: &str) -> String {
    match fence_regex().captures(response) {
        Some(c) => c[1].trim().to_string(),
        None => response.trim().to_string(),
    }
}

/// The failed attempt's conversation plus its reply, followed by a user turn
/// quoting every diagnostic.
pub fn build_feedback_prompt(attempt: &SynthesisAttempt) -> Vec<ChatMessage> {
    let mut messages = attempt.prompt.clone();
    messages.push(ChatMessage::assistant(attempt.raw_response.clone()));
    let intro = match attempt.stage_reached {
        Stage::Syntax => "The program does not parse. Compiler diagnostics:",
        Stage::Logic => "The program parses, but the simulated swarm did not behave as requested:",
        Stage::Security => "The program was rejected by the security review. Remove or correct every issue below:",
        Stage::Accepted => "The program was accepted.",
    };
    let mut text = format!("{intro}\n");
    for d in &attempt.diagnostics {
        text.push_str(&format!("{d}\n"));
    }
    text.push_str("\nReply with the full corrected program in one fenced code block.");
    messages.push(ChatMessage::user(text));
    messages
}
