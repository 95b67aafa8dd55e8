//! Controller synthesis: a natural-language request goes to the model, and
//! each reply is checked for syntax, simulated behavior and safety. Any
//! failure is fed back as the next prompt.

mod prompt;
mod validate;

use std::path::Path;

use serde::{Deserialize, Serialize};
use tracing::info;

use crate::dsl::{format_diagnostics, lint_security, parse_program, ControllerProgram, GRAMMAR};
use crate::llm::{ChatMessage, LlmClient};
use crate::scenario::{RunMetrics, Scenario};
use crate::sim::Arena;

pub use prompt::{build_feedback_prompt, build_synthesis_prompt, extract_source};
pub use validate::{security_review, validate_logic, validate_logic_seeds, Expectation, SECURITY_PASS};

pub const DEFAULT_MAX_ITERATIONS: u32 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerExample {
    pub label: String,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisRequest {
    pub description: String,
    pub examples: Vec<ControllerExample>,
    pub grammar_excerpt: String,
}

impl SynthesisRequest {
    pub fn new(description: impl Into<String>) -> Self {
        Self {
            description: description.into(),
            examples: Vec::new(),
            grammar_excerpt: GRAMMAR.to_string(),
        }
    }

    pub fn with_example(mut self, label: impl Into<String>, source: impl Into<String>) -> Self {
        self.examples.push(ControllerExample {
            label: label.into(),
            source: source.into(),
        });
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.description.trim().is_empty() {
            return Err("description must not be empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RequestFile {
    description: String,
    #[serde(default)]
    grammar_excerpt: Option<String>,
    #[serde(default)]
    examples: Vec<ExampleEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExampleEntry {
    label: String,
    #[serde(default)]
    source: Option<String>,
    #[serde(default)]
    file: Option<std::path::PathBuf>,
}

/// Reads a TOML request: `description`, optional `grammar_excerpt`, and
/// `[[examples]]` with a `label` plus inline `source` or a `file` path.
pub fn load_request(path: &Path) -> Result<SynthesisRequest, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let raw: RequestFile = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut examples = Vec::new();
    for e in raw.examples {
        let source = match (e.source, e.file) {
            (Some(s), None) => s,
            (None, Some(f)) => {
                let p = base.join(f);
                std::fs::read_to_string(&p).map_err(|err| format!("{}: {err}", p.display()))?
            }
            _ => return Err(format!("example '{}' needs exactly one of source, file", e.label)),
        };
        examples.push(ControllerExample {
            label: e.label,
            source: source.trim_end().to_string(),
        });
    }
    let request = SynthesisRequest {
        description: raw.description.trim().to_string(),
        examples,
        grammar_excerpt: raw.grammar_excerpt.unwrap_or_else(|| GRAMMAR.to_string()),
    };
    request.validate()?;
    Ok(request)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Syntax,
    Logic,
    Security,
    Accepted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisAttempt {
    pub iteration: u32,
    pub prompt: Vec<ChatMessage>,
    pub raw_response: String,
    pub extracted_source: String,
    pub stage_reached: Stage,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub stage: Stage,
    pub passed: bool,
    pub details: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<RunMetrics>,
    /// One line per problem, fed back verbatim on failure.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub findings: Vec<String>,
}

/// Logic stage inputs: where to run the candidate and what must hold.
#[derive(Debug, Clone)]
pub struct LogicCheck {
    pub scenario: Scenario,
    pub expectation: Expectation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOutcome {
    /// Present when an attempt was accepted.
    pub program: Option<ControllerProgram>,
    pub source: Option<String>,
    pub attempts: Vec<SynthesisAttempt>,
}

impl SynthesisOutcome {
    pub fn accepted(&self) -> bool {
        self.program.is_some()
    }

    /// Text summary of why the loop gave up.
    pub fn failure_report(&self) -> Option<String> {
        if self.accepted() {
            return None;
        }
        let mut out = format!("no controller accepted after {} attempt(s)", self.attempts.len());
        for a in &self.attempts {
            out.push_str(&format!("\nattempt {} stopped at {:?}:", a.iteration, a.stage_reached));
            for d in &a.diagnostics {
                out.push_str(&format!("\n  {d}"));
            }
        }
        Some(out)
    }
}

/// Runs synthesize, parse, simulate (when `logic` is given) and review,
/// feeding every failure back, for at most `max_iterations` synthesis calls.
pub fn run_synthesis_loop(
    request: &SynthesisRequest,
    client: &LlmClient,
    logic: Option<&LogicCheck>,
    max_iterations: u32,
) -> Result<SynthesisOutcome, String> {
    request.validate()?;
    if max_iterations == 0 {
        return Err("max_iterations must be at least 1".into());
    }
    let arena = logic.map(|l| l.scenario.arena()).unwrap_or_default();
    let mut conversation = build_synthesis_prompt(request);
    let mut attempts: Vec<SynthesisAttempt> = Vec::new();

    for iteration in 1..=max_iterations {
        let prompt = conversation.clone();
        let raw = match client.complete_chat(&prompt) {
            Ok(c) => c.text,
            Err(e) => {
                // nothing to reply to; the same prompt is retried
                attempts.push(SynthesisAttempt {
                    iteration,
                    prompt,
                    raw_response: String::new(),
                    extracted_source: String::new(),
                    stage_reached: Stage::Syntax,
                    diagnostics: vec![format!("backend: {}", e.kind())],
                });
                continue;
            }
        };
        let source = extract_source(&raw);
        let (stage, diagnostics, program) = evaluate_candidate(&source, client, logic, &arena);
        info!(iteration, ?stage, "synthesis attempt evaluated");
        let attempt = SynthesisAttempt {
            iteration,
            prompt,
            raw_response: raw,
            extracted_source: source.clone(),
            stage_reached: stage,
            diagnostics,
        };
        if stage == Stage::Accepted {
            attempts.push(attempt);
            return Ok(SynthesisOutcome {
                program,
                source: Some(source),
                attempts,
            });
        }
        conversation = build_feedback_prompt(&attempt);
        attempts.push(attempt);
    }
    Ok(SynthesisOutcome {
        program: None,
        source: None,
        attempts,
    })
}

fn evaluate_candidate(
    source: &str,
    client: &LlmClient,
    logic: Option<&LogicCheck>,
    arena: &Arena,
) -> (Stage, Vec<String>, Option<ControllerProgram>) {
    let program = match parse_program(source) {
        Ok(p) => p,
        Err(diags) => {
            let lines = format_diagnostics(&diags).lines().map(str::to_string).collect();
            return (Stage::Syntax, lines, None);
        }
    };
    // a program that leaves the arena is not even simulated
    let blocking: Vec<String> = lint_security(&program, arena)
        .into_iter()
        .filter(|f| f.rule.is_blocking())
        .map(|f| f.to_string())
        .collect();
    if !blocking.is_empty() {
        return (Stage::Security, blocking, None);
    }
    if let Some(check) = logic {
        let report = validate_logic(&program, &check.scenario, &check.expectation);
        if !report.passed {
            return (Stage::Logic, report.findings, None);
        }
    }
    let review = security_review(source, &program, client, arena);
    if !review.passed {
        return (Stage::Security, review.findings, None);
    }
    (Stage::Accepted, Vec::new(), Some(program))
}
