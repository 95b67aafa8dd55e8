//! `.swarmctl` controller language: a tiny state machine per robot.
//!
//! ```text
//! program    := state+
//! state      := 'state' IDENT '{' action transition* '}'
//! action     := 'random_walk' | 'stop' | 'goto' '(' NUMBER ',' NUMBER ')'
//! transition := guard '->' IDENT
//! guard      := 'after' INTEGER 'ticks' | 'at_target' NUMBER
//! ```
//!
//! The first state is the initial state. `#` starts a comment that runs to
//! the end of the line.

mod interp;
mod lint;
mod parser;
mod render;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use interp::{exec_controller_tick, random_walk_step, steer_toward, ControllerRuntime, RuntimeError};
pub use lint::{lint_security, LintFinding, LintRule};
pub use parser::parse_program;
pub use render::render_program;

/// Grammar summary embedded in synthesis prompts.
pub const GRAMMAR: &str = r#"program    := state+
state      := 'state' IDENT '{' action transition* '}'
action     := 'random_walk' | 'stop' | 'goto' '(' NUMBER ',' NUMBER ')'
transition := guard '->' IDENT
guard      := 'after' INTEGER 'ticks' | 'at_target' NUMBER

The first state is the initial state. Coordinates are meters; one tick is
0.1 s. `random_walk` drives forward with random turns, `goto(x, y)` turns
toward the point and drives there, `stop` halts. `after N ticks` fires once
the robot has spent N ticks in the state; `at_target D` fires when the robot
is within D meters of the state's goto target. The first transition whose
guard fires is taken. `#` starts a comment."#;

pub const KEYWORDS: &[&str] = &["state", "random_walk", "stop", "goto", "after", "ticks", "at_target"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerProgram {
    pub states: Vec<StateDef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDef {
    pub name: String,
    pub action: Action,
    pub transitions: Vec<Transition>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    RandomWalk,
    Goto { x: f64, y: f64 },
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub guard: Guard,
    pub target: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guard {
    After(u64),
    AtTarget(f64),
}

impl ControllerProgram {
    pub fn initial(&self) -> &str {
        &self.states[0].name
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s.name == name)
    }

    /// Checks the structural invariants the parser guarantees, for ASTs
    /// built by hand.
    pub fn validate(&self) -> Result<(), String> {
        if self.states.is_empty() {
            return Err("program has no states".into());
        }
        for (i, s) in self.states.iter().enumerate() {
            if self.states[..i].iter().any(|o| o.name == s.name) {
                return Err(format!("duplicate state '{}'", s.name));
            }
            if let Action::Goto { x, y } = s.action {
                if !(x.is_finite() && y.is_finite()) {
                    return Err(format!("state '{}': non-finite goto target", s.name));
                }
            }
            for t in &s.transitions {
                if self.state_index(&t.target).is_none() {
                    return Err(format!("unknown state '{}'", t.target));
                }
                match t.guard {
                    Guard::After(0) => return Err("out of range: after requires at least 1 tick".into()),
                    Guard::AtTarget(tol) if !(tol.is_finite() && tol > 0.0) => {
                        return Err("out of range: at_target tolerance must be positive".into())
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// A positioned message about controller source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl Diagnostic {
    pub fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            column,
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

/// One diagnostic per line, `line:col: message`.
pub fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n")
}
