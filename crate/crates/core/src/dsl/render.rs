use std::fmt::Write;

use super::{Action, ControllerProgram, Guard};

/// Shortest decimal that parses back to the same f64 (`{:?}` keeps a `.0`).
fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Canonical source text, one state per line.
pub fn render_program(program: &ControllerProgram) -> String {
    let mut out = String::new();
    for (i, state) in program.states.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = write!(out, "state {} {{ ", state.name);
        match state.action {
            Action::RandomWalk => out.push_str("random_walk"),
            Action::Stop => out.push_str("stop"),
            Action::Goto { x, y } => {
                let _ = write!(out, "goto({}, {})", num(x), num(y));
            }
        }
        for t in &state.transitions {
            match t.guard {
                Guard::After(n) => {
                    let _ = write!(out, " after {n} ticks -> {}", t.target);
                }
                Guard::AtTarget(tol) => {
                    let _ = write!(out, " at_target {} -> {}", num(tol), t.target);
                }
            }
        }
        out.push_str(" }");
    }
    out
}
