use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Action, ControllerProgram};
use crate::sim::Arena;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LintRule {
    /// goto target outside the arena
    R1,
    /// state unreachable from the initial state
    R2,
}

impl LintRule {
    /// Blocking findings reject a program in the synthesis pipeline;
    /// the rest are reported only.
    pub fn is_blocking(self) -> bool {
        matches!(self, LintRule::R1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LintFinding {
    pub rule: LintRule,
    pub state: String,
    pub message: String,
}

impl fmt::Display for LintFinding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: state '{}': {}", self.rule, self.state, self.message)
    }
}

/// Rule-based review. An empty result means no rule fired, nothing more.
pub fn lint_security(program: &ControllerProgram, arena: &Arena) -> Vec<LintFinding> {
    let mut findings = Vec::new();

    for state in &program.states {
        if let Action::Goto { x, y } = state.action {
            if !arena.contains(x, y) {
                findings.push(LintFinding {
                    rule: LintRule::R1,
                    state: state.name.clone(),
                    message: format!(
                        "goto target ({x:?}, {y:?}) lies outside the arena [{:?}, {:?}] x [{:?}, {:?}]",
                        arena.min_x, arena.max_x, arena.min_y, arena.max_y
                    ),
                });
            }
        }
    }

    let mut reachable = vec![false; program.states.len()];
    let mut queue = VecDeque::from([0usize]);
    if !program.states.is_empty() {
        reachable[0] = true;
    }
    while let Some(i) = queue.pop_front() {
        for t in &program.states[i].transitions {
            if let Some(j) = program.state_index(&t.target) {
                if !reachable[j] {
                    reachable[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    for (state, seen) in program.states.iter().zip(&reachable) {
        if !seen {
            findings.push(LintFinding {
                rule: LintRule::R2,
                state: state.name.clone(),
                message: "state is unreachable from the initial state (dead or hidden logic)".into(),
            });
        }
    }
    findings
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;

    #[test]
    fn out_of_arena_goto_is_r1() {
        let p = parse_program("state a { goto(9.0, 9.0) }").unwrap();
        let f = lint_security(&p, &Arena::centered(2.0, 2.0));
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].rule, LintRule::R1);
        assert!(f[0].rule.is_blocking());
        assert!(f[0].to_string().starts_with("R1: state 'a': goto target (9.0, 9.0)"));
    }

    #[test]
    fn orphan_state_is_r2() {
        let p = parse_program("state a { random_walk } state hidden { goto(0.5, 0.5) }").unwrap();
        let f = lint_security(&p, &Arena::centered(2.0, 2.0));
        assert_eq!(f.len(), 1);
        assert_eq!((f[0].rule, f[0].state.as_str()), (LintRule::R2, "hidden"));
        assert!(!f[0].rule.is_blocking());
    }

    #[test]
    fn aggregate_program_is_clean() {
        let p = parse_program("state agg { goto(0.0, 0.0) after 150 ticks -> disp } state disp { random_walk }").unwrap();
        assert!(lint_security(&p, &Arena::centered(2.0, 2.0)).is_empty());
    }

    #[test]
    fn terminal_states_are_not_flagged() {
        let p = parse_program("state go { goto(0.5, 0.5) at_target 0.05 -> rest } state rest { stop }").unwrap();
        assert!(lint_security(&p, &Arena::centered(2.0, 2.0)).is_empty());
    }

    #[test]
    fn reachability_is_transitive() {
        // b only targeted from the unreachable c
        let p = parse_program("state a { stop } state b { stop } state c { stop after 1 ticks -> b }").unwrap();
        let names: Vec<_> = lint_security(&p, &Arena::default()).into_iter().map(|f| f.state).collect();
        assert_eq!(names, vec!["b", "c"]);
    }
}
