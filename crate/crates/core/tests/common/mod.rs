#![allow(dead_code)]

use proptest::prelude::*;

use swarmchat_core::dsl::{Action, ControllerProgram, Guard, StateDef, Transition, KEYWORDS};

pub fn ident() -> impl Strategy<Value = String> {
    "[a-z_][a-z0-9_]{0,8}".prop_filter("keyword", |s| !KEYWORDS.contains(&s.as_str()))
}

pub fn coord() -> impl Strategy<Value = f64> {
    prop_oneof![(-1000i32..1000).prop_map(|v| v as f64 / 100.0), -1.0e3..1.0e3f64]
}

pub fn action() -> impl Strategy<Value = Action> {
    prop_oneof![
        Just(Action::RandomWalk),
        Just(Action::Stop),
        (coord(), coord()).prop_map(|(x, y)| Action::Goto { x, y }),
    ]
}

pub fn guard() -> impl Strategy<Value = Guard> {
    prop_oneof![
        (1u64..100_000).prop_map(Guard::After),
        (1e-4..10.0f64).prop_map(Guard::AtTarget),
    ]
}

pub fn program() -> impl Strategy<Value = ControllerProgram> {
    proptest::collection::btree_set(ident(), 1..6)
        .prop_flat_map(|names| {
            let names: Vec<String> = names.into_iter().collect();
            let n = names.len();
            let states = proptest::collection::vec(
                (action(), proptest::collection::vec((guard(), 0..n), 0..4)),
                n,
            );
            (Just(names), states)
        })
        .prop_map(|(names, states)| ControllerProgram {
            states: names
                .iter()
                .zip(states)
                .map(|(name, (action, ts))| StateDef {
                    name: name.clone(),
                    action,
                    transitions: ts
                        .into_iter()
                        .map(|(guard, t)| Transition {
                            guard,
                            target: names[t].clone(),
                        })
                        .collect(),
                })
                .collect(),
        })
}

pub const SAMPLE: &str = "# comment\nstate aggregate {\n  goto(0.0, -0.5)\n  after 150 ticks -> disperse\n}\nstate disperse { random_walk at_target 0.05 -> aggregate }\n";

/// Replaces `len` chars of [`SAMPLE`] at `pos` with `insert`.
pub fn mutate(pos: usize, len: usize, insert: &str) -> String {
    let mut s: Vec<char> = SAMPLE.chars().collect();
    let pos = pos.min(s.len());
    let end = (pos + len).min(s.len());
    s.splice(pos..end, insert.chars());
    s.into_iter().collect()
}
