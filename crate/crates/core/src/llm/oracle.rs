//! Rule-based stand-in for an ideal model. It reads the structured parts of
//! the robot and operator prompts and answers deterministically.
//!
//! Rules, first match wins:
//! 1. an `injured person` tuple is visible: alert with every injured coordinate
//! 2. the robot's latest three or more readings share one position: self-diagnosis
//! 3. some robot reports only weeds while others report crops: peer discrepancy
//! 4. operator message: Inform gets a swarm summary, Instruct with a
//!    coordinate gets an `ACTIVITY`/`TARGET` directive
//! 5. majority statement over every visible observation

use std::collections::BTreeMap;

use super::{ChatMessage, Role};
use crate::protocol::{
    self, observation_line, observation_regex, point_regex, robot_id_regex, swarm_size_regex, tuple_regex,
    Observations, HISTORY_HEADER, INFORM_HEADER, INFORM_MARKER, SENSOR_HEADER,
};
use crate::sim::{CellKind, RobotId};

/// Readings of only one kind needed before a robot counts as suspicious.
const MIN_DISCREPANCY_EVIDENCE: usize = 15;
const STUCK_RUN: usize = 3;

#[derive(Debug, Clone, PartialEq)]
struct Tuple {
    kind: CellKind,
    x: String,
    y: String,
}

/// What the oracle can see in one user message.
#[derive(Debug, Default)]
struct View {
    robot_id: Option<RobotId>,
    is_robot_prompt: bool,
    own: Vec<Tuple>,
    all: Vec<Tuple>,
    /// Latest reported observations per peer, self excluded.
    peers: BTreeMap<RobotId, Observations>,
}

fn parse_tuples(text: &str) -> Vec<Tuple> {
    tuple_regex()
        .captures_iter(text)
        .filter_map(|c| {
            Some(Tuple {
                kind: c[1].parse().ok()?,
                x: c[2].to_string(),
                y: c[3].to_string(),
            })
        })
        .collect()
}

impl View {
    fn read(system: Option<&str>, user: &str) -> Self {
        let robot_id = robot_id_regex()
            .captures(user)
            .or_else(|| system.and_then(|s| robot_id_regex().captures(s)))
            .and_then(|c| c[1].parse().ok());
        let is_robot_prompt = user.contains(SENSOR_HEADER);
        let (own_text, history_text) = match user.find(SENSOR_HEADER) {
            Some(start) => {
                let rest = &user[start..];
                match rest.find(HISTORY_HEADER) {
                    Some(h) => (&rest[..h], &rest[h..]),
                    None => (rest, ""),
                }
            }
            None => (user, user),
        };
        let mut peers = BTreeMap::new();
        for c in observation_regex().captures_iter(history_text) {
            let Ok(id) = c[1].parse::<RobotId>() else { continue };
            if Some(id) == robot_id {
                continue;
            }
            peers.insert(
                id,
                Observations {
                    crops: c[2].parse().unwrap_or(0),
                    weeds: c[3].parse().unwrap_or(0),
                    injured: c.get(4).and_then(|m| m.as_str().parse().ok()).unwrap_or(0),
                },
            );
        }
        Self {
            robot_id,
            is_robot_prompt,
            own: parse_tuples(own_text),
            all: parse_tuples(user),
            peers,
        }
    }

    fn own_observations(&self) -> Observations {
        let mut obs = Observations::default();
        for t in &self.own {
            obs.add(t.kind);
        }
        obs
    }

    fn prefix(&self) -> String {
        match self.robot_id {
            Some(id) => format!("{}\n", observation_line(id, &self.own_observations())),
            None => String::new(),
        }
    }

    fn injured_alert(&self) -> Option<String> {
        let mut coords: Vec<String> = Vec::new();
        for t in self.all.iter().filter(|t| t.kind == CellKind::InjuredPerson) {
            let c = format!("({}, {})", t.x, t.y);
            if !coords.contains(&c) {
                coords.push(c);
            }
        }
        if coords.is_empty() {
            return None;
        }
        Some(format!(
            "{}I sensed an injured person at {}. Task paused in favour of this: it needs immediate attention \
             from the human operator.",
            self.prefix(),
            coords.join(", ")
        ))
    }

    fn stuck_alert(&self) -> Option<String> {
        if !self.is_robot_prompt {
            return None;
        }
        let last = self.own.last()?;
        let run = self
            .own
            .iter()
            .rev()
            .take_while(|t| t.x == last.x && t.y == last.y)
            .count();
        (run >= STUCK_RUN).then(|| {
            format!(
                "{}My last {run} readings were all taken at ({}, {}), so I am not moving. \
                 Possible issue with movement or sensor readings.",
                self.prefix(),
                last.x,
                last.y
            )
        })
    }

    fn per_robot(&self) -> BTreeMap<RobotId, Observations> {
        let mut all = self.peers.clone();
        if let Some(id) = self.robot_id {
            all.insert(id, self.own_observations());
        }
        all
    }

    fn discrepancy_alert(&self) -> Option<String> {
        let robots = self.per_robot();
        let suspects: Vec<RobotId> = robots
            .iter()
            .filter(|(_, o)| o.crops == 0 && o.weeds >= MIN_DISCREPANCY_EVIDENCE)
            .map(|(id, _)| *id)
            .collect();
        let witnesses: Vec<RobotId> = robots
            .iter()
            .filter(|(id, o)| o.crops > 0 && !suspects.contains(id))
            .map(|(id, _)| *id)
            .collect();
        if suspects.is_empty() || witnesses.is_empty() {
            return None;
        }
        let (subject, verb) = if suspects.len() == 1 {
            (format!("Robot {}", suspects[0]), "has")
        } else {
            (format!("Robots {}", join_ids(&suspects)), "have")
        };
        let from = if witnesses.len() == 1 {
            format!("Robot {}", witnesses[0])
        } else {
            format!("Robots {}", join_ids(&witnesses))
        };
        Some(format!(
            "{}{subject} {verb} reported weeds only, yet {from} found crops. \
             Treat this discrepancy as suspect data until checked.",
            self.prefix()
        ))
    }

    fn totals(&self) -> (Observations, usize) {
        let mut total = self.own_observations();
        for o in self.peers.values() {
            total.crops += o.crops;
            total.weeds += o.weeds;
            total.injured += o.injured;
        }
        let contributors = self.peers.len() + usize::from(self.robot_id.is_some() || !self.own.is_empty());
        (total, contributors)
    }

    fn majority_sentence(&self) -> String {
        let (total, robots) = self.totals();
        let basis = format!(
            "Combined observations ({} crops, {} weeds from {robots} robot{})",
            total.crops,
            total.weeds,
            if robots == 1 { "" } else { "s" }
        );
        if total.crops > total.weeds {
            format!("{basis}: there are {} than weeds.", protocol::MAJORITY_CROPS)
        } else if total.weeds > total.crops {
            format!("{basis}: there are {} than crops.", protocol::MAJORITY_WEEDS)
        } else {
            format!("{basis}: crops and weeds look {} so far.", protocol::MAJORITY_EQUAL)
        }
    }

    fn majority(&self) -> String {
        format!("{}{}", self.prefix(), self.majority_sentence())
    }
}

fn join_ids(ids: &[RobotId]) -> String {
    match ids {
        [] => String::new(),
        [one] => one.to_string(),
        [init @ .., last] => format!(
            "{} and {last}",
            init.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn instruct_directive(text: &str) -> Option<String> {
    let c = point_regex().captures(text)?;
    Some(format!("ACTIVITY: TARGETED NAVIGATION\nTARGET: ({}, {})", &c[1], &c[2]))
}

fn inform_summary(messages: &[ChatMessage], system: Option<&str>) -> String {
    // rounds the robot has answered so far
    let mut rounds = 0usize;
    let mut latest: Option<&str> = None;
    for pair in messages.windows(2) {
        if pair[0].role == Role::User && pair[0].content.contains(SENSOR_HEADER) && pair[1].role == Role::Assistant {
            rounds += 1;
            latest = Some(&pair[0].content);
        }
    }
    let view = View::read(system, latest.unwrap_or(""));
    let swarm_size: Option<usize> = system
        .and_then(|s| swarm_size_regex().captures(s))
        .and_then(|c| c[1].parse().ok());
    let robots = view.per_robot();
    let ids: Vec<RobotId> = match swarm_size {
        Some(n) => (1..=n as RobotId).collect(),
        None => robots.keys().copied().collect(),
    };

    let mut out = format!("{INFORM_HEADER}\n");
    if ids.is_empty() {
        out.push_str("- No robot has reported yet.\n");
    }
    for id in &ids {
        match robots.get(id) {
            Some(o) => out.push_str(&format!(
                "- Robot {id}: {} crops, {} weeds reported.\n",
                o.crops, o.weeds
            )),
            None => out.push_str(&format!("- Robot {id}: No report received yet.\n")),
        }
    }
    out.push_str("\nActivities\n");
    out.push_str("- Random walk with floor sensing once per second.\n");
    out.push_str(&format!(
        "- {rounds} discussion round{} completed so far.\n",
        if rounds == 1 { "" } else { "s" }
    ));
    out.push_str("\nResults So Far\n");
    let (total, _) = view.totals();
    if total.crops + total.weeds == 0 {
        out.push_str("- No observations have been collected yet.\n");
    } else {
        out.push_str(&format!("- {}\n", view.majority_sentence()));
    }
    out.push_str("\nProblems or Anomalies\n");
    let problems: Vec<String> = [view.injured_alert(), view.stuck_alert(), view.discrepancy_alert()]
        .into_iter()
        .flatten()
        .map(|s| s.lines().filter(|l| !observation_regex().is_match(l)).collect::<Vec<_>>().join(" "))
        .collect();
    if problems.is_empty() {
        out.push_str("- None detected so far.");
    } else {
        for p in problems {
            out.push_str(&format!("- {p}\n"));
        }
        out.truncate(out.trim_end().len());
    }
    out
}

/// Deterministic answer for a conversation; reads the last user message.
pub fn oracle_policy(messages: &[ChatMessage]) -> String {
    let system = messages.iter().find(|m| m.role == Role::System).map(|m| m.content.as_str());
    let Some(last) = messages.iter().rev().find(|m| m.role == Role::User) else {
        return View::default().majority();
    };
    let view = View::read(system, &last.content);

    if let Some(text) = view.injured_alert() {
        return text;
    }
    if let Some(text) = view.stuck_alert() {
        return text;
    }
    if let Some(text) = view.discrepancy_alert() {
        return text;
    }
    if !view.is_robot_prompt {
        if last.content.to_lowercase().contains(INFORM_MARKER) {
            return inform_summary(messages, system);
        }
        if let Some(text) = instruct_directive(&last.content) {
            return text;
        }
    }
    view.majority()
}
