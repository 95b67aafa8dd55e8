//! Operator channel into a running swarm. Inform asks one robot for a
//! summary without touching its conversation; Instruct sends a command to
//! every robot and installs the directives they reply with.

use serde::{Deserialize, Serialize};

use crate::direct::{parse_robot_response, Directive};
use crate::llm::ChatMessage;
use crate::protocol::INFORM_MARKER;
use crate::scenario::{Engine, RecordKind};
use crate::sim::{Arena, Pose, RobotId};

pub const INFORM_CHANNEL: &str = "inform";
pub const INSTRUCT_CHANNEL: &str = "instruct";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Inform,
    Instruct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorMessage {
    pub kind: OperatorKind,
    pub text: String,
    /// Simulation tick at which the message was handled.
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OperatorError {
    #[error("operator message is empty")]
    EmptyText,
    #[error("no robot answered: {0}")]
    NoResponse(String),
    #[error("no actionable directive")]
    NoDirective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSnapshot {
    pub id: RobotId,
    pub pose: Pose,
    pub wheels_enabled: bool,
    pub sensor_stuck: bool,
    pub halted: bool,
    pub readings: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directive: Option<Directive>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_broadcast: Option<String>,
}

/// Read-only view of a run for display.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmSnapshot {
    pub tick: u64,
    pub rounds_executed: u32,
    pub finished: bool,
    pub paused: bool,
    pub arena: ArenaBounds,
    pub robots: Vec<RobotSnapshot>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArenaBounds {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl From<Arena> for ArenaBounds {
    fn from(a: Arena) -> Self {
        Self {
            min_x: a.min_x,
            min_y: a.min_y,
            max_x: a.max_x,
            max_y: a.max_y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformReply {
    pub robot: RobotId,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructReply {
    /// Directive most robots agreed on.
    pub directive: Directive,
    /// Robots that installed a directive, ascending.
    pub installed: Vec<RobotId>,
}

pub fn inform_message(text: &str) -> String {
    format!(
        "This is a {INFORM_MARKER}: {}\nSummarize the state of the swarm for the operator: \
         what each robot has reported, what the swarm is doing, results so far, and any problems.",
        text.trim()
    )
}

pub fn instruct_message(text: &str) -> String {
    format!(
        "Instruction from the human operator: {}\nReply with the ACTIVITY and TARGET lines you will follow.",
        text.trim()
    )
}

/// Most common directive; ties go to the lowest robot id.
pub fn consensus(directives: &[(RobotId, Directive)]) -> Option<Directive> {
    let mut best: Option<(usize, Directive)> = None;
    for (_, d) in directives {
        let count = directives.iter().filter(|(_, o)| o == d).count();
        if best.is_none_or(|(c, _)| count > c) {
            best = Some((count, *d));
        }
    }
    best.map(|(_, d)| d)
}

pub fn snapshot(engine: &Engine, paused: bool) -> SwarmSnapshot {
    let sim = engine.sim();
    let robots = sim
        .robots
        .iter()
        .zip(engine.agents())
        .map(|(r, a)| RobotSnapshot {
            id: r.id,
            pose: r.pose,
            wheels_enabled: r.wheels_enabled,
            sensor_stuck: r.sensor_stuck.is_some(),
            halted: r.halted,
            readings: r.sensor_log.len(),
            directive: r.directive,
            last_broadcast: a.sent.last().map(|b| b.text.clone()),
        })
        .collect();
    SwarmSnapshot {
        tick: sim.tick,
        rounds_executed: engine.rounds_executed(),
        finished: engine.is_finished(),
        paused,
        arena: sim.grid.arena().into(),
        robots,
    }
}

fn non_empty(text: &str) -> Result<&str, OperatorError> {
    let t = text.trim();
    if t.is_empty() {
        Err(OperatorError::EmptyText)
    } else {
        Ok(t)
    }
}

/// Asks robots in ascending id order until one answers.
pub fn inform(engine: &mut Engine, text: &str) -> Result<InformReply, OperatorError> {
    let text = non_empty(text)?;
    let message = inform_message(text);
    let tick = engine.sim().tick;
    let mut last_error = String::from("no robots");
    let ids: Vec<RobotId> = engine.agents().iter().map(|a| a.robot).collect();
    for (i, robot) in ids.into_iter().enumerate() {
        let mut prompt = engine.agents()[i].conversation.clone();
        prompt.push(ChatMessage::user(message.clone()));
        let result = engine.client().complete_chat(&prompt);
        let t = engine.transcript_mut();
        t.push_channel(tick, RecordKind::Prompt, Some(robot), None, Some(INFORM_CHANNEL), message.clone());
        match result {
            Ok(c) if !c.text.trim().is_empty() => {
                t.push_channel(tick, RecordKind::Response, Some(robot), None, Some(INFORM_CHANNEL), c.text.clone());
                return Ok(InformReply { robot, text: c.text });
            }
            Ok(_) => last_error = "empty response".into(),
            Err(e) => last_error = e.kind().to_string(),
        }
        t.push_channel(
            tick,
            RecordKind::Diagnostic,
            Some(robot),
            None,
            Some(INFORM_CHANNEL),
            format!("backend: {last_error}"),
        );
    }
    Err(OperatorError::NoResponse(last_error))
}

/// Sends the instruction to every robot and installs what each replies.
pub fn instruct(engine: &mut Engine, text: &str) -> Result<InstructReply, OperatorError> {
    let text = non_empty(text)?;
    let message = instruct_message(text);
    let tick = engine.sim().tick;
    let prompts: Vec<Vec<ChatMessage>> = engine
        .agents_mut()
        .iter_mut()
        .map(|a| {
            a.conversation.push(ChatMessage::user(message.clone()));
            a.conversation.clone()
        })
        .collect();
    let results = engine.client().complete_batch(&prompts);

    let mut installed = Vec::new();
    for (i, result) in results.into_iter().enumerate() {
        let robot = engine.agents()[i].robot;
        engine
            .transcript_mut()
            .push_channel(tick, RecordKind::Prompt, Some(robot), None, Some(INSTRUCT_CHANNEL), message.clone());
        let reply = match result {
            Ok(c) if !c.text.trim().is_empty() => c.text,
            other => {
                engine.agents_mut()[i].conversation.pop();
                let kind = match other {
                    Err(e) => e.kind().to_string(),
                    _ => "empty response".into(),
                };
                engine.transcript_mut().push_channel(
                    tick,
                    RecordKind::Diagnostic,
                    Some(robot),
                    None,
                    Some(INSTRUCT_CHANNEL),
                    format!("backend: {kind}"),
                );
                continue;
            }
        };
        engine.agents_mut()[i].conversation.push(ChatMessage::assistant(reply.clone()));
        engine
            .transcript_mut()
            .push_channel(tick, RecordKind::Response, Some(robot), None, Some(INSTRUCT_CHANNEL), reply.clone());
        if let Some(d) = parse_robot_response(&reply).directive {
            engine.install_directive(robot, d, Some(INSTRUCT_CHANNEL));
            installed.push((robot, d));
        }
    }
    let directive = consensus(&installed).ok_or(OperatorError::NoDirective)?;
    Ok(InstructReply {
        directive,
        installed: installed.into_iter().map(|(r, _)| r).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::direct::Activity;
    use crate::llm::{EndpointConfig, LlmClient, Role};
    use crate::scenario::{parse_scenario, Scenario};

    fn scenario(extra: &str) -> Scenario {
        let text = format!(
            "name = \"op\"\nn_robots = 3\nseed = 42\ntick_budget = 3000\nrounds_max = 0\n\
             [arena]\nwidth = 10.0\nheight = 10.0\norigin = [0.0, 0.0]\n\
             [grid]\ncrop_fraction = 0.7\ncell_size = 1.0\n{extra}"
        );
        Scenario::from_config(parse_scenario(&text).unwrap(), ".".into()).unwrap()
    }

    fn engine(cfg: EndpointConfig) -> Engine {
        Engine::new(&scenario(""), LlmClient::new(cfg).unwrap())
    }

    #[test]
    fn instruct_installs_consensus() {
        let mut e = engine(EndpointConfig::oracle());
        let r = instruct(&mut e, "go to (5, 7)").unwrap();
        assert_eq!(r.directive, Directive::navigate(5.0, 7.0));
        assert_eq!(r.installed, vec![1, 2, 3]);
        assert!(e.sim().robots.iter().all(|r| r.directive == Some(Directive::navigate(5.0, 7.0))));
        assert!(e.agents().iter().all(|a| a.alternates()));
        assert!(e.transcript().records().iter().all(|r| r.channel.as_deref() == Some(INSTRUCT_CHANNEL)));
    }

    #[test]
    fn instruct_without_coordinates_fails() {
        let mut e = engine(EndpointConfig::oracle());
        assert_eq!(instruct(&mut e, "do something useful"), Err(OperatorError::NoDirective));
        assert_eq!(instruct(&mut e, "  "), Err(OperatorError::EmptyText));
    }

    #[test]
    fn instruct_failure_rolls_back() {
        let reply = "ACTIVITY: STOP";
        let mut e = engine(EndpointConfig::scripted([reply, crate::llm::SCRIPT_TIMEOUT_MARKER, reply]));
        let before = e.agents()[1].conversation.len();
        let r = instruct(&mut e, "halt").unwrap();
        assert_eq!(r.directive.activity, Activity::Stop);
        assert_eq!(r.installed, vec![1, 3]);
        assert_eq!(e.agents()[1].conversation.len(), before);
        assert!(e.agents().iter().all(|a| a.alternates()));
    }

    #[test]
    fn consensus_tie_goes_to_lowest_id() {
        let a = Directive::navigate(1.0, 1.0);
        let b = Directive::stop();
        assert_eq!(consensus(&[(1, a), (2, b)]), Some(a));
        assert_eq!(consensus(&[(1, a), (2, b), (3, b)]), Some(b));
        assert_eq!(consensus(&[]), None);
    }

    #[test]
    fn inform_leaves_conversation_alone() {
        let mut e = engine(EndpointConfig::oracle());
        let before: Vec<usize> = e.agents().iter().map(|a| a.conversation.len()).collect();
        let r = inform(&mut e, "what is going on?").unwrap();
        assert_eq!(r.robot, 1);
        assert!(r.text.contains("Current State of the Swarm"), "{}", r.text);
        let after: Vec<usize> = e.agents().iter().map(|a| a.conversation.len()).collect();
        assert_eq!(before, after);
        let recs = e.transcript().records();
        assert_eq!(recs.len(), 2);
        assert!(recs.iter().all(|r| r.channel.as_deref() == Some(INFORM_CHANNEL)));
    }

    #[test]
    fn inform_skips_unresponsive_robot() {
        let mut e = engine(EndpointConfig::scripted([crate::llm::SCRIPT_TIMEOUT_MARKER, "all fine"]));
        let r = inform(&mut e, "status").unwrap();
        assert_eq!(r, InformReply { robot: 2, text: "all fine".into() });
        assert_eq!(e.transcript().records()[1].payload, "backend: timeout");
    }

    #[test]
    fn snapshot_reflects_state() {
        let mut e = engine(EndpointConfig::oracle());
        e.step();
        let s = snapshot(&e, true);
        assert_eq!(s.tick, 1);
        assert!(s.paused);
        assert_eq!(s.robots.len(), 3);
        assert_eq!(s.arena.max_x, 10.0);
        let json = serde_json::to_value(&s).unwrap();
        assert_eq!(json["robots"][0]["id"], 1);
        assert_eq!(e.agents()[0].conversation[0].role, Role::System);
    }
}
