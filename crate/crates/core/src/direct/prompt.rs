use std::path::Path;

use super::{BroadcastMessage, RobotAgentState};
use crate::llm::ChatMessage;
use crate::protocol::tuple;
use crate::sim::{RobotId, RobotState, SensorReading};

/// Rounds of message history shown in full in each prompt.
pub const DEFAULT_HISTORY_ROUNDS: usize = 3;

const DEFAULT_TEMPLATE: &str = include_str!("../../../../templates/robot_prompt.txt");
const SEPARATOR: &str = "---";

/// Robot prompt template: a system part and a user part separated by a
/// line holding only `---`.
///
/// Placeholders: `{{robot_id}}`, `{{swarm_size}}`, `{{round}}`,
/// `{{sensor_tuples}}`, `{{message_history}}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub system: String,
    pub user: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::parse(DEFAULT_TEMPLATE).expect("bundled template is valid")
    }
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut system = Vec::new();
        let mut user = Vec::new();
        let mut seen = false;
        for line in text.lines() {
            if !seen && line.trim_end() == SEPARATOR {
                seen = true;
            } else if seen {
                user.push(line);
            } else {
                system.push(line);
            }
        }
        if !seen {
            return Err("template needs a `---` line between the system and user parts".into());
        }
        let t = Self {
            system: system.join("\n").trim().to_string(),
            user: user.join("\n").trim().to_string(),
        };
        for ph in ["{{sensor_tuples}}", "{{message_history}}"] {
            if !t.user.contains(ph) {
                return Err(format!("user part lacks the {ph} placeholder"));
            }
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn system_message(&self, robot: RobotId, swarm_size: usize) -> ChatMessage {
        ChatMessage::system(
            self.system
                .replace("{{robot_id}}", &robot.to_string())
                .replace("{{swarm_size}}", &swarm_size.to_string()),
        )
    }

    pub fn user_message(
        &self,
        robot: RobotId,
        swarm_size: usize,
        round: u32,
        sensor_tuples: &str,
        message_history: &str,
    ) -> ChatMessage {
        ChatMessage::user(
            self.user
                .replace("{{robot_id}}", &robot.to_string())
                .replace("{{swarm_size}}", &swarm_size.to_string())
                .replace("{{round}}", &round.to_string())
                .replace("{{sensor_tuples}}", sensor_tuples)
                .replace("{{message_history}}", message_history),
        )
    }
}

pub fn render_tuples(log: &[SensorReading]) -> String {
    let items: Vec<String> = log.iter().map(|r| tuple(r.kind, r.x, r.y)).collect();
    format!("[{}]", items.join(", "))
}

/// Sent and received messages in arrival order, keeping the last
/// `keep_rounds` rounds.
pub fn render_history(sent: &[BroadcastMessage], received: &[BroadcastMessage], keep_rounds: usize) -> String {
    let mut all: Vec<&BroadcastMessage> = sent.iter().chain(received).collect();
    // within a round, deliveries happen in ascending sender order
    all.sort_by_key(|m| (m.round, m.sender));
    if all.is_empty() {
        return "[]".into();
    }
    let mut rounds: Vec<u32> = all.iter().map(|m| m.round).collect();
    rounds.dedup();
    let cutoff = rounds.len().saturating_sub(keep_rounds);
    let first_kept = rounds.get(cutoff).copied().unwrap_or(u32::MAX);
    let omitted = all.iter().filter(|m| m.round < first_kept).count();

    let mut lines = Vec::new();
    if omitted > 0 {
        lines.push(format!("({omitted} earlier messages omitted)"));
    }
    for m in all.iter().filter(|m| m.round >= first_kept) {
        let flat: Vec<&str> = m.text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
        lines.push(format!("- [round {}] Robot {}: {}", m.round, m.sender, flat.join(" ")));
    }
    lines.join("\n")
}

/// Appends this round's user message to the robot's conversation and
/// returns the full conversation to send.
pub fn build_robot_prompt(
    robot: &RobotState,
    agent: &mut RobotAgentState,
    template: &PromptTemplate,
    swarm_size: usize,
    round: u32,
    history_rounds: usize,
) -> Vec<ChatMessage> {
    if agent.conversation.is_empty() {
        agent.conversation.push(template.system_message(robot.id, swarm_size));
    }
    let user = template.user_message(
        robot.id,
        swarm_size,
        round,
        &render_tuples(&robot.sensor_log),
        &render_history(&agent.sent, &robot.inbox, history_rounds),
    );
    agent.conversation.push(user);
    agent.conversation.clone()
}
