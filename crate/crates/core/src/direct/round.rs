use serde::{Deserialize, Serialize};
use tracing::warn;

use super::{build_robot_prompt, parse_robot_response, BroadcastMessage, ParsedResponse, PromptTemplate, RobotAgentState};
use crate::llm::{ChatMessage, CompletionResult, LlmClient, LlmError};
use crate::sim::{Radius, RobotId, SimState};

#[derive(Debug, Clone, PartialEq)]
pub struct DiscussionConfig {
    pub radius: Radius,
    pub template: PromptTemplate,
    pub history_rounds: usize,
}

impl Default for DiscussionConfig {
    fn default() -> Self {
        Self {
            radius: Radius::UNLIMITED,
            template: PromptTemplate::default(),
            history_rounds: super::DEFAULT_HISTORY_ROUNDS,
        }
    }
}

/// One robot's part of a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub robot: RobotId,
    /// The user message added this round.
    pub prompt: String,
    pub response: Option<String>,
    pub truncated: bool,
    /// Error kind when the request failed.
    pub error: Option<String>,
    pub parsed: Option<ParsedResponse>,
    pub recipients: Vec<RobotId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub round: u32,
    /// Ascending robot id.
    pub exchanges: Vec<Exchange>,
    pub delivered: usize,
    pub failures: usize,
}

/// Builds every robot's prompt and appends it to its conversation.
/// `agents[i]` belongs to `sim.robots[i]`.
pub fn prepare_round(
    sim: &SimState,
    agents: &mut [RobotAgentState],
    config: &DiscussionConfig,
    round: u32,
) -> Vec<Vec<ChatMessage>> {
    assert_eq!(agents.len(), sim.robots.len(), "one agent per robot required");
    let n = sim.robots.len();
    sim.robots
        .iter()
        .zip(agents.iter_mut())
        .map(|(robot, agent)| build_robot_prompt(robot, agent, &config.template, n, round, config.history_rounds))
        .collect()
}

/// Applies the completions of a prepared round: records replies, delivers
/// broadcasts, installs directives. Failed robots get their prompt rolled
/// back so the conversation keeps alternating.
pub fn apply_round(
    sim: &mut SimState,
    agents: &mut [RobotAgentState],
    config: &DiscussionConfig,
    round: u32,
    results: Vec<Result<CompletionResult, LlmError>>,
) -> RoundOutcome {
    assert_eq!(results.len(), agents.len(), "one result per agent required");
    // neighbor sets are fixed at the barrier, before any delivery
    let neighbors: Vec<Vec<RobotId>> = sim
        .robots
        .iter()
        .map(|r| sim.neighbors_within_radius(r.id, config.radius).unwrap_or_default())
        .collect();

    let mut exchanges = Vec::with_capacity(agents.len());
    let mut delivered = 0;
    let mut failures = 0;
    for (i, (agent, result)) in agents.iter_mut().zip(results).enumerate() {
        let robot = sim.robots[i].id;
        let prompt = agent.conversation.last().map(|m| m.content.clone()).unwrap_or_default();
        let result = result.and_then(|c| {
            if c.text.trim().is_empty() {
                Err(LlmError::Decode("empty response".into()))
            } else {
                Ok(c)
            }
        });
        match result {
            Ok(completion) => {
                agent.conversation.push(ChatMessage::assistant(completion.text.clone()));
                let parsed = parse_robot_response(&completion.text);
                let message = BroadcastMessage {
                    sender: robot,
                    round,
                    text: parsed.broadcast.clone(),
                };
                for &to in &neighbors[i] {
                    if let Ok(r) = sim.robot_mut(to) {
                        r.inbox.push(message.clone());
                        delivered += 1;
                    }
                }
                agent.sent.push(message);
                if let Some(d) = parsed.directive {
                    sim.robots[i].directive = Some(d);
                }
                exchanges.push(Exchange {
                    robot,
                    prompt,
                    response: Some(completion.text),
                    truncated: completion.truncated,
                    error: None,
                    parsed: Some(parsed),
                    recipients: neighbors[i].clone(),
                });
            }
            Err(e) => {
                warn!(robot, round, error = %e, "robot produced no response this round");
                agent.conversation.pop();
                failures += 1;
                exchanges.push(Exchange {
                    robot,
                    prompt,
                    response: None,
                    truncated: false,
                    error: Some(e.kind().to_string()),
                    parsed: None,
                    recipients: Vec::new(),
                });
            }
        }
    }
    RoundOutcome {
        round,
        exchanges,
        delivered,
        failures,
    }
}

/// Prompts every robot, waits for all replies (the round is a barrier),
/// then applies them in ascending id order.
pub fn run_discussion_round(
    sim: &mut SimState,
    agents: &mut [RobotAgentState],
    config: &DiscussionConfig,
    client: &LlmClient,
    round: u32,
) -> RoundOutcome {
    let prompts = prepare_round(sim, agents, config, round);
    let results = client.complete_batch(&prompts);
    apply_round(sim, agents, config, round, results)
}
