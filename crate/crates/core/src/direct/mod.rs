//! Direct integration: one chat conversation per robot, periodic discussion
//! rounds over the neighbor graph, and structured directives parsed from
//! the replies.

mod prompt;
mod round;

use std::sync::OnceLock;

use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dsl::{random_walk_step, steer_toward, ControllerRuntime};
use crate::llm::ChatMessage;
use crate::protocol::ANOMALY_MARKERS;
use crate::sim::{CellKind, KinematicsParams, Pose, RobotId, SimError, SimState, WheelCommand};

pub use prompt::{build_robot_prompt, render_history, render_tuples, PromptTemplate, DEFAULT_HISTORY_ROUNDS};
pub use round::{
    apply_round, prepare_round, run_discussion_round, DiscussionConfig, Exchange, RoundOutcome,
};

/// Distance at which a targeted-navigation directive counts as reached.
pub const TARGET_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadcastMessage {
    pub sender: RobotId,
    pub round: u32,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activity {
    TargetedNavigation,
    RandomWalk,
    Stop,
}

impl Activity {
    pub fn label(self) -> &'static str {
        match self {
            Activity::TargetedNavigation => "TARGETED NAVIGATION",
            Activity::RandomWalk => "RANDOM WALK",
            Activity::Stop => "STOP",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        let norm: String = name
            .trim()
            .trim_end_matches('.')
            .to_ascii_lowercase()
            .split(|c: char| c.is_whitespace() || c == '_' || c == '-')
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        match norm.as_str() {
            "targeted navigation" | "navigate" | "goto" => Some(Activity::TargetedNavigation),
            "random walk" => Some(Activity::RandomWalk),
            "stop" | "wait" => Some(Activity::Stop),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Directive {
    pub activity: Activity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<(f64, f64)>,
}

impl Directive {
    pub fn navigate(x: f64, y: f64) -> Self {
        Self {
            activity: Activity::TargetedNavigation,
            target: Some((x, y)),
        }
    }

    pub fn stop() -> Self {
        Self {
            activity: Activity::Stop,
            target: None,
        }
    }

    pub fn random_walk() -> Self {
        Self {
            activity: Activity::RandomWalk,
            target: None,
        }
    }

    pub fn is_valid(&self) -> bool {
        match self.activity {
            Activity::TargetedNavigation => self.target.is_some_and(|(x, y)| x.is_finite() && y.is_finite()),
            _ => true,
        }
    }
}

impl std::fmt::Display for Directive {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ACTIVITY: {}", self.activity.label())?;
        if let Some((x, y)) = self.target {
            write!(f, "\nTARGET: ({x}, {y})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AnomalySpec {
    DisableWheelsAll,
    SensorStuck { robot: RobotId, kind: CellKind },
    PlaceInjured { x: f64, y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyKind {
    DisableWheelsAll,
    SensorStuck,
    PlaceInjured,
}

impl AnomalySpec {
    pub fn kind(&self) -> AnomalyKind {
        match self {
            AnomalySpec::DisableWheelsAll => AnomalyKind::DisableWheelsAll,
            AnomalySpec::SensorStuck { .. } => AnomalyKind::SensorStuck,
            AnomalySpec::PlaceInjured { .. } => AnomalyKind::PlaceInjured,
        }
    }
}

/// Everything the orchestrator keeps per robot between rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotAgentState {
    pub robot: RobotId,
    /// System message first, then alternating user/assistant.
    pub conversation: Vec<ChatMessage>,
    /// Broadcasts this robot sent, oldest first.
    pub sent: Vec<BroadcastMessage>,
}

impl RobotAgentState {
    pub fn new(robot: RobotId, system: ChatMessage) -> Self {
        Self {
            robot,
            conversation: vec![system],
            sent: Vec::new(),
        }
    }

    /// Whether the conversation is a system message followed by strictly
    /// alternating user/assistant turns.
    pub fn alternates(&self) -> bool {
        use crate::llm::Role;
        let mut it = self.conversation.iter();
        if it.next().map(|m| m.role) != Some(Role::System) {
            return false;
        }
        it.enumerate().all(|(i, m)| {
            m.role
                == if i % 2 == 0 {
                    Role::User
                } else {
                    Role::Assistant
                }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub broadcast: String,
    pub directive: Option<Directive>,
    pub anomaly_flags: Vec<String>,
}

fn activity_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^\W*activity\W*:\s*(.+?)\s*$").expect("valid regex"))
}

fn target_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^\W*target\W*:\s*\(\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*\)").expect("valid regex")
    })
}

/// Splits a robot reply into the text to broadcast, an optional directive,
/// and the lines that report anomalies.
pub fn parse_robot_response(text: &str) -> ParsedResponse {
    let mut activity_name: Option<String> = None;
    let mut target = None;
    let mut anomaly_flags = Vec::new();

    for line in text.lines() {
        if activity_name.is_none() {
            if let Some(c) = activity_regex().captures(line) {
                activity_name = Some(c[1].trim_matches('*').trim().to_string());
            }
        }
        if target.is_none() {
            if let Some(c) = target_regex().captures(line) {
                if let (Ok(x), Ok(y)) = (c[1].parse::<f64>(), c[2].parse::<f64>()) {
                    target = Some((x, y));
                }
            }
        }
        let lower = line.to_lowercase();
        if ANOMALY_MARKERS.iter().any(|m| lower.contains(m)) {
            anomaly_flags.push(line.trim().to_string());
        }
    }

    let directive = activity_name.and_then(|name| match Activity::from_name(&name) {
        Some(Activity::TargetedNavigation) => target.map(|(x, y)| Directive::navigate(x, y)),
        Some(activity) => Some(Directive { activity, target: None }),
        None => {
            anomaly_flags.push(format!("unknown activity '{name}'"));
            None
        }
    });

    ParsedResponse {
        broadcast: text.to_string(),
        directive,
        anomaly_flags,
    }
}

/// One tick of a directive. Returns the command and whether the directive
/// is finished.
pub fn apply_directive_tick<R: Rng + ?Sized>(
    directive: &Directive,
    pose: &Pose,
    runtime: &mut ControllerRuntime,
    rng: &mut R,
    params: &KinematicsParams,
) -> (WheelCommand, bool) {
    match directive.activity {
        Activity::Stop => (WheelCommand::ZERO, true),
        Activity::RandomWalk => (random_walk_step(runtime, rng, params), false),
        Activity::TargetedNavigation => match directive.target {
            Some((x, y)) if pose.distance_to(x, y) > TARGET_TOLERANCE => (steer_toward(pose, x, y, params), false),
            _ => (WheelCommand::ZERO, true),
        },
    }
}

pub fn inject_anomaly(sim: &mut SimState, spec: &AnomalySpec) -> Result<(), SimError> {
    match *spec {
        AnomalySpec::DisableWheelsAll => {
            for r in &mut sim.robots {
                r.wheels_enabled = false;
            }
        }
        AnomalySpec::SensorStuck { robot, kind } => {
            sim.robot_mut(robot)?.sensor_stuck = Some(kind);
        }
        AnomalySpec::PlaceInjured { x, y } => {
            sim.grid.set_kind_at(x, y, CellKind::InjuredPerson)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::sim::{integrate, Arena, FloorGrid};

    #[test]
    fn parses_navigation_directive() {
        let p = parse_robot_response("ACTIVITY: TARGETED NAVIGATION\nTARGET: (5.0, 7.0)");
        assert_eq!(p.directive, Some(Directive::navigate(5.0, 7.0)));
        assert_eq!(p.broadcast, "ACTIVITY: TARGETED NAVIGATION\nTARGET: (5.0, 7.0)");
    }

    #[test]
    fn lower_case_stop() {
        assert_eq!(parse_robot_response("activity: stop").directive, Some(Directive::stop()));
        assert_eq!(
            parse_robot_response("**Activity:** random_walk").directive,
            Some(Directive::random_walk())
        );
    }

    #[test]
    fn prose_has_no_directive() {
        let text = "We agree that there are more crops than weeds.";
        let p = parse_robot_response(text);
        assert_eq!(p.directive, None);
        assert_eq!(p.broadcast, text);
        assert!(p.anomaly_flags.is_empty());
    }

    #[test]
    fn unknown_activity_is_flagged() {
        let p = parse_robot_response("ACTIVITY: DANCE");
        assert_eq!(p.directive, None);
        assert_eq!(p.anomaly_flags, vec!["unknown activity 'DANCE'"]);
    }

    #[test]
    fn navigation_without_target_is_dropped() {
        assert_eq!(parse_robot_response("ACTIVITY: TARGETED NAVIGATION").directive, None);
    }

    #[test]
    fn collects_anomaly_lines() {
        let p = parse_robot_response("all fine\nPossible issue with movement or sensor readings.\nbye");
        assert_eq!(p.anomaly_flags, vec!["Possible issue with movement or sensor readings."]);
    }

    #[test]
    fn directive_display_round_trips() {
        let d = Directive::navigate(5.0, 7.0);
        assert_eq!(parse_robot_response(&d.to_string()).directive, Some(d));
    }

    #[test]
    fn stop_is_done_at_once() {
        let mut rt = ControllerRuntime::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = apply_directive_tick(
            &Directive::stop(),
            &Pose::default(),
            &mut rt,
            &mut rng,
            &KinematicsParams::default(),
        );
        assert_eq!(out, (WheelCommand::ZERO, true));
    }

    #[test]
    fn target_at_pose_is_done() {
        let mut rt = ControllerRuntime::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pose = Pose::new(0.3, 0.4, 1.0);
        let (_, done) = apply_directive_tick(
            &Directive::navigate(0.3, 0.4),
            &pose,
            &mut rt,
            &mut rng,
            &KinematicsParams::default(),
        );
        assert!(done);
    }

    #[test]
    fn navigation_closes_distance_after_alignment() {
        let params = KinematicsParams::default();
        let arena = Arena {
            min_x: 0.0,
            min_y: 0.0,
            max_x: 10.0,
            max_y: 10.0,
        };
        let d = Directive::navigate(5.0, 7.0);
        let mut pose = Pose::new(0.0, 0.0, 0.0);
        let mut rt = ControllerRuntime::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut aligned = false;
        let mut last = pose.distance_to(5.0, 7.0);
        for _ in 0..2000 {
            let (cmd, done) = apply_directive_tick(&d, &pose, &mut rt, &mut rng, &params);
            if done {
                assert!(pose.distance_to(5.0, 7.0) <= TARGET_TOLERANCE);
                return;
            }
            aligned |= cmd.left > 0.0 && cmd.right > 0.0;
            pose = integrate(pose, cmd, &params, &arena).0;
            let now = pose.distance_to(5.0, 7.0);
            if aligned {
                assert!(now < last, "distance grew from {last} to {now}");
            }
            last = now;
        }
        panic!("target not reached");
    }

    #[test]
    fn anomalies_mutate_world() {
        let grid = FloorGrid::uniform(8, 8, 0.25, CellKind::Crops).unwrap();
        let mut sim = SimState::new(
            grid,
            KinematicsParams::default(),
            &[Pose::default(), Pose::new(0.5, 0.5, 0.0)],
            1,
        )
        .unwrap();
        inject_anomaly(&mut sim, &AnomalySpec::DisableWheelsAll).unwrap();
        assert!(sim.robots.iter().all(|r| !r.wheels_enabled));
        inject_anomaly(&mut sim, &AnomalySpec::PlaceInjured { x: 0.23, y: -0.12 }).unwrap();
        assert_eq!(sim.grid.kind_at(0.23, -0.12).unwrap(), CellKind::InjuredPerson);
        assert_eq!(
            inject_anomaly(
                &mut sim,
                &AnomalySpec::SensorStuck {
                    robot: 9,
                    kind: CellKind::Weeds
                }
            ),
            Err(SimError::NotFound(9))
        );
    }

    #[test]
    fn anomaly_spec_serde_shape() {
        let a = AnomalySpec::SensorStuck {
            robot: 3,
            kind: CellKind::Weeds,
        };
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, r#"{"type":"sensor_stuck","robot":3,"kind":"weeds"}"#);
        assert_eq!(serde_json::from_str::<AnomalySpec>(&json).unwrap(), a);
    }
}
