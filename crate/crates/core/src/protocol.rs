//! Text conventions shared by the robot prompt builder, the response parser,
//! and the oracle backend.

use std::sync::OnceLock;

use regex::Regex;

use crate::sim::{CellKind, RobotId};

pub const SENSOR_HEADER: &str = "Your current array of sensor readings:";
pub const HISTORY_HEADER: &str = "History of inter-robot messages (sent and received):";
/// Phrase that opens an Inform request from the operator.
pub const INFORM_MARKER: &str = "communication request from the human operator";
pub const INFORM_HEADER: &str = "Current State of the Swarm";

/// Phrases that mark a response line as reporting an anomaly.
pub const ANOMALY_MARKERS: &[&str] = &[
    "issue with movement",
    "sensor readings",
    "discrepancy",
    "injured",
    "immediate attention",
];

pub const MAJORITY_CROPS: &str = "more crops";
pub const MAJORITY_WEEDS: &str = "more weeds";
pub const MAJORITY_EQUAL: &str = "equal";

/// Two-decimal coordinate without a negative zero.
pub fn coord(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

pub fn point(x: f64, y: f64) -> String {
    format!("({}, {})", coord(x), coord(y))
}

pub fn tuple(kind: CellKind, x: f64, y: f64) -> String {
    format!("({}, {}, {})", kind.label(), coord(x), coord(y))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Observations {
    pub crops: usize,
    pub weeds: usize,
    pub injured: usize,
}

impl Observations {
    pub fn add(&mut self, kind: CellKind) {
        match kind {
            CellKind::Crops => self.crops += 1,
            CellKind::Weeds => self.weeds += 1,
            CellKind::InjuredPerson => self.injured += 1,
        }
    }
}

pub fn observation_line(robot: RobotId, obs: &Observations) -> String {
    format!(
        "Robot {robot} observations: crops={}, weeds={}, injured={}.",
        obs.crops, obs.weeds, obs.injured
    )
}

macro_rules! cached_regex {
    ($name:ident, $re:expr) => {
        pub fn $name() -> &'static Regex {
            static RE: OnceLock<Regex> = OnceLock::new();
            RE.get_or_init(|| Regex::new($re).expect("valid regex"))
        }
    };
}

cached_regex!(
    tuple_regex,
    r"(?i)\(\s*(crops|weeds|injured[ _]person)\s*,\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*\)"
);
cached_regex!(
    observation_regex,
    r"Robot (\d+) observations: crops=(\d+), weeds=(\d+)(?:, injured=(\d+))?"
);
cached_regex!(robot_id_regex, r"You are Robot (\d+)");
cached_regex!(swarm_size_regex, r"in a swarm of (\d+) robots");
cached_regex!(point_regex, r"\(\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*\)");
