use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::transcript::{RecordKind, TranscriptRecord};
use crate::direct::{parse_robot_response, AnomalyKind, AnomalySpec};
use crate::sim::{CellCounts, FloorGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Majority {
    Crops,
    Weeds,
    Equal,
}

impl Majority {
    pub fn of_counts(crops: usize, weeds: usize) -> Self {
        match crops.cmp(&weeds) {
            std::cmp::Ordering::Greater => Majority::Crops,
            std::cmp::Ordering::Less => Majority::Weeds,
            std::cmp::Ordering::Equal => Majority::Equal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub majority_truth: Majority,
    pub majority_reported: Option<Majority>,
    pub majority_correct: bool,
    /// One entry per anomaly kind injected in the run.
    pub anomaly_detected: BTreeMap<AnomalyKind, bool>,
    /// (tick, mean distance to the swarm centroid).
    pub aggregation: Vec<(u64, f64)>,
    pub rounds_executed: u32,
    pub failures: usize,
}

impl RunMetrics {
    /// Mean centroid distance at `tick`, if sampled.
    pub fn spread_at(&self, tick: u64) -> Option<f64> {
        self.aggregation.iter().find(|(t, _)| *t == tick).map(|(_, d)| *d)
    }
}

pub fn majority_truth(counts: &CellCounts) -> Majority {
    Majority::of_counts(counts.crops, counts.weeds)
}

fn majority_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bmore crops\b|\bmore weeds\b|\bequal\b").expect("valid regex"))
}

/// Last majority phrase across all texts, in order.
pub fn last_majority_phrase<'a>(texts: impl IntoIterator<Item = &'a str>) -> Option<Majority> {
    let mut last = None;
    for text in texts {
        for m in majority_regex().find_iter(text) {
            last = Some(match m.as_str().to_lowercase().as_str() {
                "more crops" => Majority::Crops,
                "more weeds" => Majority::Weeds,
                _ => Majority::Equal,
            });
        }
    }
    last
}

fn names_robot(line: &str, robot: u32) -> bool {
    // "Robot 3", "Robots 1 and 3", "Robots 1, 3 and 4"
    let re = Regex::new(&format!(r"\bRobots?\s+(?:\d+\s*(?:,|and)\s*)*{robot}\b")).expect("valid regex");
    re.is_match(line)
}

/// Whether one broadcast's anomaly lines report `spec`.
pub fn reports_anomaly(flags: &[String], spec: &AnomalySpec) -> bool {
    flags.iter().any(|line| {
        let lower = line.to_lowercase();
        match spec {
            AnomalySpec::DisableWheelsAll => lower.contains("issue with movement"),
            AnomalySpec::SensorStuck { robot, .. } => lower.contains("discrepancy") && names_robot(line, *robot),
            AnomalySpec::PlaceInjured { .. } => lower.contains("injured"),
        }
    })
}

/// Computes run metrics from the final floor, the transcript, and the
/// sampled centroid spread.
pub fn evaluate_metrics(
    grid: &FloorGrid,
    records: &[TranscriptRecord],
    anomalies: &[AnomalySpec],
    aggregation: Vec<(u64, f64)>,
) -> RunMetrics {
    let truth = majority_truth(&grid.counts());
    let broadcasts: Vec<&TranscriptRecord> = records.iter().filter(|r| r.kind == RecordKind::Broadcast).collect();
    let reported = last_majority_phrase(broadcasts.iter().map(|r| r.payload.as_str()));
    let flags: Vec<Vec<String>> = broadcasts
        .iter()
        .map(|r| parse_robot_response(&r.payload).anomaly_flags)
        .collect();

    let mut anomaly_detected = BTreeMap::new();
    for spec in anomalies {
        let hit = flags.iter().any(|f| reports_anomaly(f, spec));
        let entry = anomaly_detected.entry(spec.kind()).or_insert(false);
        *entry |= hit;
    }

    let mut rounds: Vec<u32> = records
        .iter()
        .filter(|r| r.kind == RecordKind::Prompt && r.channel.is_none())
        .filter_map(|r| r.round)
        .collect();
    rounds.dedup();
    let failures = records
        .iter()
        .filter(|r| r.kind == RecordKind::Diagnostic && r.payload.starts_with("backend:"))
        .count();

    RunMetrics {
        majority_truth: truth,
        majority_reported: reported,
        majority_correct: reported == Some(truth),
        anomaly_detected,
        aggregation,
        rounds_executed: rounds.len() as u32,
        failures,
    }
}

/// Anomalies recorded in a transcript.
pub fn anomalies_in(records: &[TranscriptRecord]) -> Vec<AnomalySpec> {
    records
        .iter()
        .filter(|r| r.kind == RecordKind::Anomaly)
        .filter_map(|r| serde_json::from_str(&r.payload).ok())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::CellKind;

    fn broadcast(seq: u64, text: &str) -> TranscriptRecord {
        TranscriptRecord {
            seq,
            tick: 100,
            kind: RecordKind::Broadcast,
            robot: Some(1),
            round: Some(1),
            channel: None,
            payload: text.into(),
        }
    }

    #[test]
    fn truth_follows_counts() {
        let grid = FloorGrid::generate(10, 10, 0.2, 0.7, 1).unwrap();
        assert_eq!(majority_truth(&grid.counts()), Majority::Crops);
        let grid = FloorGrid::generate(10, 10, 0.2, 0.5, 1).unwrap();
        assert_eq!(majority_truth(&grid.counts()), Majority::Equal);
    }

    #[test]
    fn no_broadcasts_means_no_report() {
        let grid = FloorGrid::uniform(2, 2, 1.0, CellKind::Crops).unwrap();
        let m = evaluate_metrics(&grid, &[], &[], Vec::new());
        assert_eq!(m.majority_reported, None);
        assert!(!m.majority_correct);
    }

    #[test]
    fn last_phrase_wins() {
        let recs = [broadcast(0, "there are more weeds"), broadcast(1, "no, more crops. Not equally split")];
        let grid = FloorGrid::uniform(2, 2, 1.0, CellKind::Crops).unwrap();
        let m = evaluate_metrics(&grid, &recs, &[], Vec::new());
        assert_eq!(m.majority_reported, Some(Majority::Crops));
        assert!(m.majority_correct);
    }

    #[test]
    fn stuck_robot_must_be_named() {
        let spec = AnomalySpec::SensorStuck {
            robot: 3,
            kind: CellKind::Weeds,
        };
        let yes = parse_robot_response("Robots 1 and 3 disagree; discrepancy found").anomaly_flags;
        let no = parse_robot_response("Robot 13 shows a discrepancy").anomaly_flags;
        assert!(reports_anomaly(&yes, &spec));
        assert!(!reports_anomaly(&no, &spec));
    }
}
