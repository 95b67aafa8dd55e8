use std::io::Write;
use std::path::Path;

use serde_json::json;

use super::config::{Scenario, ScenarioError, ScheduledAnomaly};
use super::metrics::{anomalies_in, evaluate_metrics, RunMetrics};
use super::transcript::{read_transcript, RecordKind, Transcript, TranscriptRecord};
use crate::direct::{
    inject_anomaly, run_discussion_round, AnomalySpec, Directive, DiscussionConfig, RobotAgentState, RoundOutcome,
};
use crate::llm::LlmClient;
use crate::sim::{FloorGrid, RobotId, SimState, TickEvent};

pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const GRID_FILE: &str = "grid.map";
pub const AGGREGATION_FILE: &str = "aggregation.csv";
pub const METRICS_FILE: &str = "metrics.json";

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub tick: u64,
    pub round: Option<RoundOutcome>,
}

/// A running scenario: ticks interleaved with discussion rounds.
#[derive(Debug)]
pub struct Engine {
    scenario: Scenario,
    sim: SimState,
    agents: Vec<RobotAgentState>,
    client: LlmClient,
    discussion: DiscussionConfig,
    transcript: Transcript,
    round: u32,
    round_ticks: u64,
    schedule: Vec<ScheduledAnomaly>,
    applied: Vec<AnomalySpec>,
    aggregation: Vec<(u64, f64)>,
}

pub fn directive_payload(status: &str, directive: &Directive) -> String {
    json!({ "status": status, "directive": directive }).to_string()
}

impl Engine {
    pub fn new(scenario: &Scenario, client: LlmClient) -> Self {
        Self::with_transcript(scenario, client, Transcript::new())
    }

    pub fn with_transcript(scenario: &Scenario, client: LlmClient, transcript: Transcript) -> Self {
        let sim = scenario.initial_state();
        let n = sim.robots.len();
        let agents = sim
            .robots
            .iter()
            .map(|r| RobotAgentState::new(r.id, scenario.template.system_message(r.id, n)))
            .collect();
        let mut schedule = scenario.config.anomalies.clone();
        schedule.sort_by_key(|a| a.at_tick);
        let mut engine = Self {
            discussion: DiscussionConfig {
                radius: scenario.config.radius,
                template: scenario.template.clone(),
                history_rounds: scenario.config.history_rounds,
            },
            round_ticks: scenario.config.round_ticks(),
            scenario: scenario.clone(),
            sim,
            agents,
            client,
            transcript,
            round: 0,
            schedule,
            applied: Vec::new(),
            aggregation: Vec::new(),
        };
        engine.apply_due_anomalies();
        engine.aggregation.push((0, engine.sim.centroid_spread()));
        engine
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn sim(&self) -> &SimState {
        &self.sim
    }

    pub fn sim_mut(&mut self) -> &mut SimState {
        &mut self.sim
    }

    pub fn agents(&self) -> &[RobotAgentState] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [RobotAgentState] {
        &mut self.agents
    }

    pub fn client(&self) -> &LlmClient {
        &self.client
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn transcript_mut(&mut self) -> &mut Transcript {
        &mut self.transcript
    }

    pub fn rounds_executed(&self) -> u32 {
        self.round
    }

    pub fn is_finished(&self) -> bool {
        let c = &self.scenario.config;
        self.sim.tick >= c.tick_budget || (c.rounds_max > 0 && self.round >= c.rounds_max)
    }

    fn apply_due_anomalies(&mut self) {
        while let Some(next) = self.schedule.first().copied() {
            if next.at_tick > self.sim.tick {
                break;
            }
            self.schedule.remove(0);
            let payload = serde_json::to_string(&next.spec).expect("anomalies serialize");
            match inject_anomaly(&mut self.sim, &next.spec) {
                Ok(()) => {
                    self.applied.push(next.spec);
                    self.transcript
                        .push(self.sim.tick, RecordKind::Anomaly, None, None, payload);
                }
                Err(e) => {
                    self.transcript.push(
                        self.sim.tick,
                        RecordKind::Diagnostic,
                        None,
                        None,
                        format!("anomaly {payload} not applied: {e}"),
                    );
                }
            }
        }
    }

    /// Advances one tick, then runs a discussion round if one is due.
    pub fn step(&mut self) -> StepReport {
        let events = self.sim.advance_tick(&self.scenario.controllers);
        let tick = self.sim.tick;
        for e in events {
            match e {
                TickEvent::ControllerError { robot, message } => {
                    self.transcript.push(
                        tick,
                        RecordKind::Diagnostic,
                        Some(robot),
                        None,
                        format!("controller halted: {message}"),
                    );
                }
                TickEvent::DirectiveCompleted { robot, directive } => {
                    self.transcript.push(
                        tick,
                        RecordKind::Directive,
                        Some(robot),
                        None,
                        directive_payload("completed", &directive),
                    );
                }
            }
        }
        self.aggregation.push((tick, self.sim.centroid_spread()));

        let c = &self.scenario.config;
        let round = if c.rounds_max > 0 && self.round < c.rounds_max && tick.is_multiple_of(self.round_ticks) {
            Some(self.discussion_round())
        } else {
            None
        };
        self.apply_due_anomalies();
        StepReport { tick, round }
    }

    fn discussion_round(&mut self) -> RoundOutcome {
        self.round += 1;
        let round = self.round;
        let tick = self.sim.tick;
        let outcome = run_discussion_round(&mut self.sim, &mut self.agents, &self.discussion, &self.client, round);
        for ex in &outcome.exchanges {
            let r = Some(ex.robot);
            self.transcript
                .push(tick, RecordKind::Prompt, r, Some(round), ex.prompt.clone());
            match (&ex.response, &ex.error) {
                (Some(text), _) => {
                    self.transcript
                        .push(tick, RecordKind::Response, r, Some(round), text.clone());
                    if ex.truncated {
                        self.transcript
                            .push(tick, RecordKind::Diagnostic, r, Some(round), "response truncated at max_tokens");
                    }
                    if let Some(parsed) = &ex.parsed {
                        self.transcript
                            .push(tick, RecordKind::Broadcast, r, Some(round), parsed.broadcast.clone());
                        if let Some(d) = &parsed.directive {
                            self.transcript.push(
                                tick,
                                RecordKind::Directive,
                                r,
                                Some(round),
                                directive_payload("installed", d),
                            );
                        }
                    }
                }
                (None, err) => {
                    self.transcript.push(
                        tick,
                        RecordKind::Diagnostic,
                        r,
                        Some(round),
                        format!("backend: {}", err.as_deref().unwrap_or("unknown")),
                    );
                }
            }
        }
        outcome
    }

    pub fn run_to_end(&mut self) {
        while !self.is_finished() {
            self.step();
        }
    }

    pub fn aggregation(&self) -> &[(u64, f64)] {
        &self.aggregation
    }

    /// Writes `grid.map`, `aggregation.csv` and `metrics.json` into `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> std::io::Result<RunMetrics> {
        let metrics = self.metrics();
        write_artifacts(dir, &self.sim.grid, &self.aggregation, &metrics)?;
        Ok(metrics)
    }

    pub fn metrics(&self) -> RunMetrics {
        evaluate_metrics(
            &self.sim.grid,
            self.transcript.records(),
            &self.applied,
            self.aggregation.clone(),
        )
    }

    /// Installs a directive on one robot and logs it.
    pub fn install_directive(&mut self, robot: RobotId, directive: Directive, channel: Option<&str>) {
        if let Ok(r) = self.sim.robot_mut(robot) {
            r.directive = Some(directive);
            let tick = self.sim.tick;
            self.transcript.push_channel(
                tick,
                RecordKind::Directive,
                Some(robot),
                None,
                channel,
                directive_payload("installed", &directive),
            );
        }
    }
}

/// Runs a scenario to completion. With `out_dir`, the transcript is
/// streamed to `transcript.jsonl` and the final grid, centroid spread and
/// metrics are written next to it.
pub fn run_scenario(
    scenario: &Scenario,
    client: LlmClient,
    out_dir: Option<&Path>,
) -> Result<(RunMetrics, Vec<TranscriptRecord>), ScenarioError> {
    let io = |path: &Path, e: std::io::Error| ScenarioError::Resolve {
        what: "output",
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let transcript = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
            let p = dir.join(TRANSCRIPT_FILE);
            Transcript::to_file(&p).map_err(|e| io(&p, e))?
        }
        None => Transcript::new(),
    };
    let mut engine = Engine::with_transcript(scenario, client, transcript);
    engine.run_to_end();
    let metrics = engine.metrics();
    if let Some(dir) = out_dir {
        write_artifacts(dir, &engine.sim.grid, engine.aggregation(), &metrics).map_err(|e| io(dir, e))?;
    }
    Ok((metrics, engine.transcript.into_records()))
}

fn write_artifacts(dir: &Path, grid: &FloorGrid, aggregation: &[(u64, f64)], metrics: &RunMetrics) -> std::io::Result<()> {
    std::fs::write(dir.join(GRID_FILE), grid.to_map())?;
    let mut agg = std::fs::File::create(dir.join(AGGREGATION_FILE))?;
    writeln!(agg, "tick,mean_centroid_distance")?;
    for (t, d) in aggregation {
        writeln!(agg, "{t},{d:?}")?;
    }
    let json = serde_json::to_string_pretty(metrics).map_err(std::io::Error::other)?;
    std::fs::write(dir.join(METRICS_FILE), json + "\n")
}

/// Re-evaluates metrics from a transcript file and the `grid.map` and
/// `aggregation.csv` written next to it.
pub fn metrics_from_transcript(path: &Path) -> Result<RunMetrics, ScenarioError> {
    let err = |p: &Path, m: String| ScenarioError::Resolve {
        what: "run output",
        path: p.display().to_string(),
        message: m,
    };
    let records = read_transcript(path).map_err(|e| err(path, e.to_string()))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let grid_path = dir.join(GRID_FILE);
    let grid_text = std::fs::read_to_string(&grid_path).map_err(|e| err(&grid_path, e.to_string()))?;
    let grid = FloorGrid::parse_map(&grid_text).map_err(|e| err(&grid_path, e.to_string()))?;
    let agg_path = dir.join(AGGREGATION_FILE);
    let mut aggregation = Vec::new();
    if let Ok(text) = std::fs::read_to_string(&agg_path) {
        for (i, line) in text.lines().enumerate().skip(1) {
            let parsed = line
                .split_once(',')
                .and_then(|(t, d)| Some((t.trim().parse().ok()?, d.trim().parse().ok()?)));
            match parsed {
                Some(p) => aggregation.push(p),
                None => return Err(err(&agg_path, format!("line {}: expected `tick,distance`", i + 1))),
            }
        }
    }
    let anomalies = anomalies_in(&records);
    Ok(evaluate_metrics(&grid, &records, &anomalies, aggregation))
}
