//! Declarative scenarios, the run loop, metrics and transcripts.

mod config;
mod engine;
mod metrics;
mod transcript;

pub use config::{
    load_scenario, parse_scenario, ArenaConfig, ControllerConfig, GridConfig, Scenario, ScenarioConfig, ScenarioError,
    ScheduledAnomaly, SpreadCheck, DEFAULT_CONTROLLER,
};
pub use engine::{
    directive_payload, metrics_from_transcript, run_scenario, Engine, StepReport, AGGREGATION_FILE, GRID_FILE,
    METRICS_FILE, TRANSCRIPT_FILE,
};
pub use metrics::{
    anomalies_in, evaluate_metrics, last_majority_phrase, majority_truth, reports_anomaly, Majority, RunMetrics,
};
pub use transcript::{read_transcript, RecordKind, RecordObserver, Transcript, TranscriptRecord};
