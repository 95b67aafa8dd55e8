//! Line-delimited JSON transcript. Every record is flushed as soon as it is
//! written, so a crashed run leaves a readable prefix.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::sim::RobotId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Prompt,
    Response,
    Broadcast,
    Directive,
    Anomaly,
    Diagnostic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub seq: u64,
    pub tick: u64,
    pub kind: RecordKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robot: Option<RobotId>,
    /// Discussion round the record belongs to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub round: Option<u32>,
    /// `inform` or `instruct` for operator exchanges.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<String>,
    pub payload: String,
}

pub type RecordObserver = Box<dyn FnMut(&TranscriptRecord) + Send>;

/// In-memory transcript with an optional file sink and observer.
#[derive(Default)]
pub struct Transcript {
    records: Vec<TranscriptRecord>,
    sink: Option<File>,
    observer: Option<RecordObserver>,
}

impl std::fmt::Debug for Transcript {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transcript")
            .field("records", &self.records.len())
            .field("sink", &self.sink.is_some())
            .finish()
    }
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    /// Truncates `path` and appends every subsequent record to it.
    pub fn to_file(path: &Path) -> std::io::Result<Self> {
        Ok(Self {
            sink: Some(File::create(path)?),
            ..Self::default()
        })
    }

    pub fn set_observer(&mut self, observer: RecordObserver) {
        self.observer = Some(observer);
    }

    pub fn push(
        &mut self,
        tick: u64,
        kind: RecordKind,
        robot: Option<RobotId>,
        round: Option<u32>,
        payload: impl Into<String>,
    ) -> &TranscriptRecord {
        self.push_channel(tick, kind, robot, round, None, payload)
    }

    pub fn push_channel(
        &mut self,
        tick: u64,
        kind: RecordKind,
        robot: Option<RobotId>,
        round: Option<u32>,
        channel: Option<&str>,
        payload: impl Into<String>,
    ) -> &TranscriptRecord {
        let record = TranscriptRecord {
            seq: self.records.len() as u64,
            tick,
            kind,
            robot,
            round,
            channel: channel.map(str::to_string),
            payload: payload.into(),
        };
        if let Some(sink) = &mut self.sink {
            let line = serde_json::to_string(&record).expect("records serialize");
            if let Err(e) = writeln!(sink, "{line}").and_then(|_| sink.flush()) {
                tracing::error!(error = %e, "transcript write failed; continuing in memory");
                self.sink = None;
            }
        }
        if let Some(obs) = &mut self.observer {
            obs(&record);
        }
        self.records.push(record);
        self.records.last().expect("just pushed")
    }

    pub fn records(&self) -> &[TranscriptRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<TranscriptRecord> {
        self.records
    }
}

pub fn read_transcript(path: &Path) -> std::io::Result<Vec<TranscriptRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1))
        })?;
        out.push(rec);
    }
    Ok(out)
}
