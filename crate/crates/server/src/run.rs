use std::path::PathBuf;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tokio::sync::{broadcast, oneshot, watch};
use tracing::{info, warn};

use swarmchat_core::llm::LlmClient;
use swarmchat_core::operator::{self, InformReply, InstructReply, OperatorError, SwarmSnapshot};
use swarmchat_core::scenario::{Engine, Scenario, ScenarioError, Transcript, TranscriptRecord, TRANSCRIPT_FILE};

const EVENT_CAPACITY: usize = 1024;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

/// Everything pushed over `/runs/<id>/stream`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "data", rename_all = "snake_case")]
pub enum StreamEvent {
    Snapshot(SwarmSnapshot),
    Record(TranscriptRecord),
    InformReply(InformReply),
    InstructReply(InstructReply),
    Error(ErrorBody),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error("run is no longer active")]
    Stopped,
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Wall-clock pause after each tick.
    pub tick_interval: Duration,
    pub start_paused: bool,
    /// Transcript and artifacts go here when set.
    pub out_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            tick_interval: Duration::from_millis(100),
            start_paused: false,
            out_dir: None,
        }
    }
}

enum Command {
    Inform(String, oneshot::Sender<Result<InformReply, OperatorError>>),
    Instruct(String, oneshot::Sender<Result<InstructReply, OperatorError>>),
    Pause(bool, oneshot::Sender<SwarmSnapshot>),
}

/// Handle to a run stepping on its own thread. Cloning is cheap; the run
/// stops once every handle is dropped.
#[derive(Debug, Clone)]
pub struct RunHandle {
    id: String,
    commands: mpsc::Sender<Command>,
    snapshot: watch::Receiver<SwarmSnapshot>,
    events: broadcast::Sender<StreamEvent>,
}

impl std::fmt::Debug for Command {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Command::Inform(..) => "Inform",
            Command::Instruct(..) => "Instruct",
            Command::Pause(..) => "Pause",
        })
    }
}

impl RunHandle {
    pub fn spawn(id: impl Into<String>, scenario: Scenario, client: LlmClient, options: RunOptions) -> Result<Self, ScenarioError> {
        let id = id.into();
        let (events, _) = broadcast::channel(EVENT_CAPACITY);
        let mut transcript = match &options.out_dir {
            Some(dir) => {
                let io = |e: std::io::Error| ScenarioError::Resolve {
                    what: "output",
                    path: dir.display().to_string(),
                    message: e.to_string(),
                };
                std::fs::create_dir_all(dir).map_err(io)?;
                Transcript::to_file(&dir.join(TRANSCRIPT_FILE)).map_err(io)?
            }
            None => Transcript::new(),
        };
        let sink = events.clone();
        transcript.set_observer(Box::new(move |r| {
            let _ = sink.send(StreamEvent::Record(r.clone()));
        }));
        let engine = Engine::with_transcript(&scenario, client, transcript);
        let (snap_tx, snapshot) = watch::channel(operator::snapshot(&engine, options.start_paused));
        let (commands, rx) = mpsc::channel();
        let worker = Worker {
            engine,
            paused: options.start_paused,
            options,
            commands: rx,
            snapshot: snap_tx,
            events: events.clone(),
            artifacts_written: false,
        };
        let name = format!("run-{id}");
        thread::Builder::new()
            .name(name)
            .spawn(move || worker.run())
            .map_err(|e| ScenarioError::Invalid {
                field: "run".into(),
                message: e.to_string(),
            })?;
        Ok(Self {
            id,
            commands,
            snapshot,
            events,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn snapshot(&self) -> SwarmSnapshot {
        self.snapshot.borrow().clone()
    }

    pub fn watch(&self) -> watch::Receiver<SwarmSnapshot> {
        self.snapshot.clone()
    }

    pub fn subscribe(&self) -> broadcast::Receiver<StreamEvent> {
        self.events.subscribe()
    }

    async fn request<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Command) -> Result<T, RunError> {
        let (tx, rx) = oneshot::channel();
        self.commands.send(make(tx)).map_err(|_| RunError::Stopped)?;
        rx.await.map_err(|_| RunError::Stopped)
    }

    pub async fn inform(&self, text: &str) -> Result<InformReply, RunError> {
        Ok(self.request(|tx| Command::Inform(text.to_string(), tx)).await??)
    }

    pub async fn instruct(&self, text: &str) -> Result<InstructReply, RunError> {
        Ok(self.request(|tx| Command::Instruct(text.to_string(), tx)).await??)
    }

    pub async fn set_paused(&self, paused: bool) -> Result<SwarmSnapshot, RunError> {
        self.request(|tx| Command::Pause(paused, tx)).await
    }
}

struct Worker {
    engine: Engine,
    paused: bool,
    options: RunOptions,
    commands: mpsc::Receiver<Command>,
    snapshot: watch::Sender<SwarmSnapshot>,
    events: broadcast::Sender<StreamEvent>,
    artifacts_written: bool,
}

impl Worker {
    fn run(mut self) {
        info!(paused = self.paused, "run started");
        loop {
            let idle = self.paused || self.engine.is_finished();
            let next = if idle {
                match self.commands.recv() {
                    Ok(c) => Some(c),
                    Err(_) => break,
                }
            } else {
                match self.commands.try_recv() {
                    Ok(c) => Some(c),
                    Err(mpsc::TryRecvError::Empty) => None,
                    Err(mpsc::TryRecvError::Disconnected) => break,
                }
            };
            match next {
                Some(cmd) => self.handle(cmd),
                None => {
                    self.engine.step();
                    self.publish();
                    if self.engine.is_finished() {
                        self.finish();
                    } else if !self.options.tick_interval.is_zero() {
                        thread::sleep(self.options.tick_interval);
                    }
                }
            }
        }
        info!(tick = self.engine.sim().tick, "run stopped");
    }

    fn handle(&mut self, cmd: Command) {
        match cmd {
            Command::Inform(text, reply) => {
                let r = operator::inform(&mut self.engine, &text);
                self.publish();
                let _ = reply.send(r);
            }
            Command::Instruct(text, reply) => {
                let r = operator::instruct(&mut self.engine, &text);
                self.publish();
                let _ = reply.send(r);
            }
            Command::Pause(paused, reply) => {
                self.paused = paused;
                self.publish();
                let _ = reply.send(operator::snapshot(&self.engine, paused));
            }
        }
    }

    fn publish(&self) {
        let snap = operator::snapshot(&self.engine, self.paused);
        let _ = self.events.send(StreamEvent::Snapshot(snap.clone()));
        self.snapshot.send_replace(snap);
    }

    fn finish(&mut self) {
        if self.artifacts_written {
            return;
        }
        self.artifacts_written = true;
        if let Some(dir) = &self.options.out_dir {
            match self.engine.write_artifacts(dir) {
                Ok(m) => info!(majority_correct = m.majority_correct, "run finished"),
                Err(e) => warn!(error = %e, "writing run artifacts failed"),
            }
        }
    }
}
