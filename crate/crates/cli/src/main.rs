use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use tracing::info;
use tracing_subscriber::EnvFilter;

use swarmchat_core::llm::{EndpointConfig, LlmClient};
use swarmchat_core::scenario::{load_scenario, metrics_from_transcript, run_scenario, Scenario};
use swarmchat_core::synthesis::{load_request, run_synthesis_loop, Expectation, LogicCheck, DEFAULT_MAX_ITERATIONS};
use swarmchat_server::{serve, Registry, RunHandle, RunOptions};

#[derive(Parser)]
#[command(name = "swarmchat", version, about = "Robot swarm simulator driven by language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a controller and validate it.
    Synthesize {
        #[arg(long)]
        request: PathBuf,
        /// `oracle` or a path to an endpoint profile.
        #[arg(long)]
        endpoint: String,
        #[arg(long = "max-iters", default_value_t = DEFAULT_MAX_ITERATIONS)]
        max_iters: u32,
        /// Scenario whose `[[expect]]` checks the candidate must satisfy.
        #[arg(long = "logic-scenario")]
        logic_scenario: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// One JSON object per attempt.
        #[arg(long = "attempts-log")]
        attempts_log: PathBuf,
    },
    /// Run a scenario to completion and write its artifacts.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's own endpoint.
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recompute metrics from a transcript and the files next to it.
    Metrics { transcript: PathBuf },
    /// Serve a live run to an operator over HTTP.
    Serve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long = "tick-ms", default_value_t = 100)]
        tick_ms: u64,
        #[arg(long = "out-dir")]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Start paused; resume with `POST /runs/<id>/resume`.
        #[arg(long)]
        paused: bool,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Synthesize {
            request,
            endpoint,
            max_iters,
            logic_scenario,
            out,
            attempts_log,
        } => synthesize(&request, &endpoint, max_iters, logic_scenario.as_deref(), &out, &attempts_log),
        Command::Run {
            scenario,
            endpoint,
            out_dir,
            seed,
        } => {
            let scenario = scenario_with_seed(&scenario, seed)?;
            let client = client_for(&scenario, endpoint.as_deref())?;
            let (metrics, _) = run_scenario(&scenario, client, Some(&out_dir))?;
            print_json(&metrics)
        }
        Command::Metrics { transcript } => {
            let metrics = metrics_from_transcript(&transcript)?;
            print_json(&metrics)
        }
        Command::Serve {
            scenario,
            endpoint,
            addr,
            tick_ms,
            out_dir,
            seed,
            paused,
        } => {
            let scenario = scenario_with_seed(&scenario, seed)?;
            let client = client_for(&scenario, endpoint.as_deref())?;
            let options = RunOptions {
                tick_interval: Duration::from_millis(tick_ms),
                start_paused: paused,
                out_dir,
            };
            let id = scenario.config.name.clone();
            let run = RunHandle::spawn(id.clone(), scenario, client, options)?;
            let registry = Registry::new();
            registry.insert(run);
            tokio::runtime::Runtime::new()?.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&addr)
                    .await
                    .with_context(|| format!("binding {addr}"))?;
                let local = listener.local_addr()?;
                println!("serving run '{id}' on http://{local}");
                info!(%local, run = %id, "operator service up");
                serve(listener, registry).await?;
                Ok(ExitCode::SUCCESS)
            })
        }
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<ExitCode> {
    let text = serde_json::to_string_pretty(value)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(ExitCode::SUCCESS),
    }
}

fn scenario_with_seed(path: &Path, seed: Option<u64>) -> Result<Scenario> {
    let scenario = load_scenario(path)?;
    Ok(match seed {
        Some(s) => scenario.with_seed(s)?,
        None => scenario,
    })
}

fn client_for(scenario: &Scenario, endpoint: Option<&str>) -> Result<LlmClient> {
    let cfg = match endpoint {
        Some(p) => EndpointConfig::resolve(p)?,
        None => scenario.endpoint()?,
    };
    Ok(LlmClient::new(cfg)?)
}

fn synthesize(
    request: &Path,
    endpoint: &str,
    max_iters: u32,
    logic_scenario: Option<&Path>,
    out: &Path,
    attempts_log: &Path,
) -> Result<ExitCode> {
    let request = load_request(request).map_err(|e| anyhow!(e))?;
    let client = LlmClient::new(EndpointConfig::resolve(endpoint)?)?;
    let logic = match logic_scenario {
        Some(p) => {
            let scenario = load_scenario(p)?;
            if scenario.config.expect.is_empty() {
                return Err(anyhow!("{} has no [[expect]] checks", p.display()));
            }
            Some(LogicCheck {
                expectation: Expectation::from_scenario(&scenario),
                scenario,
            })
        }
        None => None,
    };
    let outcome = run_synthesis_loop(&request, &client, logic.as_ref(), max_iters).map_err(|e| anyhow!(e))?;

    let mut log = BufWriter::new(File::create(attempts_log).with_context(|| attempts_log.display().to_string())?);
    for attempt in &outcome.attempts {
        writeln!(log, "{}", serde_json::to_string(attempt)?)?;
    }
    log.flush()?;

    match (&outcome.source, outcome.failure_report()) {
        (Some(source), _) => {
            std::fs::write(out, format!("{}\n", source.trim_end())).with_context(|| out.display().to_string())?;
            println!(
                "accepted after {} attempt(s); wrote {}",
                outcome.attempts.len(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        (None, report) => {
            eprintln!("{}", report.unwrap_or_default());
            Ok(ExitCode::FAILURE)
        }
    }
}
