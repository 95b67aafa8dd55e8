//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

use swarmchat_core::direct::{run_discussion_round, AnomalyKind, Directive, DiscussionConfig, RobotAgentState};
use swarmchat_core::dsl::{parse_program, render_program};
use swarmchat_core::llm::{EndpointConfig, LlmClient};
use swarmchat_core::operator;
use swarmchat_core::par::Parallelism;
use swarmchat_core::scenario::{
    load_scenario, run_scenario, Engine, Majority, RecordKind, Scenario, TranscriptRecord, GRID_FILE, TRANSCRIPT_FILE,
};
use swarmchat_core::sim::{
    integrate, normalize_angle, Arena, CellKind, FloorGrid, KinematicsParams, Pose, Radius, SimState, WheelCommand,
};
use swarmchat_core::synthesis::{
    load_request, run_synthesis_loop, validate_logic_seeds, Expectation, LogicCheck, Stage,
};

type Outcome = Result<String, String>;

fn cases() -> Config {
    Config {
        failure_persistence: None,
        ..Config::with_cases(1000)
    }
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scenario(name: &str) -> Scenario {
    load_scenario(&root().join("scenarios").join(format!("{name}.toml"))).expect("scenario loads")
}

fn oracle() -> LlmClient {
    LlmClient::new(EndpointConfig::oracle()).unwrap()
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn broadcasts(records: &[TranscriptRecord]) -> impl Iterator<Item = &TranscriptRecord> {
    records.iter().filter(|r| r.kind == RecordKind::Broadcast)
}

/// Counts crop and weed cells straight from the `grid.map` text.
fn recount(map: &str) -> (usize, usize) {
    let body = map.lines().skip(1).collect::<String>();
    (body.matches('c').count(), body.matches('w').count())
}

fn c1_determinism() -> Outcome {
    let s = scenario("no_anomalies");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut slowest = Duration::ZERO;
    for d in &dirs {
        let t = Instant::now();
        let (m, _) = run_scenario(&s, oracle(), Some(d.path())).map_err(|e| e.to_string())?;
        slowest = slowest.max(t.elapsed());
        ensure(m.rounds_executed == 5, format!("{} rounds executed", m.rounds_executed))?;
    }
    let a = std::fs::read(dirs[0].path().join(TRANSCRIPT_FILE)).unwrap();
    let b = std::fs::read(dirs[1].path().join(TRANSCRIPT_FILE)).unwrap();
    ensure(!a.is_empty() && a == b, "transcripts differ")?;
    ensure(slowest < Duration::from_secs(10), format!("run took {slowest:?}"))?;
    Ok(format!("{} transcript bytes identical, slowest run {:.2}s", a.len(), slowest.as_secs_f64()))
}

fn c2_majority() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (m, _) = run_scenario(&scenario("no_anomalies"), oracle(), Some(dir.path())).map_err(|e| e.to_string())?;
    let (c, w) = recount(&std::fs::read_to_string(dir.path().join(GRID_FILE)).unwrap());
    ensure(c > w && m.majority_truth == Majority::Crops, format!("recount {c}/{w}, truth {:?}", m.majority_truth))?;
    ensure(m.majority_correct, format!("reported {:?}", m.majority_reported))?;

    let dir = tempfile::tempdir().unwrap();
    let (b, _) = run_scenario(&scenario("balanced_floor"), oracle(), Some(dir.path())).map_err(|e| e.to_string())?;
    let (bc, bw) = recount(&std::fs::read_to_string(dir.path().join(GRID_FILE)).unwrap());
    ensure(bc == bw && b.majority_truth == Majority::Equal, format!("balanced recount {bc}/{bw}"))?;
    Ok(format!("70% grid {c} crops/{w} weeds reported correctly; 50/50 grid {bc}/{bw} is equal"))
}

fn c3_self_diagnosis() -> Outcome {
    let s = scenario("self_diagnosis");
    let mut e = Engine::new(&s, oracle());
    let start: Vec<Pose> = e.sim().robots.iter().map(|r| r.pose).collect();
    while !e.is_finished() {
        e.step();
        let now: Vec<Pose> = e.sim().robots.iter().map(|r| r.pose).collect();
        ensure(now == start, format!("pose changed at tick {}", e.sim().tick))?;
    }
    let m = e.metrics();
    let phrase = broadcasts(e.transcript().records()).any(|r| r.payload.contains("issue with movement or sensor readings"));
    ensure(phrase, "no broadcast mentions the movement issue")?;
    ensure(m.anomaly_detected.get(&AnomalyKind::DisableWheelsAll) == Some(&true), "not detected")?;
    Ok(format!("poses fixed for {} ticks, anomaly reported", e.sim().tick))
}

fn c4_peer_diagnosis() -> Outcome {
    let (m, records) = run_scenario(&scenario("peer_diagnosis"), oracle(), None).map_err(|e| e.to_string())?;
    ensure(m.majority_truth == Majority::Crops, "grid is not crops-majority")?;
    let mut flaggers: Vec<u32> = broadcasts(&records)
        .filter(|r| r.payload.contains("discrepancy") && r.payload.contains("Robot 3 "))
        .filter_map(|r| r.robot)
        .collect();
    flaggers.sort_unstable();
    flaggers.dedup();
    ensure(!flaggers.is_empty(), "no broadcast names robot 3 with a discrepancy")?;
    ensure(m.anomaly_detected.get(&AnomalyKind::SensorStuck) == Some(&true), "not detected")?;
    Ok(format!("robot 3 flagged by robots {flaggers:?}"))
}

fn c5_environmental() -> Outcome {
    let (m, records) = run_scenario(&scenario("environmental_diagnosis"), oracle(), None).map_err(|e| e.to_string())?;
    let hit = broadcasts(&records).find(|r| r.payload.contains("injured person") && r.payload.contains("(0.23, -0.12)"));
    let hit = hit.ok_or("no broadcast reports the injured person at (0.23, -0.12)")?;
    ensure(m.anomaly_detected.get(&AnomalyKind::PlaceInjured) == Some(&true), "not detected")?;
    Ok(format!("robot {} reported it in round {}", hit.robot.unwrap_or(0), hit.round.unwrap_or(0)))
}

fn c6_synthesis_repair() -> Outcome {
    let request = load_request(&root().join("requests/aggregate_disperse.toml"))?;
    let endpoint = root().join("endpoints/synthesis_demo.toml");
    let agg = scenario("aggregation");
    let logic = LogicCheck {
        expectation: Expectation::from_scenario(&agg),
        scenario: agg,
    };
    let client = LlmClient::new(EndpointConfig::load(&endpoint).map_err(|e| e.to_string())?).unwrap();
    let out = run_synthesis_loop(&request, &client, Some(&logic), 5)?;
    ensure(out.accepted(), "not accepted")?;
    ensure(out.attempts.len() == 2, format!("{} attempts", out.attempts.len()))?;
    let (first, second) = (&out.attempts[0], &out.attempts[1]);
    ensure(first.stage_reached == Stage::Syntax && !first.diagnostics.is_empty(), "attempt 1 did not fail on syntax")?;
    ensure(second.stage_reached == Stage::Accepted, "attempt 2 not accepted")?;
    let feedback = &second.prompt.last().unwrap().content;
    for d in &first.diagnostics {
        ensure(feedback.contains(d.as_str()), format!("diagnostic {d:?} missing from the second prompt"))?;
    }

    let client = LlmClient::new(EndpointConfig::load(&endpoint).map_err(|e| e.to_string())?).unwrap();
    let once = run_synthesis_loop(&request, &client, Some(&logic), 1)?;
    let report = once.failure_report().ok_or("max_iterations 1 was accepted")?;
    ensure(report.contains(&first.diagnostics[0]), "failure report lacks the diagnostic")?;
    Ok(format!("accepted at iteration 2 after `{}`", first.diagnostics.join("; ")))
}

fn c7_aggregation() -> Outcome {
    let src = std::fs::read_to_string(root().join("controllers/aggregate_disperse.swarmctl")).unwrap();
    let program = parse_program(&src).map_err(|d| format!("{d:?}"))?;
    let s = scenario("aggregation");
    ensure(s.config.n_robots == 5, "aggregation scenario must use 5 robots")?;
    let exp = Expectation::from_scenario(&s);
    let seeds = [42, 1, 2];
    let reports = validate_logic_seeds(&program, &s, &exp, &seeds, Parallelism::Parallel);
    let mut summary = Vec::new();
    for (seed, r) in seeds.iter().zip(&reports) {
        let m = r.metrics.as_ref().ok_or("no metrics")?;
        let (a, b) = (m.spread_at(150).ok_or("no tick 150")?, m.spread_at(400).ok_or("no tick 400")?);
        ensure(a < 0.3 && b > 0.5, format!("seed {seed}: {a:.3} m at 150, {b:.3} m at 400"))?;
        ensure(r.passed, format!("seed {seed}: {}", r.details))?;
        summary.push(format!("seed {seed}: {a:.3}/{b:.3}"));
    }
    Ok(summary.join(", "))
}

fn c8_parser_properties() -> Outcome {
    let mut runner = TestRunner::new(cases());
    runner
        .run(&common::program(), |p| {
            let text = render_program(&p);
            match parse_program(&text) {
                Ok(back) if back == p => Ok(()),
                other => Err(TestCaseError::fail(format!("{text:?} -> {other:?}"))),
            }
        })
        .map_err(|e| format!("round trip: {e}"))?;
    let mut runner = TestRunner::new(cases());
    let mutations = (0..common::SAMPLE.len(), 0usize..12, "[ -~\n]{0,8}");
    runner
        .run(&mutations, |(pos, len, insert)| {
            let src = common::mutate(pos, len, &insert);
            match parse_program(&src) {
                Ok(_) => Ok(()),
                Err(d) if !d.is_empty() => Ok(()),
                Err(_) => Err(TestCaseError::fail(format!("no diagnostics for {src:?}"))),
            }
        })
        .map_err(|e| format!("mutation: {e}"))?;
    Ok("1000 round trips, 1000 mutated sources".into())
}

fn c9_kinematics() -> Outcome {
    let params = KinematicsParams::default();
    let dt = params.tick_duration;
    let open = Arena::centered(1000.0, 1000.0);
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    for _ in 0..1000 {
        let p = Pose::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-PI..PI));
        let (q, _) = integrate(p, WheelCommand::ZERO, &params, &Arena::default());
        ensure(q == p, format!("zero command moved {p:?} to {q:?}"))?;
    }

    let n = 1000;
    let mut worst_line = 0.0f64;
    let mut worst_spin = 0.0f64;
    for _ in 0..20 {
        let th = rng.gen_range(-PI..PI);
        let v = rng.gen_range(-params.max_speed..params.max_speed);
        let mut p = Pose::new(0.0, 0.0, th);
        for _ in 0..n {
            p = integrate(p, WheelCommand::new(v, v), &params, &open).0;
        }
        worst_line = worst_line.max((p.x.hypot(p.y) - n as f64 * v.abs() * dt).abs());

        let mut q = Pose::new(0.0, 0.0, th);
        for _ in 0..n {
            q = integrate(q, WheelCommand::new(-v, v), &params, &open).0;
        }
        let want = normalize_angle(th + n as f64 * 2.0 * v / params.axle_length * dt);
        worst_spin = worst_spin.max(normalize_angle(q.theta - want).abs());
    }
    ensure(worst_line <= 1e-9, format!("straight-line error {worst_line:e}"))?;
    ensure(worst_spin <= 1e-6, format!("rotation error {worst_spin:e}"))?;

    let arena = Arena::default();
    let mut p = Pose::new(0.0, 0.0, 0.0);
    for t in 0..10_000 {
        let cmd = WheelCommand::new(
            rng.gen_range(-params.max_speed..=params.max_speed),
            rng.gen_range(-params.max_speed..=params.max_speed),
        );
        p = integrate(p, cmd, &params, &arena).0;
        ensure(arena.contains(p.x, p.y) && (-PI..PI).contains(&p.theta), format!("tick {t}: {p:?} out of bounds"))?;
    }
    Ok(format!("straight-line error {worst_line:.1e}, rotation error {worst_spin:.1e}"))
}

const INSTRUCT_TEXT: &str =
    "A person may be injured near position (5.0, 7.0). Move there and hold position until told otherwise.";

fn c10_instruct() -> Outcome {
    let s = scenario("instruct");
    let target = (5.0, 7.0);
    ensure(s.arena().contains(target.0, target.1), "target outside the arena")?;
    let mut e = Engine::new(&s, oracle());
    for _ in 0..50 {
        e.step();
    }
    let reply = operator::instruct(&mut e, INSTRUCT_TEXT).map_err(|err| err.to_string())?;
    ensure(reply.directive == Directive::navigate(5.0, 7.0), format!("got {:?}", reply.directive))?;
    ensure(reply.installed == vec![1, 2, 3], "not installed on every robot")?;

    let n = e.sim().robots.len();
    let dist = |p: &Pose| p.distance_to(target.0, target.1);
    let mut prev: Vec<Pose> = e.sim().robots.iter().map(|r| r.pose).collect();
    let mut aligned = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut reached_at = vec![None; n];
    while !e.is_finished() && reached_at.iter().any(Option::is_none) {
        let active: Vec<bool> = e.sim().robots.iter().map(|r| r.directive.is_some()).collect();
        e.step();
        for (i, r) in e.sim().robots.iter().enumerate() {
            if !active[i] || reached_at[i].is_some() {
                continue;
            }
            let (before, after) = (dist(&prev[i]), dist(&r.pose));
            if (r.pose.x, r.pose.y) != (prev[i].x, prev[i].y) {
                aligned[i] = true;
            }
            if aligned[i] {
                ensure(after < before, format!("robot {} moved away at tick {}", r.id, e.sim().tick))?;
            }
            best[i] = best[i].min(after);
            if after < 0.05 && reached_at[i].is_none() {
                reached_at[i] = Some(e.sim().tick);
            }
        }
        prev = e.sim().robots.iter().map(|r| r.pose).collect();
    }
    let ticks: Vec<u64> = reached_at
        .iter()
        .map(|t| t.ok_or_else(|| format!("closest approach {best:?} m")))
        .collect::<Result<_, _>>()?;
    Ok(format!("directive {}, robots arrived at ticks {ticks:?}", reply.directive.to_string().replace('\n', " ")))
}

fn round_delivery(points: &[(f64, f64)], radius: Radius) -> Result<(usize, usize), String> {
    let grid = FloorGrid::uniform(8, 8, 0.25, CellKind::Crops).unwrap();
    let poses: Vec<Pose> = points.iter().map(|&(x, y)| Pose::new(x, y, 0.0)).collect();
    let mut sim = SimState::new(grid, KinematicsParams::default(), &poses, 7).map_err(|e| e.to_string())?;
    let cfg = DiscussionConfig {
        radius,
        ..DiscussionConfig::default()
    };
    let n = poses.len();
    let mut agents: Vec<RobotAgentState> = sim
        .robots
        .iter()
        .map(|r| RobotAgentState::new(r.id, cfg.template.system_message(r.id, n)))
        .collect();
    let outcome = run_discussion_round(&mut sim, &mut agents, &cfg, &oracle(), 1);
    let brute = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| {
            let (a, b) = (points[i], points[j]);
            i != j && radius.covers(((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt())
        })
        .count();
    Ok((outcome.delivered, brute))
}

fn c11_conservation() -> Outcome {
    let three = [(-0.5, -0.5), (0.5, -0.5), (0.0, 0.6)];
    let (all, _) = round_delivery(&three, Radius::UNLIMITED)?;
    ensure(all == 6, format!("unlimited radius delivered {all}"))?;
    let (none, _) = round_delivery(&three, Radius::Limited(0.0))?;
    ensure(none == 0, format!("radius 0 delivered {none}"))?;
    let layouts: [&[(f64, f64)]; 3] = [
        &[(-0.9, -0.9), (-0.6, -0.9), (0.0, 0.0), (0.35, 0.0), (0.9, 0.9)],
        &[(0.0, 0.0), (0.3, 0.0), (0.6, 0.0), (0.9, 0.0)],
        &[(-0.8, 0.8), (0.8, -0.8), (0.1, 0.1), (0.2, 0.3), (-0.2, -0.1), (0.0, 0.45)],
    ];
    let mut counts = Vec::new();
    for layout in layouts {
        for r in [0.31, 0.45, 1.0] {
            let (got, want) = round_delivery(layout, Radius::Limited(r))?;
            ensure(got == want, format!("{} robots, radius {r}: {got} delivered, expected {want}", layout.len()))?;
            counts.push(got);
        }
    }
    Ok(format!("6 / 0 for three robots; asymmetric layouts {counts:?}"))
}

fn c12_without_console(earlier: &[bool]) -> Outcome {
    let manifest = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("Cargo.toml")).unwrap();
    ensure(!manifest.contains("swarmchat-server") && !manifest.contains("console"), "core depends on the console")?;
    ensure(earlier.iter().all(|&ok| ok), "an earlier criterion failed")?;
    Ok("criteria 1-11 ran against the core crate alone".into())
}

fn run(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let started = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let secs = started.elapsed().as_secs_f64();
    match result {
        Ok(detail) => {
            println!("PASS criterion {n:>2} {name}: {detail} ({secs:.2}s)");
            true
        }
        Err(why) => {
            println!("FAIL criterion {n:>2} {name}: {why} ({secs:.2}s)");
            false
        }
    }
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let results = vec![
        run(1, "determinism", c1_determinism),
        run(2, "majority correctness", c2_majority),
        run(3, "self diagnosis", c3_self_diagnosis),
        run(4, "peer diagnosis", c4_peer_diagnosis),
        run(5, "environmental diagnosis", c5_environmental),
        run(6, "synthesis repair loop", c6_synthesis_repair),
        run(7, "aggregate then disperse", c7_aggregation),
        run(8, "parser properties", c8_parser_properties),
        run(9, "kinematics", c9_kinematics),
        run(10, "instruct parsing", c10_instruct),
        run(11, "message conservation", c11_conservation),
    ];
    let all = run(12, "suite without console", || c12_without_console(&results));
    let failed = results.iter().filter(|ok| !**ok).count() + usize::from(!all);
    println!("\nacceptance: {} passed; {failed} failed", results.len() + 1 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
