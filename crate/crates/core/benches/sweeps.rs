use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use swarmchat_core::direct::{prepare_round, DiscussionConfig, RobotAgentState};
use swarmchat_core::dsl::parse_program;
use swarmchat_core::llm::{EndpointConfig, LlmClient};
use swarmchat_core::par::Parallelism;
use swarmchat_core::scenario::{load_scenario, Scenario};
use swarmchat_core::synthesis::{validate_logic_seeds, Expectation};

const MODES: [(&str, Parallelism); 2] = [("sequential", Parallelism::Sequential), ("parallel", Parallelism::Parallel)];

fn scenario(name: &str) -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../scenarios/{name}.toml"));
    load_scenario(&path).expect("scenario loads")
}

fn logic_sweep(c: &mut Criterion) {
    let s = scenario("aggregation");
    let exp = Expectation::from_scenario(&s);
    let program = parse_program("state a { goto(0.0, 0.0) after 150 ticks -> d } state d { random_walk }").unwrap();
    let seeds: Vec<u64> = (0..16).collect();
    let mut group = c.benchmark_group("logic_validation_16_seeds");
    group.sample_size(20);
    for (name, mode) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| validate_logic_seeds(&program, &s, &exp, &seeds, mode))
        });
    }
    group.finish();
}

fn oracle_round(c: &mut Criterion) {
    let mut s = scenario("no_anomalies");
    s.config.n_robots = 32;
    s.config.tick_budget = 600;
    let s = Scenario::from_config(s.config.clone(), s.base_dir.clone()).unwrap();
    let mut sim = s.initial_state();
    let ticks = sim.params.ticks_per(60.0);
    for _ in 0..ticks {
        sim.advance_tick(&s.controllers);
    }
    let cfg = DiscussionConfig::default();
    let mut agents: Vec<RobotAgentState> = sim
        .robots
        .iter()
        .map(|r| RobotAgentState::new(r.id, cfg.template.system_message(r.id, sim.robots.len())))
        .collect();
    let prompts = prepare_round(&sim, &mut agents, &cfg, 1);

    let mut group = c.benchmark_group("oracle_round_32_robots");
    for (name, mode) in MODES {
        let client = LlmClient::new(EndpointConfig::oracle()).unwrap().with_parallelism(mode);
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| client.complete_batch(&prompts)));
    }
    group.finish();
}

criterion_group!(benches, logic_sweep, oracle_round);
criterion_main!(benches);
