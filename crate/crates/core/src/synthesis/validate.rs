use super::{Stage, ValidationReport};
use crate::dsl::{lint_security, ControllerProgram};
use crate::llm::{ChatMessage, EndpointConfig, LlmClient};
use crate::par::{self, Parallelism};
use crate::scenario::{Engine, RecordKind, Scenario, SpreadCheck};
use crate::sim::Arena;

/// First line a reviewer returns for a clean program.
pub const SECURITY_PASS: &str = "NO ISSUES";

/// Behavior the logic stage checks, with the words used when it fails.
#[derive(Debug, Clone, PartialEq)]
pub struct Expectation {
    pub description: String,
    pub checks: Vec<SpreadCheck>,
}

impl Expectation {
    pub fn new(description: impl Into<String>, checks: Vec<SpreadCheck>) -> Self {
        Self {
            description: description.into(),
            checks,
        }
    }

    /// The scenario's own `[[expect]]` entries.
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let checks = scenario.config.expect.clone();
        let description = checks.iter().map(describe).collect::<Vec<_>>().join("; ");
        Self { description, checks }
    }

    fn horizon(&self) -> u64 {
        self.checks.iter().map(|c| c.tick).max().unwrap_or(0)
    }
}

fn describe(c: &SpreadCheck) -> String {
    match (c.spread_below, c.spread_above) {
        (Some(b), _) => format!("mean centroid distance below {b:?} m at tick {}", c.tick),
        (_, Some(a)) => format!("mean centroid distance above {a:?} m at tick {}", c.tick),
        _ => format!("no bound at tick {}", c.tick),
    }
}

fn check_failure(c: &SpreadCheck, observed: f64) -> Option<String> {
    let (ok, rel, bound) = match (c.spread_below, c.spread_above) {
        (Some(b), _) => (observed < b, "<", b),
        (_, Some(a)) => (observed > a, ">", a),
        _ => return None,
    };
    (!ok).then(|| format!("mean centroid distance {observed:.2} m at tick {}, expected {rel} {bound:?}", c.tick))
}

/// Runs the scenario headless with every robot on `program` and no
/// discussion rounds, then checks the expectation.
pub fn validate_logic(program: &ControllerProgram, scenario: &Scenario, expectation: &Expectation) -> ValidationReport {
    let mut s = scenario.with_controller(program.clone());
    s.config.rounds_max = 0;
    s.config.tick_budget = s.config.tick_budget.max(expectation.horizon());
    let client = LlmClient::new(EndpointConfig::oracle()).expect("oracle endpoint is always valid");
    let mut engine = Engine::new(&s, client);
    let initial = engine.sim().centroid_spread();
    engine.run_to_end();

    let mut findings: Vec<String> = engine
        .transcript()
        .records()
        .iter()
        .filter(|r| r.kind == RecordKind::Diagnostic && r.payload.starts_with("controller halted"))
        .map(|r| format!("robot {}: {}", r.robot.unwrap_or(0), r.payload))
        .collect();
    let metrics = engine.metrics();
    let mut checks_failed = false;
    for c in &expectation.checks {
        let observed = if c.tick == 0 { Some(initial) } else { metrics.spread_at(c.tick) };
        match observed {
            Some(v) => {
                if let Some(f) = check_failure(c, v) {
                    findings.push(f);
                    checks_failed = true;
                }
            }
            None => findings.push(format!("tick {} was never reached", c.tick)),
        }
    }
    if checks_failed && !expectation.description.is_empty() {
        findings.push(format!("expected behavior: {}", expectation.description));
    }
    let passed = findings.is_empty();
    let details = if passed {
        format!("{} check(s) passed over {} ticks", expectation.checks.len(), engine.sim().tick)
    } else {
        findings.join("\n")
    };
    ValidationReport {
        stage: Stage::Logic,
        passed,
        details,
        metrics: Some(metrics),
        findings,
    }
}

/// One logic validation per seed, fanned out per `mode`.
pub fn validate_logic_seeds(
    program: &ControllerProgram,
    scenario: &Scenario,
    expectation: &Expectation,
    seeds: &[u64],
    mode: Parallelism,
) -> Vec<ValidationReport> {
    par::map(mode, seeds, |&seed| match scenario.with_seed(seed) {
        Ok(s) => validate_logic(program, &s, expectation),
        Err(e) => ValidationReport {
            stage: Stage::Logic,
            passed: false,
            details: e.to_string(),
            metrics: None,
            findings: vec![e.to_string()],
        },
    })
}

const REVIEW_SYSTEM: &str = "You review robot controller programs before they run on hardware. \
Look for motion outside the arena, states that can never be left when they should be, and anything that could harm people or robots. \
If the program is safe, answer with NO ISSUES on the first line. Otherwise list one issue per line.";

/// Model review plus blocking lint rules. Fails closed when the model
/// cannot be reached.
pub fn security_review(source: &str, program: &ControllerProgram, client: &LlmClient, arena: &Arena) -> ValidationReport {
    let lint = lint_security(program, arena);
    let mut user = format!(
        "Arena: x in [{:?}, {:?}], y in [{:?}, {:?}] (meters).\n\nProgram:\n```swarmctl\n{}\n```",
        arena.min_x,
        arena.max_x,
        arena.min_y,
        arena.max_y,
        source.trim_end()
    );
    if !lint.is_empty() {
        user.push_str("\n\nStatic checks reported:\n");
        for f in &lint {
            user.push_str(&format!("{f}\n"));
        }
    }
    let prompt = [ChatMessage::system(REVIEW_SYSTEM), ChatMessage::user(user.trim_end())];

    let mut findings: Vec<String> = lint.iter().filter(|f| f.rule.is_blocking()).map(|f| f.to_string()).collect();
    let details = match client.complete_chat(&prompt) {
        Ok(c) => {
            let text = c.text.trim();
            let first = text.lines().next().unwrap_or("").trim().trim_end_matches('.');
            if !first.eq_ignore_ascii_case(SECURITY_PASS) {
                if text.is_empty() {
                    findings.push("security review returned nothing".into());
                } else {
                    findings.extend(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string));
                }
            }
            text.to_string()
        }
        Err(e) => {
            findings.push(format!("security review unavailable: {}", e.kind()));
            "security review unavailable".to_string()
        }
    };
    ValidationReport {
        stage: Stage::Security,
        passed: findings.is_empty(),
        details,
        metrics: None,
        findings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_program;
    use crate::scenario::{parse_scenario, Scenario};

    fn scenario(expect: &str) -> Scenario {
        let text = format!(
            "name = \"agg\"\nn_robots = 5\nseed = 42\ntick_budget = 400\nrounds_max = 0\n\
             [grid]\ncrop_fraction = 0.5\n{expect}"
        );
        Scenario::from_config(parse_scenario(&text).unwrap(), ".".into()).unwrap()
    }

    const AGG: &str = "state a { goto(0.0, 0.0) after 150 ticks -> d } state d { random_walk }";

    #[test]
    fn aggregation_passes_and_walk_fails() {
        let s = scenario("");
        let exp = Expectation::new(
            "gather then spread",
            vec![SpreadCheck::below(150, 0.3), SpreadCheck::above(400, 0.5)],
        );
        let good = validate_logic(&parse_program(AGG).unwrap(), &s, &exp);
        assert!(good.passed, "{}", good.details);
        let walk = validate_logic(&parse_program("state w { random_walk }").unwrap(), &s, &exp);
        assert!(!walk.passed);
        assert!(walk.findings[0].starts_with("mean centroid distance "), "{:?}", walk.findings);
        assert!(walk.findings[0].ends_with("at tick 150, expected < 0.3"));
        assert_eq!(walk.findings.last().unwrap(), "expected behavior: gather then spread");
    }

    #[test]
    fn expectation_from_scenario_section() {
        let s = scenario("[[expect]]\ntick = 150\nspread_below = 0.3\n");
        let e = Expectation::from_scenario(&s);
        assert_eq!(e.checks, vec![SpreadCheck::below(150, 0.3)]);
        assert_eq!(e.description, "mean centroid distance below 0.3 m at tick 150");
    }

    #[test]
    fn seeds_agree_across_modes() {
        let s = scenario("");
        let exp = Expectation::new("", vec![SpreadCheck::below(150, 0.3)]);
        let p = parse_program(AGG).unwrap();
        let seq = validate_logic_seeds(&p, &s, &exp, &[1, 2, 3], Parallelism::Sequential);
        let par = validate_logic_seeds(&p, &s, &exp, &[1, 2, 3], Parallelism::Parallel);
        assert_eq!(seq, par);
        assert!(seq.iter().all(|r| r.passed));
    }

    #[test]
    fn review_fails_closed() {
        let p = parse_program("state a { stop }").unwrap();
        let client = LlmClient::new(EndpointConfig::scripted([crate::llm::SCRIPT_NETWORK_ERROR_MARKER])).unwrap();
        let r = security_review("state a { stop }", &p, &client, &Arena::default());
        assert!(!r.passed);
        assert_eq!(r.details, "security review unavailable");
    }

    #[test]
    fn review_pass_and_reject() {
        let p = parse_program("state a { stop }").unwrap();
        let client = LlmClient::new(EndpointConfig::scripted(["No issues.", "Robot never moves"])).unwrap();
        assert!(security_review("state a { stop }", &p, &client, &Arena::default()).passed);
        let r = security_review("state a { stop }", &p, &client, &Arena::default());
        assert_eq!(r.findings, vec!["Robot never moves"]);
    }

    #[test]
    fn blocking_lint_overrides_model() {
        let src = "state a { goto(5.0, 0.0) }";
        let p = parse_program(src).unwrap();
        let client = LlmClient::new(EndpointConfig::scripted([SECURITY_PASS])).unwrap();
        let r = security_review(src, &p, &client, &Arena::default());
        assert!(!r.passed);
        assert!(r.findings[0].starts_with("R1:"));
    }
}
