//! Scenario files are TOML. Unknown keys are rejected at every level.
//!
//! ```toml
//! name = "no_anomalies"
//! n_robots = 3
//! seed = 42
//! tick_budget = 5000
//! round_period = 10.0       # seconds between discussion rounds
//! rounds_max = 5            # 0 disables discussion
//! radius = "unlimited"      # or a distance in meters
//! endpoint = "oracle"       # or a path to an endpoint profile
//! prompt_template = "../templates/robot_prompt.txt"   # optional
//! history_rounds = 3
//! initial_poses = [[0.0, 0.0, 0.0], ...]               # optional, else seeded random
//!
//! [arena]                   # optional, 2 x 2 m centered on the origin
//! width = 2.0
//! height = 2.0
//! origin = [-1.0, -1.0]     # optional lower-left corner
//!
//! [grid]                    # either `map`, or `crop_fraction` (+ `cell_size`, `seed`)
//! crop_fraction = 0.7
//! cell_size = 0.25
//!
//! [kinematics]              # optional
//! axle_length = 0.053
//! max_speed = 0.12
//! tick_duration = 0.1
//!
//! [controllers]             # optional, default is a plain random walk
//! shared = "../controllers/random_walk.swarmctl"
//!
//! [[expect]]              # optional, for logic validation
//! tick = 150
//! spread_below = 0.3
//!
//! [[anomalies]]
//! type = "sensor_stuck"     # disable_wheels_all | sensor_stuck | place_injured
//! at_tick = 0
//! robot = 3
//! kind = "weeds"
//! ```
//!
//! Relative paths are resolved against the scenario file's directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::direct::{AnomalySpec, PromptTemplate, DEFAULT_HISTORY_ROUNDS};
use crate::dsl::{format_diagnostics, parse_program, ControllerProgram};
use crate::llm::EndpointConfig;
use crate::sim::{Arena, CellKind, FloorGrid, KinematicsParams, Pose, Radius, SimState};

pub const DEFAULT_CONTROLLER: &str = "state walk { random_walk }";
const POSE_MARGIN: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{path}: line {line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("invalid '{field}': {message}")]
    Invalid { field: String, message: String },
    #[error("cannot read {what} '{path}': {message}")]
    Resolve {
        what: &'static str,
        path: String,
        message: String,
    },
    #[error("endpoint: {0}")]
    Endpoint(String),
}

fn invalid(field: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

fn default_round_period() -> f64 {
    10.0
}
fn default_rounds_max() -> u32 {
    5
}
fn default_radius() -> Radius {
    Radius::UNLIMITED
}
fn default_endpoint() -> String {
    "oracle".into()
}
fn default_history_rounds() -> usize {
    DEFAULT_HISTORY_ROUNDS
}
fn default_cell_size() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub arena: Option<ArenaConfig>,
    pub grid: GridConfig,
    pub n_robots: usize,
    #[serde(default)]
    pub initial_poses: Option<Vec<[f64; 3]>>,
    #[serde(default)]
    pub seed: u64,
    pub tick_budget: u64,
    /// Seconds.
    #[serde(default = "default_round_period")]
    pub round_period: f64,
    #[serde(default = "default_rounds_max")]
    pub rounds_max: u32,
    #[serde(default = "default_radius")]
    pub radius: Radius,
    #[serde(default)]
    pub anomalies: Vec<ScheduledAnomaly>,
    #[serde(default)]
    pub controllers: ControllerConfig,
    #[serde(default = "default_endpoint")]
    pub endpoint: String,
    #[serde(default)]
    pub prompt_template: Option<PathBuf>,
    #[serde(default = "default_history_rounds")]
    pub history_rounds: usize,
    #[serde(default)]
    pub kinematics: KinematicsParams,
    /// Checks used when the scenario drives logic validation.
    #[serde(default)]
    pub expect: Vec<SpreadCheck>,
}

/// Bound on the mean distance to the swarm centroid at one tick. Exactly
/// one of the two bounds is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpreadCheck {
    pub tick: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spread_below: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spread_above: Option<f64>,
}

impl SpreadCheck {
    pub fn below(tick: u64, bound: f64) -> Self {
        Self {
            tick,
            spread_below: Some(bound),
            spread_above: None,
        }
    }

    pub fn above(tick: u64, bound: f64) -> Self {
        Self {
            tick,
            spread_below: None,
            spread_above: Some(bound),
        }
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            arena: None,
            grid: GridConfig::default(),
            n_robots: 3,
            initial_poses: None,
            seed: 0,
            tick_budget: 5000,
            round_period: default_round_period(),
            rounds_max: default_rounds_max(),
            radius: default_radius(),
            anomalies: Vec::new(),
            controllers: ControllerConfig::default(),
            endpoint: default_endpoint(),
            prompt_template: None,
            history_rounds: default_history_rounds(),
            kinematics: KinematicsParams::default(),
            expect: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArenaConfig {
    pub width: f64,
    pub height: f64,
    /// Lower-left corner; centered on the origin when absent.
    #[serde(default)]
    pub origin: Option<[f64; 2]>,
}

impl ArenaConfig {
    pub fn arena(&self) -> Arena {
        match self.origin {
            Some([x, y]) => Arena {
                min_x: x,
                min_y: y,
                max_x: x + self.width,
                max_y: y + self.height,
            },
            None => Arena::centered(self.width, self.height),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub map: Option<PathBuf>,
    #[serde(default)]
    pub crop_fraction: Option<f64>,
    #[serde(default = "default_cell_size")]
    pub cell_size: f64,
    /// Layout seed; the scenario seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            map: None,
            crop_fraction: Some(0.7),
            cell_size: default_cell_size(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    #[serde(default)]
    pub shared: Option<PathBuf>,
    #[serde(default)]
    pub per_robot: Vec<PathBuf>,
}

/// An anomaly and the tick before which it is injected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawAnomaly", into = "RawAnomaly")]
pub struct ScheduledAnomaly {
    pub at_tick: u64,
    pub spec: AnomalySpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnomaly {
    #[serde(rename = "type")]
    kind_name: String,
    #[serde(default)]
    at_tick: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    robot: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kind: Option<CellKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y: Option<f64>,
}

impl TryFrom<RawAnomaly> for ScheduledAnomaly {
    type Error = String;

    fn try_from(raw: RawAnomaly) -> Result<Self, String> {
        let spec = match raw.kind_name.as_str() {
            "disable_wheels_all" => AnomalySpec::DisableWheelsAll,
            "sensor_stuck" => AnomalySpec::SensorStuck {
                robot: raw.robot.ok_or("sensor_stuck needs `robot`")?,
                kind: raw.kind.ok_or("sensor_stuck needs `kind`")?,
            },
            "place_injured" => AnomalySpec::PlaceInjured {
                x: raw.x.ok_or("place_injured needs `x`")?,
                y: raw.y.ok_or("place_injured needs `y`")?,
            },
            other => return Err(format!("unknown anomaly type '{other}'")),
        };
        Ok(Self {
            at_tick: raw.at_tick,
            spec,
        })
    }
}

impl From<ScheduledAnomaly> for RawAnomaly {
    fn from(a: ScheduledAnomaly) -> Self {
        let mut raw = RawAnomaly {
            kind_name: String::new(),
            at_tick: a.at_tick,
            robot: None,
            kind: None,
            x: None,
            y: None,
        };
        match a.spec {
            AnomalySpec::DisableWheelsAll => raw.kind_name = "disable_wheels_all".into(),
            AnomalySpec::SensorStuck { robot, kind } => {
                raw.kind_name = "sensor_stuck".into();
                raw.robot = Some(robot);
                raw.kind = Some(kind);
            }
            AnomalySpec::PlaceInjured { x, y } => {
                raw.kind_name = "place_injured".into();
                raw.x = Some(x);
                raw.y = Some(y);
            }
        }
        raw
    }
}

/// A validated scenario with every referenced file loaded.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub base_dir: PathBuf,
    pub grid: FloorGrid,
    pub poses: Vec<Pose>,
    /// One per robot.
    pub controllers: Vec<Arc<ControllerProgram>>,
    pub template: PromptTemplate,
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Resolve {
        what: "scenario",
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let config = parse_scenario(&text).map_err(|e| match e {
        ScenarioError::Parse { line, message, .. } => ScenarioError::Parse {
            path: path.display().to_string(),
            line,
            message,
        },
        other => other,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Scenario::from_config(config, base)
}

/// Parses scenario TOML without resolving files.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1)
            .unwrap_or(1);
        ScenarioError::Parse {
            path: "<scenario>".into(),
            line,
            message: e.message().to_string(),
        }
    })
}

fn read(base: &Path, what: &'static str, rel: &Path) -> Result<String, ScenarioError> {
    let p = base.join(rel);
    std::fs::read_to_string(&p).map_err(|e| ScenarioError::Resolve {
        what,
        path: p.display().to_string(),
        message: e.to_string(),
    })
}

impl ScenarioConfig {
    /// Checks the invariants that do not need any file.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n_robots < 1 {
            return Err(invalid("n_robots", "must be at least 1"));
        }
        if self.tick_budget < 1 {
            return Err(invalid("tick_budget", "must be at least 1"));
        }
        if !(self.round_period.is_finite() && self.round_period > 0.0) {
            return Err(invalid("round_period", "must be positive"));
        }
        if let Radius::Limited(r) = self.radius {
            if r.is_nan() || r < 0.0 {
                return Err(invalid("radius", "must be non-negative or \"unlimited\""));
            }
        }
        self.kinematics
            .validate()
            .map_err(|e| invalid("kinematics", e.to_string()))?;
        for a in &self.anomalies {
            if a.at_tick > self.tick_budget {
                return Err(invalid(
                    "anomalies.at_tick",
                    format!("activation tick {} exceeds tick_budget {}", a.at_tick, self.tick_budget),
                ));
            }
            if let AnomalySpec::SensorStuck { robot, .. } = a.spec {
                if robot < 1 || robot as usize > self.n_robots {
                    return Err(invalid("anomalies.robot", format!("robot {robot} does not exist")));
                }
            }
        }
        if let Some(poses) = &self.initial_poses {
            if poses.len() != self.n_robots {
                return Err(invalid(
                    "initial_poses",
                    format!("expected {} poses, got {}", self.n_robots, poses.len()),
                ));
            }
        }
        for c in &self.expect {
            if c.spread_below.is_some() == c.spread_above.is_some() {
                return Err(invalid("expect", "each check needs exactly one of spread_below, spread_above"));
            }
            if c.tick > self.tick_budget {
                return Err(invalid("expect.tick", format!("tick {} exceeds tick_budget", c.tick)));
            }
        }
        if self.history_rounds == 0 {
            return Err(invalid("history_rounds", "must be at least 1"));
        }
        Ok(())
    }

    pub fn round_ticks(&self) -> u64 {
        self.kinematics.ticks_per(self.round_period)
    }
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig, base_dir: PathBuf) -> Result<Self, ScenarioError> {
        config.validate()?;
        let grid = build_grid(&config, &base_dir)?;
        let poses = build_poses(&config, &grid.arena())?;
        for a in &config.anomalies {
            if let AnomalySpec::PlaceInjured { x, y } = a.spec {
                if !grid.arena().contains(x, y) {
                    return Err(invalid("anomalies", format!("injured person at ({x}, {y}) lies outside the arena")));
                }
            }
        }
        let controllers = build_controllers(&config, &base_dir)?;
        let template = match &config.prompt_template {
            Some(p) => PromptTemplate::parse(&read(&base_dir, "prompt template", p)?)
                .map_err(|e| invalid("prompt_template", e))?,
            None => PromptTemplate::default(),
        };
        Ok(Self {
            config,
            base_dir,
            grid,
            poses,
            controllers,
            template,
        })
    }

    /// Same scenario under another seed: random poses and generated grids
    /// without their own seed are redrawn.
    pub fn with_seed(&self, seed: u64) -> Result<Self, ScenarioError> {
        let mut config = self.config.clone();
        config.seed = seed;
        let grid = build_grid(&config, &self.base_dir)?;
        let poses = build_poses(&config, &grid.arena())?;
        Ok(Self {
            config,
            grid,
            poses,
            ..self.clone()
        })
    }

    /// Same scenario with every robot running `program`.
    pub fn with_controller(&self, program: ControllerProgram) -> Self {
        let program = Arc::new(program);
        Self {
            controllers: vec![program; self.config.n_robots],
            ..self.clone()
        }
    }

    pub fn arena(&self) -> Arena {
        self.grid.arena()
    }

    /// The scenario's own endpoint profile.
    pub fn endpoint(&self) -> Result<EndpointConfig, ScenarioError> {
        let name = &self.config.endpoint;
        let resolved = if name == "oracle" {
            name.clone()
        } else {
            self.base_dir.join(name).display().to_string()
        };
        EndpointConfig::resolve(&resolved).map_err(|e| ScenarioError::Endpoint(e.to_string()))
    }

    pub fn initial_state(&self) -> SimState {
        SimState::new(self.grid.clone(), self.config.kinematics, &self.poses, self.config.seed)
            .expect("poses and parameters validated at load time")
    }
}

fn build_grid(config: &ScenarioConfig, base: &Path) -> Result<FloorGrid, ScenarioError> {
    let g = &config.grid;
    let grid = match (&g.map, g.crop_fraction) {
        (Some(_), Some(_)) => return Err(invalid("grid", "give either `map` or `crop_fraction`, not both")),
        (None, None) => return Err(invalid("grid", "needs `map` or `crop_fraction`")),
        (Some(map), None) => {
            let grid =
                FloorGrid::parse_map(&read(base, "map", map)?).map_err(|e| invalid("grid.map", e.to_string()))?;
            if let Some(a) = &config.arena {
                let ext = grid.arena();
                if (ext.width() - a.width).abs() > 1e-9 || (ext.height() - a.height).abs() > 1e-9 {
                    return Err(invalid(
                        "grid.map",
                        format!(
                            "map covers {} x {} m but the arena is {} x {} m",
                            ext.width(),
                            ext.height(),
                            a.width,
                            a.height
                        ),
                    ));
                }
            }
            grid
        }
        (None, Some(fraction)) => {
            let a = config.arena.unwrap_or(ArenaConfig {
                width: 2.0,
                height: 2.0,
                origin: None,
            });
            if !(g.cell_size.is_finite() && g.cell_size > 0.0) {
                return Err(invalid("grid.cell_size", "must be positive"));
            }
            let cells = |len: f64, field: &str| -> Result<usize, ScenarioError> {
                let n = len / g.cell_size;
                if n.round() < 1.0 || (n - n.round()).abs() > 1e-9 {
                    return Err(invalid(
                        field,
                        format!("{len} m is not a whole number of {} m cells", g.cell_size),
                    ));
                }
                Ok(n.round() as usize)
            };
            let w = cells(a.width, "arena.width")?;
            let h = cells(a.height, "arena.height")?;
            FloorGrid::generate(w, h, g.cell_size, fraction, g.seed.unwrap_or(config.seed))
                .map_err(|e| invalid("grid.crop_fraction", e.to_string()))?
        }
    };
    Ok(match config.arena.and_then(|a| a.origin) {
        Some([x, y]) => grid.with_origin(x, y),
        None => grid,
    })
}

fn build_poses(config: &ScenarioConfig, arena: &Arena) -> Result<Vec<Pose>, ScenarioError> {
    match &config.initial_poses {
        Some(list) => list
            .iter()
            .map(|&[x, y, theta]| {
                if arena.contains(x, y) {
                    Ok(Pose::new(x, y, theta))
                } else {
                    Err(invalid("initial_poses", format!("({x}, {y}) lies outside the arena")))
                }
            })
            .collect(),
        None => Ok(SimState::random_poses(arena, config.n_robots, POSE_MARGIN, config.seed)),
    }
}

fn parse_controller(source: &str, origin: &str) -> Result<Arc<ControllerProgram>, ScenarioError> {
    parse_program(source)
        .map(Arc::new)
        .map_err(|d| invalid("controllers", format!("{origin}:\n{}", format_diagnostics(&d))))
}

fn build_controllers(config: &ScenarioConfig, base: &Path) -> Result<Vec<Arc<ControllerProgram>>, ScenarioError> {
    let c = &config.controllers;
    match (&c.shared, c.per_robot.is_empty()) {
        (Some(_), false) => Err(invalid("controllers", "give either `shared` or `per_robot`, not both")),
        (Some(p), true) => {
            let prog = parse_controller(&read(base, "controller", p)?, &p.display().to_string())?;
            Ok(vec![prog; config.n_robots])
        }
        (None, false) => {
            if c.per_robot.len() != config.n_robots {
                return Err(invalid(
                    "controllers.per_robot",
                    format!("expected {} files, got {}", config.n_robots, c.per_robot.len()),
                ));
            }
            c.per_robot
                .iter()
                .map(|p| parse_controller(&read(base, "controller", p)?, &p.display().to_string()))
                .collect()
        }
        (None, true) => Ok(vec![parse_controller(DEFAULT_CONTROLLER, "default")?; config.n_robots]),
    }
}
