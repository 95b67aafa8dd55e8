use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{integrate, sense_floor, Arena, CellKind, FloorGrid, KinematicsParams, Pose, SensorReading, SimError, WheelCommand};
use crate::direct::{apply_directive_tick, BroadcastMessage, Directive};
use crate::dsl::{exec_controller_tick, ControllerProgram, ControllerRuntime};

pub type RobotId = u32;

// keeps initial poses independent of the motion RNG stream
const POSE_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Communication range for neighbor discovery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Radius {
    Limited(f64),
    Unlimited(UnlimitedTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnlimitedTag {
    Unlimited,
}

impl Radius {
    pub const UNLIMITED: Radius = Radius::Unlimited(UnlimitedTag::Unlimited);

    pub fn covers(&self, distance: f64) -> bool {
        match self {
            Radius::Limited(r) => distance <= *r,
            Radius::Unlimited(_) => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub id: RobotId,
    pub pose: Pose,
    pub wheels_enabled: bool,
    pub sensor_stuck: Option<CellKind>,
    pub sensor_log: Vec<SensorReading>,
    pub inbox: Vec<BroadcastMessage>,
    pub runtime: ControllerRuntime,
    /// Set by a parsed LLM directive; overrides the DSL controller while present.
    pub directive: Option<Directive>,
    /// Set when the controller failed; the robot stays halted.
    pub halted: bool,
}

impl RobotState {
    pub fn new(id: RobotId, pose: Pose) -> Self {
        Self {
            id,
            pose,
            wheels_enabled: true,
            sensor_stuck: None,
            sensor_log: Vec::new(),
            inbox: Vec::new(),
            runtime: ControllerRuntime::default(),
            directive: None,
            halted: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TickEvent {
    ControllerError { robot: RobotId, message: String },
    DirectiveCompleted { robot: RobotId, directive: Directive },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub tick: u64,
    /// Sorted ascending by id.
    pub robots: Vec<RobotState>,
    pub grid: FloorGrid,
    pub params: KinematicsParams,
    pub rng: ChaCha8Rng,
}

impl SimState {
    /// Robots get ids `1..=poses.len()` in the given order.
    pub fn new(grid: FloorGrid, params: KinematicsParams, poses: &[Pose], seed: u64) -> Result<Self, SimError> {
        params.validate()?;
        let arena = grid.arena();
        for p in poses {
            if !arena.contains(p.x, p.y) {
                return Err(SimError::OutOfBounds { x: p.x, y: p.y });
            }
        }
        let robots = poses
            .iter()
            .enumerate()
            .map(|(i, p)| RobotState::new(i as RobotId + 1, *p))
            .collect();
        Ok(Self {
            tick: 0,
            robots,
            grid,
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    /// `n` poses uniformly inside the arena, inset by `margin`, random heading.
    pub fn random_poses(arena: &Arena, n: usize, margin: f64, seed: u64) -> Vec<Pose> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ POSE_SEED_SALT);
        (0..n)
            .map(|_| {
                let x = rng.gen_range(arena.min_x + margin..=arena.max_x - margin);
                let y = rng.gen_range(arena.min_y + margin..=arena.max_y - margin);
                let theta = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                Pose::new(x, y, theta)
            })
            .collect()
    }

    pub fn arena(&self) -> Arena {
        self.grid.arena()
    }

    pub fn robot(&self, id: RobotId) -> Result<&RobotState, SimError> {
        self.robots.iter().find(|r| r.id == id).ok_or(SimError::NotFound(id))
    }

    pub fn robot_mut(&mut self, id: RobotId) -> Result<&mut RobotState, SimError> {
        self.robots.iter_mut().find(|r| r.id == id).ok_or(SimError::NotFound(id))
    }

    pub fn ids(&self) -> Vec<RobotId> {
        self.robots.iter().map(|r| r.id).collect()
    }

    /// Other robots within `radius` of `robot_id`, ascending by id.
    pub fn neighbors_within_radius(&self, robot_id: RobotId, radius: Radius) -> Result<Vec<RobotId>, SimError> {
        let me = self.robot(robot_id)?;
        let mut ids: Vec<RobotId> = self
            .robots
            .iter()
            .filter(|r| r.id != robot_id && radius.covers(me.pose.distance_to(r.pose.x, r.pose.y)))
            .map(|r| r.id)
            .collect();
        ids.sort_unstable();
        Ok(ids)
    }

    /// Mean distance of all robots to their centroid.
    pub fn centroid_spread(&self) -> f64 {
        let n = self.robots.len() as f64;
        if n == 0.0 {
            return 0.0;
        }
        let cx = self.robots.iter().map(|r| r.pose.x).sum::<f64>() / n;
        let cy = self.robots.iter().map(|r| r.pose.y).sum::<f64>() / n;
        self.robots.iter().map(|r| r.pose.distance_to(cx, cy)).sum::<f64>() / n
    }

    /// One simulation step. `controllers[i]` drives `robots[i]`.
    pub fn advance_tick(&mut self, controllers: &[Arc<ControllerProgram>]) -> Vec<TickEvent> {
        assert_eq!(
            controllers.len(),
            self.robots.len(),
            "one controller per robot required"
        );
        let arena = self.arena();
        let params = self.params;
        let next_tick = self.tick + 1;
        let sense_now = next_tick.is_multiple_of(params.ticks_per(1.0));
        let mut events = Vec::new();

        for (robot, program) in self.robots.iter_mut().zip(controllers) {
            let cmd = if robot.halted {
                WheelCommand::ZERO
            } else if let Some(directive) = robot.directive {
                let (cmd, done) =
                    apply_directive_tick(&directive, &robot.pose, &mut robot.runtime, &mut self.rng, &params);
                if done {
                    robot.directive = None;
                    events.push(TickEvent::DirectiveCompleted {
                        robot: robot.id,
                        directive,
                    });
                }
                cmd
            } else {
                match exec_controller_tick(program, &mut robot.runtime, &robot.pose, &mut self.rng, &params) {
                    Ok(cmd) => cmd,
                    Err(e) => {
                        robot.halted = true;
                        events.push(TickEvent::ControllerError {
                            robot: robot.id,
                            message: e.to_string(),
                        });
                        WheelCommand::ZERO
                    }
                }
            };
            let cmd = if robot.wheels_enabled {
                cmd.saturate(params.max_speed)
            } else {
                WheelCommand::ZERO
            };
            let (pose, hit) = integrate(robot.pose, cmd, &params, &arena);
            robot.pose = pose;
            robot.runtime.wall_contact = hit;

            if sense_now {
                match sense_floor(&self.grid, &robot.pose, next_tick) {
                    Ok(mut reading) => {
                        if let Some(kind) = robot.sensor_stuck {
                            reading.kind = kind;
                        }
                        robot.sensor_log.push(reading);
                    }
                    Err(e) => {
                        robot.halted = true;
                        events.push(TickEvent::ControllerError {
                            robot: robot.id,
                            message: e.to_string(),
                        });
                    }
                }
            }
        }
        self.tick = next_tick;
        events
    }
}
