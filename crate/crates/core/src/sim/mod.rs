//! Deterministic discrete-time simulation of differential-drive robots on a
//! bounded arena with a typed floor.

mod grid;
mod kinematics;
mod world;

pub use grid::{sense_floor, CellCounts, CellKind, FloorGrid, SensorReading};
pub use kinematics::{integrate, normalize_angle, step_pose, Arena, KinematicsParams, Pose, WheelCommand};
pub use world::{Radius, RobotId, RobotState, SimState, TickEvent};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("robot {0} not found")]
    NotFound(RobotId),
    #[error("position ({x}, {y}) lies outside the arena")]
    OutOfBounds { x: f64, y: f64 },
    #[error("invalid kinematics parameters: {0}")]
    InvalidParams(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("map line {line}: {message}")]
    MapParse { line: usize, message: String },
}
