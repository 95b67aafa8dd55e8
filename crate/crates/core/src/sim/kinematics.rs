//! Planar differential-drive kinematics.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::SimError;

/// Wraps an angle into `[-π, π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let wrapped = (theta + PI).rem_euclid(TAU) - PI;
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if wrapped >= PI {
        wrapped - TAU
    } else {
        wrapped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        (self.x - x).hypot(self.y - y)
    }
}

/// Wheel surface speeds in m/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WheelCommand {
    pub left: f64,
    pub right: f64,
}

impl WheelCommand {
    pub const ZERO: WheelCommand = WheelCommand {
        left: 0.0,
        right: 0.0,
    };

    pub fn new(left: f64, right: f64) -> Self {
        Self { left, right }
    }

    /// Scales both wheels by the same factor so neither exceeds `max_speed`.
    /// Preserves the curvature of the commanded arc.
    pub fn saturate(self, max_speed: f64) -> Self {
        let peak = self.left.abs().max(self.right.abs());
        if peak <= max_speed || peak == 0.0 {
            self
        } else {
            let k = max_speed / peak;
            Self {
                left: self.left * k,
                right: self.right * k,
            }
        }
    }

    pub fn within(&self, max_speed: f64) -> bool {
        self.left.abs() <= max_speed && self.right.abs() <= max_speed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KinematicsParams {
    pub axle_length: f64,
    pub max_speed: f64,
    pub tick_duration: f64,
}

impl Default for KinematicsParams {
    fn default() -> Self {
        Self {
            axle_length: 0.053,
            max_speed: 0.12,
            tick_duration: 0.1,
        }
    }
}

impl KinematicsParams {
    pub fn validate(&self) -> Result<(), SimError> {
        for (name, v) in [
            ("axle_length", self.axle_length),
            ("max_speed", self.max_speed),
            ("tick_duration", self.tick_duration),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::InvalidParams(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Number of ticks in one period of `seconds`, rounded up.
    pub fn ticks_per(&self, seconds: f64) -> u64 {
        // guard against 1.0 / 0.1 = 10.000000000000002
        let raw = seconds / self.tick_duration;
        let rounded = raw.round();
        let n = if (raw - rounded).abs() < 1e-9 {
            rounded
        } else {
            raw.ceil()
        };
        (n as u64).max(1)
    }
}

/// Axis-aligned arena rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Arena {
    /// Arena of the given size centered on the origin.
    pub fn centered(width: f64, height: f64) -> Self {
        Self {
            min_x: -width / 2.0,
            min_y: -height / 2.0,
            max_x: width / 2.0,
            max_y: height / 2.0,
        }
    }

    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }

    /// Clamps a point into the arena; the flag reports whether a wall was hit.
    pub fn clamp(&self, x: f64, y: f64) -> (f64, f64, bool) {
        let cx = x.clamp(self.min_x, self.max_x);
        let cy = y.clamp(self.min_y, self.max_y);
        (cx, cy, cx != x || cy != y)
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.min_x + self.max_x) / 2.0,
            (self.min_y + self.max_y) / 2.0,
        )
    }
}

impl Default for Arena {
    fn default() -> Self {
        Arena::centered(2.0, 2.0)
    }
}

/// Integrates one tick of unicycle motion exactly (constant wheel speeds
/// trace a circular arc), then clamps to the arena keeping the heading.
pub fn integrate(
    pose: Pose,
    cmd: WheelCommand,
    params: &KinematicsParams,
    arena: &Arena,
) -> (Pose, bool) {
    let dt = params.tick_duration;
    let v = (cmd.left + cmd.right) / 2.0;
    let omega = (cmd.right - cmd.left) / params.axle_length;
    let dtheta = omega * dt;
    let (dx, dy) = if dtheta.abs() < 1e-12 {
        (v * dt * pose.theta.cos(), v * dt * pose.theta.sin())
    } else {
        let r = v / omega;
        (
            r * ((pose.theta + dtheta).sin() - pose.theta.sin()),
            r * (pose.theta.cos() - (pose.theta + dtheta).cos()),
        )
    };
    let (x, y, hit) = arena.clamp(pose.x + dx, pose.y + dy);
    (
        Pose {
            x,
            y,
            theta: normalize_angle(pose.theta + dtheta),
        },
        hit,
    )
}

/// Advances `pose` by one tick under `cmd`.
pub fn step_pose(pose: Pose, cmd: WheelCommand, params: &KinematicsParams, arena: &Arena) -> Pose {
    integrate(pose, cmd, params, arena).0
}
