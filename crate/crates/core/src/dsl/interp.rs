use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Action, ControllerProgram, Guard};
use crate::sim::{normalize_angle, KinematicsParams, Pose, WheelCommand};

/// Random-walk cruising speed as a fraction of `max_speed`.
pub const RANDOM_WALK_SPEED: f64 = 0.8;
/// Per-tick chance of starting a spontaneous turn.
pub const RANDOM_WALK_TURN_PROBABILITY: f64 = 0.02;
pub const RANDOM_WALK_MAX_TURN_TICKS: u32 = 10;
/// Heading error above which `goto` turns on the spot before driving.
pub const ALIGN_TOLERANCE: f64 = 0.05;
/// Distance below which `goto` holds still.
pub const ARRIVAL_EPSILON: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerRuntime {
    /// Index into `ControllerProgram::states`.
    pub state: usize,
    pub ticks_in_state: u64,
    pub turn_ticks_left: u32,
    pub turn_left: bool,
    /// Whether the last motion step was clamped by a wall.
    pub wall_contact: bool,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RuntimeError {
    #[error("controller state index {0} does not exist")]
    BadState(usize),
    #[error("transition to unknown state '{0}'")]
    UnknownTarget(String),
}

/// Steering law shared by `goto` and targeted-navigation directives:
/// rotate in place until roughly aligned, then drive with a heading
/// correction, never overshooting the target in one tick.
pub fn steer_toward(pose: &Pose, tx: f64, ty: f64, params: &KinematicsParams) -> WheelCommand {
    let dist = pose.distance_to(tx, ty);
    if dist < ARRIVAL_EPSILON {
        return WheelCommand::ZERO;
    }
    let dt = params.tick_duration;
    let half_axle = params.axle_length / 2.0;
    let err = normalize_angle((ty - pose.y).atan2(tx - pose.x) - pose.theta);
    if err.abs() > ALIGN_TOLERANCE {
        let s = (err.abs() * half_axle / dt).min(params.max_speed);
        return if err > 0.0 {
            WheelCommand::new(-s, s)
        } else {
            WheelCommand::new(s, -s)
        };
    }
    let v = params.max_speed.min(dist / dt);
    let diff = err / dt * half_axle;
    WheelCommand::new(v - diff, v + diff).saturate(params.max_speed)
}

/// Drive forward; on wall contact or at random, spin for 1..=10 ticks.
pub fn random_walk_step<R: Rng + ?Sized>(
    runtime: &mut ControllerRuntime,
    rng: &mut R,
    params: &KinematicsParams,
) -> WheelCommand {
    let speed = RANDOM_WALK_SPEED * params.max_speed;
    if runtime.turn_ticks_left == 0 && (runtime.wall_contact || rng.gen_bool(RANDOM_WALK_TURN_PROBABILITY)) {
        runtime.turn_ticks_left = rng.gen_range(1..=RANDOM_WALK_MAX_TURN_TICKS);
        runtime.turn_left = rng.gen_bool(0.5);
    }
    if runtime.turn_ticks_left > 0 {
        runtime.turn_ticks_left -= 1;
        if runtime.turn_left {
            WheelCommand::new(-speed, speed)
        } else {
            WheelCommand::new(speed, -speed)
        }
    } else {
        WheelCommand::new(speed, speed)
    }
}

/// Runs one tick of the program: picks the command for the current state's
/// action, then evaluates transitions in declaration order.
pub fn exec_controller_tick<R: Rng + ?Sized>(
    program: &ControllerProgram,
    runtime: &mut ControllerRuntime,
    pose: &Pose,
    rng: &mut R,
    params: &KinematicsParams,
) -> Result<WheelCommand, RuntimeError> {
    let state = program
        .states
        .get(runtime.state)
        .ok_or(RuntimeError::BadState(runtime.state))?;
    let cmd = match state.action {
        Action::RandomWalk => random_walk_step(runtime, rng, params),
        Action::Goto { x, y } => steer_toward(pose, x, y, params),
        Action::Stop => WheelCommand::ZERO,
    };
    runtime.ticks_in_state += 1;

    for t in &state.transitions {
        let fires = match (t.guard, state.action) {
            (Guard::After(n), _) => runtime.ticks_in_state >= n,
            (Guard::AtTarget(tol), Action::Goto { x, y }) => pose.distance_to(x, y) <= tol,
            (Guard::AtTarget(_), _) => false,
        };
        if fires {
            let next = program
                .state_index(&t.target)
                .ok_or_else(|| RuntimeError::UnknownTarget(t.target.clone()))?;
            runtime.state = next;
            runtime.ticks_in_state = 0;
            runtime.turn_ticks_left = 0;
            break;
        }
    }
    Ok(cmd)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::dsl::parse_program;
    use crate::sim::{step_pose, Arena};

    #[test]
    fn stop_state_always_zero() {
        let p = parse_program("state s { stop }").unwrap();
        let mut rt = ControllerRuntime::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = KinematicsParams::default();
        for _ in 0..500 {
            let c = exec_controller_tick(&p, &mut rt, &Pose::new(0.3, 0.1, 1.0), &mut rng, &params).unwrap();
            assert_eq!(c, WheelCommand::ZERO);
        }
    }

    #[test]
    fn aligned_goto_is_full_speed() {
        let params = KinematicsParams::default();
        let c = steer_toward(&Pose::new(1.0, 0.0, PI), 0.0, 0.0, &params);
        assert_eq!(c, WheelCommand::new(params.max_speed, params.max_speed));
    }

    #[test]
    fn after_guard_switches_exactly_150_ticks_later() {
        let p = parse_program("state agg { goto(0.0, 0.0) after 150 ticks -> disp } state disp { random_walk }").unwrap();
        let params = KinematicsParams::default();
        let arena = Arena::default();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut rt = ControllerRuntime::default();
        let mut pose = Pose::new(0.5, 0.5, 0.0);
        let mut state_at_tick = Vec::new();
        for _ in 0..200 {
            state_at_tick.push(rt.state);
            let cmd = exec_controller_tick(&p, &mut rt, &pose, &mut rng, &params).unwrap();
            pose = step_pose(pose, cmd, &params, &arena);
        }
        // entered at tick 0
        assert!(state_at_tick[..150].iter().all(|&s| s == 0));
        assert!(state_at_tick[150..].iter().all(|&s| s == 1));
    }

    #[test]
    fn first_declared_transition_wins() {
        let p = parse_program("state a { stop after 2 ticks -> b after 1 ticks -> c } state b { stop } state c { stop }").unwrap();
        let params = KinematicsParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut rt = ControllerRuntime::default();
        let pose = Pose::new(0.0, 0.0, 0.0);
        exec_controller_tick(&p, &mut rt, &pose, &mut rng, &params).unwrap();
        // after 1 fired first since after 2 had not
        assert_eq!(rt.state, 2);
        let p = parse_program("state a { stop after 1 ticks -> b after 1 ticks -> c } state b { stop } state c { stop }").unwrap();
        let mut rt = ControllerRuntime::default();
        exec_controller_tick(&p, &mut rt, &pose, &mut rng, &params).unwrap();
        assert_eq!(rt.state, 1);
    }

    #[test]
    fn at_target_fires_on_arrival() {
        let p = parse_program("state go { goto(0.5, 0.0) at_target 0.05 -> rest } state rest { stop }").unwrap();
        let params = KinematicsParams::default();
        let arena = Arena::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut rt = ControllerRuntime::default();
        let mut pose = Pose::new(0.0, 0.0, 0.0);
        for _ in 0..100 {
            let cmd = exec_controller_tick(&p, &mut rt, &pose, &mut rng, &params).unwrap();
            pose = step_pose(pose, cmd, &params, &arena);
        }
        assert_eq!(rt.state, 1);
        assert!(pose.distance_to(0.5, 0.0) <= 0.05 + params.max_speed * params.tick_duration);
    }

    #[test]
    fn commands_respect_max_speed() {
        let params = KinematicsParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for i in 0..2000 {
            let pose = Pose::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-PI..PI));
            let c = steer_toward(&pose, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), &params);
            assert!(c.within(params.max_speed), "{i}: {c:?}");
            let mut rt = ControllerRuntime { wall_contact: i % 7 == 0, ..Default::default() };
            assert!(random_walk_step(&mut rt, &mut rng, &params).within(params.max_speed));
        }
    }

    #[test]
    fn random_walk_turns_after_wall_contact() {
        let params = KinematicsParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rt = ControllerRuntime { wall_contact: true, ..Default::default() };
        let c = random_walk_step(&mut rt, &mut rng, &params);
        assert_eq!(c.left, -c.right);
        assert!(rt.turn_ticks_left < RANDOM_WALK_MAX_TURN_TICKS);
    }

    #[test]
    fn bad_runtime_state_is_an_error() {
        let p = parse_program("state s { stop }").unwrap();
        let mut rt = ControllerRuntime { state: 4, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = exec_controller_tick(&p, &mut rt, &Pose::new(0.0, 0.0, 0.0), &mut rng, &KinematicsParams::default());
        assert_eq!(r, Err(RuntimeError::BadState(4)));
    }
}
