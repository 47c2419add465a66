//! Task dynamics: semi-implicit Euler at dt = 0.05, horizon 100 steps.
//!
//! Both tasks apply the domain's action-space transform (rotation + bias)
//! before integrating, so a target domain is exactly the source physics
//! driven by a pre-transformed action. That identity is what the grounded
//! environment's oracle tests rely on.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::spec::DynamicsParams;
use super::types::StateVector;
use super::TaskId;

pub const DT: f32 = 0.05;
pub const HORIZON: u32 = 100;

// Pendulum: angle from upright, gravity destabilizes, torque authority
// shrinks with mass_scale.
pub const PENDULUM_GRAVITY: f32 = 5.0;
pub const PENDULUM_TORQUE: f32 = 30.0;
pub const PENDULUM_DAMPING: f32 = 0.5;

// Push: kinematic agent with a height channel; contact with the puck only
// happens when the agent is low enough.
pub const PUSH_AGENT_SPEED: f32 = 1.2;
pub const PUSH_HEIGHT_SPEED: f32 = 1.0;
pub const PUSH_CONTACT_RADIUS: f32 = 0.22;
pub const PUSH_CONTACT_HEIGHT: f32 = 0.4;
pub const PUSH_FORCE: f32 = 8.0;
pub const PUSH_FRICTION: f32 = 2.0;
pub const PUSH_GOAL: (f32, f32) = (0.6, 0.0);
pub const PUSH_SUCCESS_RADIUS: f32 = 0.12;

pub fn state_dim(task: TaskId) -> usize {
    match task {
        TaskId::PointPendulum => 2,
        TaskId::PointPush => 7,
    }
}

pub fn action_dim(task: TaskId) -> usize {
    match task {
        TaskId::PointPendulum => 1,
        TaskId::PointPush => 3,
    }
}

pub fn sample_init(task: TaskId, rng: &mut ChaCha8Rng) -> StateVector {
    match task {
        TaskId::PointPendulum => {
            vec![rng.gen_range(-0.2..=0.2), rng.gen_range(-0.1..=0.1)]
        }
        TaskId::PointPush => {
            let ax = -0.6 + rng.gen_range(-0.05..=0.05);
            let ay = rng.gen_range(-0.05..=0.05);
            let px = rng.gen_range(-0.05..=0.05);
            let py = rng.gen_range(-0.05..=0.05);
            vec![ax, ay, 0.5, px, py, 0.0, 0.0]
        }
    }
}

/// One integration step. The raw action is clamped to [-1,1], the domain's
/// rotation/bias transform is applied, and the effective action is clamped
/// again before driving the physics.
pub fn step(task: TaskId, state: &[f32], action: &[f32], dynamics: &DynamicsParams) -> StateVector {
    let clamped: Vec<f32> = action.iter().map(|a| a.clamp(-1.0, 1.0)).collect();
    let a_eff: Vec<f32> = dynamics
        .transform_action(&clamped)
        .iter()
        .map(|a| a.clamp(-1.0, 1.0))
        .collect();
    match task {
        TaskId::PointPendulum => pendulum_step(state, &a_eff, dynamics),
        TaskId::PointPush => push_step(state, &a_eff, dynamics),
    }
}

fn pendulum_step(state: &[f32], a: &[f32], dynamics: &DynamicsParams) -> StateVector {
    let (theta, omega) = (state[0], state[1]);
    let accel = PENDULUM_GRAVITY * theta.sin()
        + (PENDULUM_TORQUE * a[0] - PENDULUM_DAMPING * dynamics.friction_scale * omega)
            / dynamics.mass_scale;
    let omega2 = omega + DT * accel;
    let mut theta2 = theta + DT * omega2;
    // wrap to (-pi, pi]
    while theta2 > std::f32::consts::PI {
        theta2 -= 2.0 * std::f32::consts::PI;
    }
    while theta2 <= -std::f32::consts::PI {
        theta2 += 2.0 * std::f32::consts::PI;
    }
    vec![theta2, omega2]
}

fn push_step(state: &[f32], a: &[f32], dynamics: &DynamicsParams) -> StateVector {
    let (ax, ay, ah, px, py, pvx, pvy) =
        (state[0], state[1], state[2], state[3], state[4], state[5], state[6]);
    let ax2 = (ax + DT * PUSH_AGENT_SPEED * a[0]).clamp(-1.0, 1.0);
    let ay2 = (ay + DT * PUSH_AGENT_SPEED * a[1]).clamp(-1.0, 1.0);
    let ah2 = (ah + DT * PUSH_HEIGHT_SPEED * a[2]).clamp(0.0, 1.0);

    let (mut pvx2, mut pvy2) = (pvx, pvy);
    let dx = px - ax2;
    let dy = py - ay2;
    let dist = (dx * dx + dy * dy).sqrt();
    if dist < PUSH_CONTACT_RADIUS && ah2 < PUSH_CONTACT_HEIGHT {
        let overlap = PUSH_CONTACT_RADIUS - dist;
        let (nx, ny) = if dist > 1e-6 {
            (dx / dist, dy / dist)
        } else {
            (1.0, 0.0)
        };
        let impulse = PUSH_FORCE * overlap / dynamics.mass_scale * DT;
        pvx2 += nx * impulse;
        pvy2 += ny * impulse;
    }
    let decay = (1.0 - PUSH_FRICTION * dynamics.friction_scale * DT).max(0.0);
    pvx2 *= decay;
    pvy2 *= decay;
    let mut px2 = px + DT * pvx2;
    let mut py2 = py + DT * pvy2;
    if !(-1.0..=1.0).contains(&px2) {
        px2 = px2.clamp(-1.0, 1.0);
        pvx2 = 0.0;
    }
    if !(-1.0..=1.0).contains(&py2) {
        py2 = py2.clamp(-1.0, 1.0);
        pvy2 = 0.0;
    }
    vec![ax2, ay2, ah2, px2, py2, pvx2, pvy2]
}

/// Task reward, a pure function of state. Independent of any visual
/// parameters so the same underlying state scores identically in every
/// domain.
pub fn reward(task: TaskId, state: &[f32]) -> f32 {
    match task {
        TaskId::PointPendulum => -(state[0] * state[0] + 0.1 * state[1] * state[1]),
        TaskId::PointPush => {
            let dx = state[3] - PUSH_GOAL.0;
            let dy = state[4] - PUSH_GOAL.1;
            -(dx * dx + dy * dy).sqrt()
        }
    }
}

pub fn is_success(task: TaskId, state: &[f32]) -> bool {
    match task {
        TaskId::PointPendulum => state[0].abs() < 0.25,
        TaskId::PointPush => {
            let dx = state[3] - PUSH_GOAL.0;
            let dy = state[4] - PUSH_GOAL.1;
            (dx * dx + dy * dy).sqrt() < PUSH_SUCCESS_RADIUS
        }
    }
}
