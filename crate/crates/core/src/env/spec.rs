//! Environment parameterization: dynamics gaps and visual style.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::TaskId;

/// Dynamics side of a domain: an action-space transform (rotation of the
/// first two components plus a per-component bias) and physical scales.
#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsParams {
    pub mass_scale: f32,
    pub action_rotation_deg: f32,
    pub action_bias: Vec<f32>,
    pub friction_scale: f32,
}

impl DynamicsParams {
    pub fn identity(action_dim: usize) -> Self {
        Self {
            mass_scale: 1.0,
            action_rotation_deg: 0.0,
            action_bias: vec![0.0; action_dim],
            friction_scale: 1.0,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.mass_scale <= 0.0 || self.friction_scale <= 0.0 {
            return Err(crate::Error::InvalidArgument(
                "mass_scale and friction_scale must be positive".into(),
            ));
        }
        if !(-180.0..=180.0).contains(&self.action_rotation_deg) {
            return Err(crate::Error::InvalidArgument(
                "action_rotation_deg outside [-180, 180]".into(),
            ));
        }
        Ok(())
    }

    /// a_eff = R(rotation) . a + bias; the rotation acts on components
    /// (0, 1) and is the identity for one-dimensional actions.
    pub fn transform_action(&self, a: &[f32]) -> Vec<f32> {
        let mut out = a.to_vec();
        if out.len() >= 2 && self.action_rotation_deg != 0.0 {
            let th = self.action_rotation_deg.to_radians();
            let (s, c) = th.sin_cos();
            let (x, y) = (out[0], out[1]);
            out[0] = c * x - s * y;
            out[1] = s * x + c * y;
        }
        for (o, b) in out.iter_mut().zip(&self.action_bias) {
            *o += b;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VisualParams {
    pub palette_id: u32,
    pub background_id: u32,
    pub camera_tilt_deg: f32,
    pub light_level: f32,
}

impl VisualParams {
    pub fn source() -> Self {
        Self {
            palette_id: 0,
            background_id: 0,
            camera_tilt_deg: 0.0,
            light_level: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RenderParams {
    pub height: usize,
    pub width: usize,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            height: 32,
            width: 32,
        }
    }
}

/// Full parameterization of one environment instance.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSpec {
    pub dynamics: DynamicsParams,
    pub visual: VisualParams,
    pub render: RenderParams,
}

impl DomainSpec {
    pub fn identity(task: TaskId) -> Self {
        Self {
            dynamics: DynamicsParams::identity(task.action_dim()),
            visual: VisualParams::source(),
            render: RenderParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GapLevel {
    Easy,
    Hard,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RandomizationRange {
    Narrow,
    Wide,
}

// Mass ratios mirror the dynamics-gap presets: pendulum target masses
// 50 (easy) and 200 (hard) against a 4.895 source mass; puck masses
// 0.03/0.05 against 0.01, puck friction 3.3/4.4 against 2.
pub const PENDULUM_SOURCE_MASS: f32 = 4.895;
pub const PENDULUM_EASY_MASS: f32 = 50.0;
pub const PENDULUM_HARD_MASS: f32 = 200.0;
pub const PUSH_EASY_MASS_RATIO: f32 = 3.0;
pub const PUSH_HARD_MASS_RATIO: f32 = 5.0;
pub const PUSH_EASY_FRICTION_RATIO: f32 = 3.3 / 2.0;
pub const PUSH_HARD_FRICTION_RATIO: f32 = 4.4 / 2.0;
pub const PUSH_HARD_ROTATION_DEG: f32 = 45.0;
pub const PUSH_HARD_BIAS_Z: f32 = -0.5;

/// Target-domain spec for a task/gap preset. Easy changes palette and
/// lighting only; Hard additionally tilts the camera and switches to a
/// checkered background.
pub fn target_spec(task: TaskId, gap: GapLevel) -> DomainSpec {
    let mut spec = DomainSpec::identity(task);
    spec.visual = match gap {
        GapLevel::Easy => VisualParams {
            palette_id: 1,
            background_id: 0,
            camera_tilt_deg: 0.0,
            light_level: 0.8,
        },
        GapLevel::Hard => VisualParams {
            palette_id: 1,
            background_id: 1,
            camera_tilt_deg: 15.0,
            light_level: 0.6,
        },
    };
    match task {
        TaskId::PointPendulum => {
            spec.dynamics.mass_scale = match gap {
                GapLevel::Easy => PENDULUM_EASY_MASS / PENDULUM_SOURCE_MASS,
                GapLevel::Hard => PENDULUM_HARD_MASS / PENDULUM_SOURCE_MASS,
            };
        }
        TaskId::PointPush => match gap {
            GapLevel::Easy => {
                spec.dynamics.mass_scale = PUSH_EASY_MASS_RATIO;
                spec.dynamics.friction_scale = PUSH_EASY_FRICTION_RATIO;
            }
            GapLevel::Hard => {
                spec.dynamics.mass_scale = PUSH_HARD_MASS_RATIO;
                spec.dynamics.friction_scale = PUSH_HARD_FRICTION_RATIO;
                spec.dynamics.action_rotation_deg = PUSH_HARD_ROTATION_DEG;
                spec.dynamics.action_bias = vec![0.0, 0.0, PUSH_HARD_BIAS_Z];
            }
        },
    }
    spec
}

/// Uniformly sampled spec for domain randomization. Narrow spans
/// source-to-easy parameters, Wide spans source-to-hard.
pub fn randomized_spec(task: TaskId, range: RandomizationRange, rng: &mut ChaCha8Rng) -> DomainSpec {
    let mut spec = DomainSpec::identity(task);
    let wide = range == RandomizationRange::Wide;
    match task {
        TaskId::PointPendulum => {
            let hi = if wide { 220.0 } else { 55.0 };
            spec.dynamics.mass_scale =
                rng.gen_range(4.0 / PENDULUM_SOURCE_MASS..=hi / PENDULUM_SOURCE_MASS);
        }
        TaskId::PointPush => {
            let (mass_hi, fric_hi, rot, bias_lo, bias_hi) = if wide {
                (5.0, 2.2, 45.0, -0.55, 0.55)
            } else {
                (3.3, 1.65, 30.0, -0.55, 0.0)
            };
            spec.dynamics.mass_scale = rng.gen_range(1.0..=mass_hi);
            spec.dynamics.friction_scale = rng.gen_range(1.0..=fric_hi);
            spec.dynamics.action_rotation_deg = rng.gen_range(-rot..=rot);
            spec.dynamics.action_bias = vec![0.0, 0.0, rng.gen_range(bias_lo..=bias_hi)];
        }
    }
    spec.visual.palette_id = rng.gen_range(0..3);
    if wide {
        spec.visual.background_id = rng.gen_range(0..2);
        spec.visual.camera_tilt_deg = rng.gen_range(-15.0..=15.0);
        spec.visual.light_level = rng.gen_range(0.5..=1.0);
    } else {
        spec.visual.light_level = rng.gen_range(0.7..=1.0);
    }
    spec
}
