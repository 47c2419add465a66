//! Paired toy environments with parameterized visual and dynamics gaps.
//! The source environment exposes state and reward; the target exposes
//! pixels only. Both share the same state and action spaces, and the
//! target's dynamics are realized as the source physics driven by a
//! pre-transformed action.

pub mod instance;
pub mod physics;
pub mod render;
pub mod spec;
pub mod types;

pub use instance::{make_pair, EnvInstance, StateSnapshot};
pub use spec::{
    randomized_spec, target_spec, DomainSpec, DynamicsParams, GapLevel, RandomizationRange,
    RenderParams, VisualParams,
};
pub use types::{ActionVector, Observation, StateVector, Transition};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TaskId {
    PointPendulum,
    PointPush,
}

impl TaskId {
    pub fn state_dim(self) -> usize {
        physics::state_dim(self)
    }

    pub fn action_dim(self) -> usize {
        physics::action_dim(self)
    }

    pub fn parse(name: &str) -> crate::Result<Self> {
        match name {
            "pendulum" | "point-pendulum" => Ok(TaskId::PointPendulum),
            "push" | "point-push" => Ok(TaskId::PointPush),
            other => Err(crate::Error::UnknownTask(other.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskId::PointPendulum => "point-pendulum",
            TaskId::PointPush => "point-push",
        }
    }
}
