//! Environment instances. A source env is instrumented (state and reward
//! readable); a target env is pixels-only and errors on any state or
//! reward access. A per-instance counter records every step taken so data
//! budgets can be audited.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::physics::{self, HORIZON};
use super::render::render;
use super::spec::{DomainSpec, GapLevel};
use super::types::{Observation, StateVector, Transition};
use super::TaskId;
use crate::error::{Error, Result};

/// Opaque capture of an environment's full state, usable only to restore
/// the same environment type later. The inner state is private so holding
/// a snapshot of a non-instrumented env does not leak its state.
#[derive(Clone, Debug)]
pub struct StateSnapshot {
    pub(crate) task: TaskId,
    pub(crate) state: StateVector,
    pub(crate) elapsed: u32,
}

pub struct EnvInstance {
    pub task: TaskId,
    pub spec: DomainSpec,
    pub instrumented: bool,
    rng: ChaCha8Rng,
    state: StateVector,
    elapsed: u32,
    steps_taken: u64,
}

impl EnvInstance {
    pub fn new(task: TaskId, spec: DomainSpec, instrumented: bool, seed: u64) -> Result<Self> {
        spec.dynamics.validate()?;
        if spec.dynamics.action_bias.len() != task.action_dim() {
            return Err(Error::ActionDim {
                expected: task.action_dim(),
                got: spec.dynamics.action_bias.len(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = physics::sample_init(task, &mut rng);
        Ok(Self {
            task,
            spec,
            instrumented,
            rng,
            state,
            elapsed: 0,
            steps_taken: 0,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.task.action_dim()
    }

    pub fn state_dim(&self) -> usize {
        self.task.state_dim()
    }

    /// Total steps taken over the instance lifetime. Never reset; this is
    /// the data-budget ledger.
    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    pub fn render_current(&self) -> Observation {
        render(self.task, &self.state, &self.spec.visual, &self.spec.render)
    }

    pub fn reset(&mut self) -> (Observation, Option<StateVector>) {
        self.state = physics::sample_init(self.task, &mut self.rng);
        self.elapsed = 0;
        let state = self.instrumented.then(|| self.state.clone());
        (self.render_current(), state)
    }

    pub fn step(&mut self, action: &[f32]) -> Result<Transition> {
        if action.len() != self.action_dim() {
            return Err(Error::ActionDim {
                expected: self.action_dim(),
                got: action.len(),
            });
        }
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("env action".into()));
        }
        let obs = self.render_current();
        let prev = self.state.clone();
        self.state = physics::step(self.task, &prev, action, &self.spec.dynamics);
        self.elapsed += 1;
        self.steps_taken += 1;
        let next_obs = self.render_current();
        let done = self.elapsed >= HORIZON;
        Ok(Transition {
            obs,
            state: self.instrumented.then(|| prev),
            action: action.to_vec(),
            reward: self
                .instrumented
                .then(|| physics::reward(self.task, &self.state)),
            next_obs,
            next_state: self.instrumented.then(|| self.state.clone()),
            done,
        })
    }

    pub fn state(&self) -> Result<StateVector> {
        if !self.instrumented {
            return Err(Error::NotInstrumented("state"));
        }
        Ok(self.state.clone())
    }

    pub fn reward(&self) -> Result<f32> {
        if !self.instrumented {
            return Err(Error::NotInstrumented("reward"));
        }
        Ok(physics::reward(self.task, &self.state))
    }

    pub fn is_success(&self) -> Result<bool> {
        if !self.instrumented {
            return Err(Error::NotInstrumented("success"));
        }
        Ok(physics::is_success(self.task, &self.state))
    }

    pub fn episode_done(&self) -> bool {
        self.elapsed >= HORIZON
    }

    /// Captures the current physical state without exposing it.
    pub fn snapshot(&self) -> StateSnapshot {
        StateSnapshot {
            task: self.task,
            state: self.state.clone(),
            elapsed: self.elapsed,
        }
    }

    /// Restores a previously captured state. The snapshot must come from
    /// an env of the same task.
    pub fn reset_from(&mut self, snap: &StateSnapshot) -> Result<Observation> {
        if snap.task != self.task {
            return Err(Error::InvalidArgument(format!(
                "snapshot for {:?} restored into {:?}",
                snap.task, self.task
            )));
        }
        self.state = snap.state.clone();
        self.elapsed = snap.elapsed;
        Ok(self.render_current())
    }

    /// Restores the lifetime step ledger when resuming a run; the counter
    /// itself never resets otherwise.
    pub(crate) fn restore_ledger(&mut self, steps: u64) {
        self.steps_taken = steps;
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Instrumented copy of this env with the same spec. Test-harness
    /// privilege for computing oracle bounds; the transfer pipeline itself
    /// never calls this on a target env.
    pub fn instrumented_clone(&self, seed: u64) -> Result<EnvInstance> {
        EnvInstance::new(self.task, self.spec.clone(), true, seed)
    }
}

/// Snapshot synthesized from a recorded state, for replaying logged
/// transitions from their exact starting points.
pub(crate) fn synth_snapshot(task: TaskId, state: StateVector, elapsed: u32) -> StateSnapshot {
    StateSnapshot {
        task,
        state,
        elapsed,
    }
}

/// Preset (source, target) pair for a task and gap level. The source spec
/// is the identity.
pub fn make_pair(task: TaskId, gap: GapLevel, seed: u64) -> Result<(EnvInstance, EnvInstance)> {
    let source = EnvInstance::new(task, DomainSpec::identity(task), true, seed)?;
    let target = EnvInstance::new(task, super::spec::target_spec(task, gap), false, seed ^ 0x51)?;
    Ok((source, target))
}
