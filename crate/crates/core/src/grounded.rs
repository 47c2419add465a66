//! Grounded environment: the instrumented source environment composed
//! with a visual transformation on observations and an action
//! transformation on incoming actions. Exposes target-styled pixels and
//! passes the source reward through unchanged.
//!
//! Per grounded step the composition is observable and fixed: one visual
//! call on the pre-step observation, one action-transform call, one
//! source step, one visual call on the post-step observation. Counters
//! record each.

use crate::action::{transform_action_deterministic, DeltaAgent, SmoothingConfig};
use crate::env::{
    render::render, DynamicsParams, EnvInstance, Observation, StateSnapshot, StateVector,
    Transition, VisualParams,
};
use crate::error::{Error, Result};
use crate::policy::{PolicyEnv, ProxyEncoder};
use crate::visual::{translate, Translator};

pub enum VisualHook<'a> {
    Identity,
    Learned(&'a Translator),
    /// Ground-truth re-render of the source state under a target visual
    /// spec. Test-harness privilege.
    Oracle(VisualParams),
}

pub enum ActionHook<'a> {
    Identity,
    Learned {
        agent: &'a DeltaAgent,
        proxy: &'a ProxyEncoder,
        smoothing: SmoothingConfig,
    },
    /// Closed-form dynamics-gap transform. Test-harness privilege.
    Oracle(DynamicsParams),
}

pub struct GroundedEnv<'a> {
    pub source: EnvInstance,
    pub visual: VisualHook<'a>,
    pub action: ActionHook<'a>,
    pub g_calls: u64,
    pub f_calls: u64,
    pub source_steps: u64,
}

impl<'a> GroundedEnv<'a> {
    pub fn new(source: EnvInstance, visual: VisualHook<'a>, action: ActionHook<'a>) -> Result<Self> {
        if !source.instrumented {
            return Err(Error::InvalidArgument(
                "grounded env needs an instrumented source".into(),
            ));
        }
        Ok(Self {
            source,
            visual,
            action,
            g_calls: 0,
            f_calls: 0,
            source_steps: 0,
        })
    }

    fn apply_visual(&mut self, o: &Observation, state: &[f32]) -> Result<Observation> {
        self.g_calls += 1;
        match &self.visual {
            VisualHook::Identity => Ok(o.clone()),
            VisualHook::Learned(tr) => translate(tr, o),
            VisualHook::Oracle(vis) => Ok(render(
                self.source.task,
                state,
                vis,
                &self.source.spec.render,
            )),
        }
    }

    fn apply_action(&mut self, obs: &Observation, a: &[f32]) -> Result<Vec<f32>> {
        self.f_calls += 1;
        match &self.action {
            ActionHook::Identity => Ok(a.to_vec()),
            ActionHook::Learned {
                agent,
                proxy,
                smoothing,
            } => {
                let feat = proxy.encode(obs)?;
                transform_action_deterministic(agent, &feat, a, smoothing)
            }
            ActionHook::Oracle(dynamics) => {
                // mirror the target's own order: clamp, transform, clamp
                let clamped: Vec<f32> = a.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
                Ok(dynamics
                    .transform_action(&clamped)
                    .iter()
                    .map(|v| v.clamp(-1.0, 1.0))
                    .collect())
            }
        }
    }

    /// Resets the source and returns the translated observation plus the
    /// raw source state (critic-only channel).
    pub fn grounded_reset(&mut self) -> Result<(Observation, StateVector)> {
        let (o_s, state) = self.source.reset();
        let state = state.expect("source is instrumented");
        let o_t = self.apply_visual(&o_s, &state)?;
        Ok((o_t, state))
    }

    pub fn grounded_step(&mut self, a_t: &[f32]) -> Result<Transition> {
        let o_s = self.source.render_current();
        let state = self.source.state()?;
        let o_t = self.apply_visual(&o_s, &state)?;
        let a_s = self.apply_action(&o_t, a_t)?;
        let tr = self.source.step(&a_s)?;
        self.source_steps += 1;
        let next_state = tr.next_state.clone().expect("source is instrumented");
        let o_t_next = self.apply_visual(&tr.next_obs, &next_state)?;
        Ok(Transition {
            obs: o_t,
            state: tr.state,
            action: a_t.to_vec(),
            // reward passthrough: the grounded reward is the source reward
            reward: tr.reward,
            next_obs: o_t_next,
            next_state: tr.next_state,
            done: tr.done,
        })
    }

    pub fn snapshot(&self) -> StateSnapshot {
        self.source.snapshot()
    }

    /// Restores a captured state and returns the translated observation.
    pub fn reset_from(&mut self, snap: &StateSnapshot) -> Result<Observation> {
        let o_s = self.source.reset_from(snap)?;
        let state = self.source.state()?;
        self.apply_visual(&o_s, &state)
    }

    pub fn episode_done(&self) -> bool {
        self.source.episode_done()
    }
}

impl PolicyEnv for GroundedEnv<'_> {
    fn reset(&mut self) -> Result<(Observation, StateVector)> {
        self.grounded_reset()
    }

    fn step(&mut self, a: &[f32]) -> Result<(Observation, StateVector, f32, bool)> {
        let tr = self.grounded_step(a)?;
        Ok((
            tr.next_obs,
            tr.next_state.expect("source is instrumented"),
            tr.reward.expect("source is instrumented"),
            tr.done,
        ))
    }

    fn action_dim(&self) -> usize {
        self.source.action_dim()
    }

    fn state_dim(&self) -> usize {
        self.source.state_dim()
    }

    fn frame_size(&self) -> (usize, usize) {
        (self.source.spec.render.height, self.source.spec.render.width)
    }
}
