//! Asymmetric soft actor-critic on pixels. The actor sees stacks of 3
//! randomly cropped frames through a 4-layer conv encoder; the twin
//! critics consume ground-truth state only, so no critic gradient ever
//! reaches the encoder. The entropy coefficient is a fixed constant.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{ActionVector, EnvInstance, Observation, StateVector};
use crate::error::{Error, Result};
use crate::models::{ConvEncoder, TrainMode};
use crate::nd::layers::{dense, init_dense};
use crate::nd::{Graph, Init, NodeId, ParamSet, Tensor};

pub const FRAME_STACK: usize = 3;
/// Crops trim this many pixels from each image dimension.
pub const CROP_MARGIN: usize = 4;
pub const FEATURE_DIM: usize = 50;

const LOG_STD_MIN: f32 = -10.0;
const LOG_STD_MAX: f32 = 2.0;
const LN_SQRT_2PI: f32 = 0.918_938_5;
const LN_2: f32 = std::f32::consts::LN_2;

#[derive(Clone, Copy, Debug)]
pub struct SacConfig {
    pub lr: f32,
    pub batch: usize,
    pub discount: f32,
    pub entropy_coef: f32,
    pub reward_scale: f32,
    pub tau: f32,
    pub replay_capacity: usize,
    /// Uniform-random action steps before the actor takes over.
    pub warmup_steps: usize,
    /// Environment steps between gradient updates.
    pub update_every: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            batch: 32,
            discount: 0.99,
            entropy_coef: 0.001,
            reward_scale: 1.0,
            tau: 0.005,
            replay_capacity: 100_000,
            warmup_steps: 200,
            update_every: 1,
        }
    }
}

/// Policy network: conv encoder (the proxy-feature source) plus a
/// 2-layer MLP head emitting squashed-Gaussian action parameters.
#[derive(Clone)]
pub struct Actor {
    pub params: ParamSet,
    pub enc: ConvEncoder,
    pub action_dim: usize,
    pub frame_h: usize,
    pub frame_w: usize,
}

impl Actor {
    pub fn new(frame_h: usize, frame_w: usize, action_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (crop_h, crop_w) = (frame_h - CROP_MARGIN, frame_w - CROP_MARGIN);
        let enc = ConvEncoder::new("enc", 3 * FRAME_STACK, crop_h, crop_w, FEATURE_DIM);
        let mut params = ParamSet::new();
        enc.init(&mut params, &mut rng);
        init_dense(&mut params, "h1", FEATURE_DIM, 1024, Init::He, &mut rng);
        init_dense(&mut params, "h2", 1024, 1024, Init::He, &mut rng);
        init_dense(&mut params, "mean", 1024, action_dim, Init::Xavier, &mut rng);
        init_dense(&mut params, "logstd", 1024, action_dim, Init::Xavier, &mut rng);
        Self {
            params,
            enc,
            action_dim,
            frame_h,
            frame_w,
        }
    }

    /// (n, 9, crop_h, crop_w) -> (mean, log_std), both (n, action_dim).
    /// log_std is tanh-bounded to [-10, 2].
    pub fn dist(&self, g: &mut Graph, x: NodeId, train: bool) -> Result<(NodeId, NodeId)> {
        let mode = if train { TrainMode::All } else { TrainMode::Frozen };
        let f = self.enc.forward(g, &self.params, x, mode)?;
        let h = dense(g, &self.params, "h1", f, train)?;
        let h = g.relu(h)?;
        let h = dense(g, &self.params, "h2", h, train)?;
        let h = g.relu(h)?;
        let mean = dense(g, &self.params, "mean", h, train)?;
        let raw = dense(g, &self.params, "logstd", h, train)?;
        let t = g.tanh(raw)?;
        let t = g.add_scalar(t, 1.0)?;
        let t = g.scale(t, 0.5 * (LOG_STD_MAX - LOG_STD_MIN))?;
        let log_std = g.add_scalar(t, LOG_STD_MIN)?;
        Ok((mean, log_std))
    }

    /// Reparameterized tanh-Gaussian sample: action in (-1,1)^d and
    /// per-sample log-probability (n,).
    pub fn sample(
        &self,
        g: &mut Graph,
        mean: NodeId,
        log_std: NodeId,
        eps: NodeId,
    ) -> Result<(NodeId, NodeId)> {
        let std = g.exp(log_std)?;
        let noise = g.mul(std, eps)?;
        let u = g.add(mean, noise)?;
        let a = g.tanh(u)?;
        // Gaussian term: -0.5 eps^2 - log_std - ln sqrt(2 pi)
        let e2 = g.square(eps)?;
        let e2 = g.scale(e2, -0.5)?;
        let gterm = g.sub(e2, log_std)?;
        let gterm = g.add_scalar(gterm, -LN_SQRT_2PI)?;
        // tanh correction: -2 (ln 2 - u - softplus(-2u)) per dim
        let mu = g.scale(u, -2.0)?;
        let sp = g.softplus(mu)?;
        let nu = g.neg(u)?;
        let c = g.add_scalar(nu, LN_2)?;
        let c = g.sub(c, sp)?;
        let c = g.scale(c, -2.0)?;
        let per_dim = g.add(gterm, c)?;
        let logp = g.row_sum(per_dim)?;
        Ok((a, logp))
    }

    /// Stochastic action for one frame stack (no gradient).
    pub fn act(&self, stack: &[f32], crop: CropWindow, rng: &mut ChaCha8Rng) -> Result<ActionVector> {
        let x = self.crop_tensor(&[stack], &[crop])?;
        let mut g = Graph::new();
        let xi = g.input(x);
        let (mean, log_std) = self.dist(&mut g, xi, false)?;
        let eps_t = Tensor::new(
            vec![1, self.action_dim],
            (0..self.action_dim).map(|_| sample_normal(rng)).collect(),
        )?;
        let eps = g.input(eps_t);
        let (a, _) = self.sample(&mut g, mean, log_std, eps)?;
        Ok(g.value(a).data().to_vec())
    }

    /// Deterministic action: tanh of the Gaussian mean, center crop.
    pub fn act_deterministic(&self, stack: &[f32]) -> Result<ActionVector> {
        let crop = CropWindow::center(self.frame_h, self.frame_w);
        let x = self.crop_tensor(&[stack], &[crop])?;
        let mut g = Graph::new();
        let xi = g.input(x);
        let (mean, _) = self.dist(&mut g, xi, false)?;
        let a = g.tanh(mean)?;
        Ok(g.value(a).data().to_vec())
    }

    fn crop_tensor(&self, stacks: &[&[f32]], windows: &[CropWindow]) -> Result<Tensor> {
        let (ch, cw) = (self.frame_h - CROP_MARGIN, self.frame_w - CROP_MARGIN);
        let c = 3 * FRAME_STACK;
        let mut data = vec![0.0f32; stacks.len() * c * ch * cw];
        for (k, (stack, win)) in stacks.iter().zip(windows).enumerate() {
            crop_into(
                stack,
                self.frame_h,
                self.frame_w,
                c,
                *win,
                &mut data[k * c * ch * cw..(k + 1) * c * ch * cw],
            );
        }
        Tensor::new(vec![stacks.len(), c, ch, cw], data)
    }
}

/// Crop origin, identical for every frame in a stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropWindow {
    pub dy: usize,
    pub dx: usize,
}

impl CropWindow {
    pub fn random(h: usize, w: usize, rng: &mut ChaCha8Rng) -> Self {
        let _ = (h, w);
        Self {
            dy: rng.gen_range(0..=CROP_MARGIN),
            dx: rng.gen_range(0..=CROP_MARGIN),
        }
    }

    pub fn center(_h: usize, _w: usize) -> Self {
        Self {
            dy: CROP_MARGIN / 2,
            dx: CROP_MARGIN / 2,
        }
    }
}

fn crop_into(src: &[f32], h: usize, w: usize, channels: usize, win: CropWindow, out: &mut [f32]) {
    let (ch, cw) = (h - CROP_MARGIN, w - CROP_MARGIN);
    for c in 0..channels {
        for y in 0..ch {
            let src_off = (c * h + y + win.dy) * w + win.dx;
            let dst_off = (c * ch + y) * cw;
            out[dst_off..dst_off + cw].copy_from_slice(&src[src_off..src_off + cw]);
        }
    }
}

/// Applies one crop window to a whole frame stack. `rng = None` means
/// evaluation mode: deterministic center crop.
pub fn crop_augment(
    stack: &[f32],
    h: usize,
    w: usize,
    rng: Option<&mut ChaCha8Rng>,
) -> Vec<f32> {
    let win = match rng {
        Some(r) => CropWindow::random(h, w, r),
        None => CropWindow::center(h, w),
    };
    let channels = 3 * FRAME_STACK;
    let mut out = vec![0.0f32; channels * (h - CROP_MARGIN) * (w - CROP_MARGIN)];
    crop_into(stack, h, w, channels, win, &mut out);
    out
}

/// Twin state-action value networks plus soft-updated target copies.
/// State-only inputs enforce the asymmetry: pixels never enter a critic.
#[derive(Clone)]
pub struct Critic {
    pub params: ParamSet,
    pub target: ParamSet,
    pub state_dim: usize,
    pub action_dim: usize,
}

const CRITIC_HIDDEN: usize = 256;

impl Critic {
    pub fn new(state_dim: usize, action_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for q in ["q1", "q2"] {
            init_dense(&mut params, &format!("{q}.l1"), state_dim + action_dim, CRITIC_HIDDEN, Init::He, &mut rng);
            init_dense(&mut params, &format!("{q}.l2"), CRITIC_HIDDEN, CRITIC_HIDDEN, Init::He, &mut rng);
            init_dense(&mut params, &format!("{q}.out"), CRITIC_HIDDEN, 1, Init::Xavier, &mut rng);
        }
        let target = params.clone();
        Self {
            params,
            target,
            state_dim,
            action_dim,
        }
    }

    /// One Q head on (state, action) rows -> (n, 1).
    pub fn q(
        g: &mut Graph,
        ps: &ParamSet,
        head: &str,
        state: NodeId,
        action: NodeId,
        trainable: bool,
    ) -> Result<NodeId> {
        let x = g.concat(state, action)?;
        let h = dense(g, ps, &format!("{head}.l1"), x, trainable)?;
        let h = g.relu(h)?;
        let h = dense(g, ps, &format!("{head}.l2"), h, trainable)?;
        let h = g.relu(h)?;
        dense(g, ps, &format!("{head}.out"), h, trainable)
    }

    pub fn soft_update(&mut self, tau: f32) {
        let names: Vec<String> = self.params.names().map(|s| s.to_string()).collect();
        for name in names {
            let src = self.params.get(&name).data().to_vec();
            let dst = self.target.get_mut(&name).data_mut();
            for (d, s) in dst.iter_mut().zip(&src) {
                *d = tau * s + (1.0 - tau) * *d;
            }
        }
    }
}

/// Ring buffer of grounded transitions with u8-quantized frame stacks.
pub struct ReplayBuffer {
    capacity: usize,
    frame_h: usize,
    frame_w: usize,
    state_dim: usize,
    action_dim: usize,
    obs: Vec<u8>,
    next_obs: Vec<u8>,
    states: Vec<f32>,
    next_states: Vec<f32>,
    actions: Vec<f32>,
    rewards: Vec<f32>,
    dones: Vec<bool>,
    len: usize,
    head: usize,
    total_pushes: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, frame_h: usize, frame_w: usize, state_dim: usize, action_dim: usize) -> Self {
        Self {
            capacity,
            frame_h,
            frame_w,
            state_dim,
            action_dim,
            obs: Vec::new(),
            next_obs: Vec::new(),
            states: Vec::new(),
            next_states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            dones: Vec::new(),
            len: 0,
            head: 0,
            total_pushes: 0,
        }
    }

    fn stack_len(&self) -> usize {
        3 * FRAME_STACK * self.frame_h * self.frame_w
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn total_pushes(&self) -> u64 {
        self.total_pushes
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        obs: &[f32],
        state: &[f32],
        action: &[f32],
        reward: f32,
        next_obs: &[f32],
        next_state: &[f32],
        done: bool,
    ) {
        let sl = self.stack_len();
        debug_assert_eq!(obs.len(), sl);
        let quant = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        if self.len < self.capacity {
            self.obs.extend(obs.iter().map(|&v| quant(v)));
            self.next_obs.extend(next_obs.iter().map(|&v| quant(v)));
            self.states.extend_from_slice(state);
            self.next_states.extend_from_slice(next_state);
            self.actions.extend_from_slice(action);
            self.rewards.push(reward);
            self.dones.push(done);
            self.len += 1;
        } else {
            // FIFO overwrite
            let i = self.head;
            for (k, &v) in obs.iter().enumerate() {
                self.obs[i * sl + k] = quant(v);
            }
            for (k, &v) in next_obs.iter().enumerate() {
                self.next_obs[i * sl + k] = quant(v);
            }
            self.states[i * self.state_dim..(i + 1) * self.state_dim].copy_from_slice(state);
            self.next_states[i * self.state_dim..(i + 1) * self.state_dim].copy_from_slice(next_state);
            self.actions[i * self.action_dim..(i + 1) * self.action_dim].copy_from_slice(action);
            self.rewards[i] = reward;
            self.dones[i] = done;
            self.head = (self.head + 1) % self.capacity;
        }
        self.total_pushes += 1;
    }

    pub fn sample_indices(&self, batch: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
        if self.len == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok((0..batch).map(|_| rng.gen_range(0..self.len)).collect())
    }

    fn stack_at<'a>(&'a self, buf: &'a [u8], i: usize) -> impl Iterator<Item = f32> + 'a {
        let sl = self.stack_len();
        buf[i * sl..(i + 1) * sl].iter().map(|&b| b as f32 / 255.0)
    }

    fn cropped_batch(&self, buf: &[u8], idx: &[usize], wins: &[CropWindow]) -> Result<Tensor> {
        let (h, w) = (self.frame_h, self.frame_w);
        let (ch, cw) = (h - CROP_MARGIN, w - CROP_MARGIN);
        let c = 3 * FRAME_STACK;
        let mut full = vec![0.0f32; self.stack_len()];
        let mut data = vec![0.0f32; idx.len() * c * ch * cw];
        for (k, (&i, win)) in idx.iter().zip(wins).enumerate() {
            for (dst, v) in full.iter_mut().zip(self.stack_at(buf, i)) {
                *dst = v;
            }
            crop_into(&full, h, w, c, *win, &mut data[k * c * ch * cw..(k + 1) * c * ch * cw]);
        }
        Tensor::new(vec![idx.len(), c, ch, cw], data)
    }

    fn rows(&self, src: &[f32], d: usize, idx: &[usize]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        Tensor::new(vec![idx.len(), d], data)
    }
}

pub(crate) fn sample_normal(rng: &mut ChaCha8Rng) -> f32 {
    // Box-Muller
    let u1: f32 = rng.gen_range(f32::EPSILON..1.0);
    let u2: f32 = rng.gen_range(0.0..std::f32::consts::TAU);
    (-2.0 * u1.ln()).sqrt() * u2.cos()
}

/// Entropy-regularized Bellman target; terminal transitions do not
/// bootstrap.
pub fn bellman_target(reward: f32, done: bool, min_next_q: f32, next_logp: f32, cfg: &SacConfig) -> f32 {
    let not_done = if done { 0.0 } else { 1.0 };
    let soft_v = min_next_q - cfg.entropy_coef * next_logp;
    reward * cfg.reward_scale + cfg.discount * not_done * soft_v
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SacStats {
    pub critic_loss: f32,
    pub actor_loss: f32,
    pub entropy: f32,
    pub mean_q: f32,
}

/// One asymmetric SAC gradient step: critic regression to the entropy-
/// regularized Bellman target, reparameterized actor update through a
/// frozen critic, then a soft target update.
pub fn sac_update(
    actor: &mut Actor,
    critic: &mut Critic,
    buffer: &ReplayBuffer,
    cfg: &SacConfig,
    rng: &mut ChaCha8Rng,
) -> Result<SacStats> {
    if buffer.len() < cfg.batch {
        return Err(Error::InvalidArgument(format!(
            "replay has {} < batch {}",
            buffer.len(),
            cfg.batch
        )));
    }
    let idx = buffer.sample_indices(cfg.batch, rng)?;
    let wins: Vec<CropWindow> = idx
        .iter()
        .map(|_| CropWindow::random(buffer.frame_h, buffer.frame_w, rng))
        .collect();
    let n = idx.len();
    let adim = buffer.action_dim;

    let states = buffer.rows(&buffer.states, buffer.state_dim, &idx)?;
    let next_states = buffer.rows(&buffer.next_states, buffer.state_dim, &idx)?;
    let actions = buffer.rows(&buffer.actions, adim, &idx)?;

    // next-action sample and entropy-adjusted target value, no gradients
    let (next_a, next_logp) = {
        let x = buffer.cropped_batch(&buffer.next_obs, &idx, &wins)?;
        let mut g = Graph::new();
        let xi = g.input(x);
        let (mean, log_std) = actor.dist(&mut g, xi, false)?;
        let eps_t = Tensor::new(
            vec![n, adim],
            (0..n * adim).map(|_| sample_normal(rng)).collect(),
        )?;
        let eps = g.input(eps_t);
        let (a, logp) = actor.sample(&mut g, mean, log_std, eps)?;
        (g.value(a).clone(), g.value(logp).data().to_vec())
    };
    let min_next_q = {
        let mut g = Graph::new();
        let s = g.input(next_states);
        let a = g.input(next_a);
        let q1 = Critic::q(&mut g, &critic.target, "q1", s, a, false)?;
        let q2 = Critic::q(&mut g, &critic.target, "q2", s, a, false)?;
        let m = g.minimum(q1, q2)?;
        g.value(m).data().to_vec()
    };
    let targets: Vec<f32> = (0..n)
        .map(|k| {
            let i = idx[k];
            bellman_target(buffer.rewards[i], buffer.dones[i], min_next_q[k], next_logp[k], cfg)
        })
        .collect();

    // critic step
    let critic_loss = {
        let mut g = Graph::new();
        let s = g.input(states.clone());
        let a = g.input(actions);
        let y = g.input(Tensor::new(vec![n, 1], targets)?);
        let q1 = Critic::q(&mut g, &critic.params, "q1", s, a, true)?;
        let q2 = Critic::q(&mut g, &critic.params, "q2", s, a, true)?;
        let l1 = g.mse_loss(q1, y)?;
        let l2 = g.mse_loss(q2, y)?;
        let loss = g.add(l1, l2)?;
        let v = g.value(loss).item();
        g.backward(loss)?;
        critic.params.adam_step(&g.param_grads(), cfg.lr)?;
        v
    };

    // actor step: gradients reach the encoder only through this path
    let (actor_loss, entropy, mean_q) = {
        let x = buffer.cropped_batch(&buffer.obs, &idx, &wins)?;
        let mut g = Graph::new();
        let xi = g.input(x);
        let (mean, log_std) = actor.dist(&mut g, xi, true)?;
        let eps_t = Tensor::new(
            vec![n, adim],
            (0..n * adim).map(|_| sample_normal(rng)).collect(),
        )?;
        let eps = g.input(eps_t);
        let (a, logp) = actor.sample(&mut g, mean, log_std, eps)?;
        let s = g.input(states);
        let q1 = Critic::q(&mut g, &critic.params, "q1", s, a, false)?;
        let q2 = Critic::q(&mut g, &critic.params, "q2", s, a, false)?;
        let qmin = g.minimum(q1, q2)?;
        let qflat = g.reshape(qmin, vec![n])?;
        let ent_term = g.scale(logp, cfg.entropy_coef)?;
        let obj = g.sub(ent_term, qflat)?;
        let loss = g.mean_all(obj)?;
        let lv = g.value(loss).item();
        let ent = -g.value(logp).data().iter().sum::<f32>() / n as f32;
        let mq = g.value(qflat).data().iter().sum::<f32>() / n as f32;
        g.backward(loss)?;
        actor.params.adam_step(&g.param_grads(), cfg.lr)?;
        (lv, ent, mq)
    };

    critic.soft_update(cfg.tau);
    Ok(SacStats {
        critic_loss,
        actor_loss,
        entropy,
        mean_q,
    })
}

/// Environment interface for policy training. Implementations are always
/// instrumented (state and reward available): the raw source, the
/// grounded environment, randomized source variants, and the oracle
/// target clone all qualify.
pub trait PolicyEnv {
    fn reset(&mut self) -> Result<(Observation, StateVector)>;
    fn step(&mut self, a: &[f32]) -> Result<(Observation, StateVector, f32, bool)>;
    fn action_dim(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn frame_size(&self) -> (usize, usize);
}

/// Adapter making an instrumented EnvInstance trainable.
pub struct InstrumentedEnv<'a>(pub &'a mut EnvInstance);

impl PolicyEnv for InstrumentedEnv<'_> {
    fn reset(&mut self) -> Result<(Observation, StateVector)> {
        let (obs, state) = self.0.reset();
        let state = state.ok_or(Error::NotInstrumented("state"))?;
        Ok((obs, state))
    }

    fn step(&mut self, a: &[f32]) -> Result<(Observation, StateVector, f32, bool)> {
        let tr = self.0.step(a)?;
        Ok((
            tr.next_obs,
            tr.next_state.ok_or(Error::NotInstrumented("state"))?,
            tr.reward.ok_or(Error::NotInstrumented("reward"))?,
            tr.done,
        ))
    }

    fn action_dim(&self) -> usize {
        self.0.action_dim()
    }

    fn state_dim(&self) -> usize {
        self.0.state_dim()
    }

    fn frame_size(&self) -> (usize, usize) {
        (self.0.spec.render.height, self.0.spec.render.width)
    }
}

/// Rolling stack of the last 3 frames; a reset repeats the first frame.
pub struct FrameStack {
    frames: VecDeque<Vec<f32>>,
    h: usize,
    w: usize,
}

impl FrameStack {
    pub fn new(h: usize, w: usize) -> Self {
        Self {
            frames: VecDeque::new(),
            h,
            w,
        }
    }

    pub fn reset(&mut self, obs: &Observation) {
        self.frames.clear();
        for _ in 0..FRAME_STACK {
            self.frames.push_back(obs.pixels.clone());
        }
    }

    pub fn push(&mut self, obs: &Observation) {
        self.frames.pop_front();
        self.frames.push_back(obs.pixels.clone());
    }

    /// Channel-concatenated (9, h, w) stack, oldest frame first.
    pub fn stacked(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(3 * FRAME_STACK * self.h * self.w);
        for f in &self.frames {
            out.extend_from_slice(f);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TrainPolicyStats {
    pub env_steps: u64,
    pub updates: u64,
    pub episodes: u64,
    pub mean_episode_return: f32,
    pub last: SacStats,
}

/// Interleaved environment interaction and SAC updates. The returned
/// stats include the replay push counter, which equals `steps` exactly.
pub fn train_policy(
    actor: &mut Actor,
    critic: &mut Critic,
    buffer: &mut ReplayBuffer,
    env: &mut dyn PolicyEnv,
    steps: usize,
    cfg: &SacConfig,
    seed: u64,
) -> Result<TrainPolicyStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = env.frame_size();
    let mut stack = FrameStack::new(h, w);
    let mut stats = TrainPolicyStats::default();
    if steps == 0 {
        return Ok(stats);
    }
    let adim = env.action_dim();
    let (obs, mut state) = env.reset()?;
    stack.reset(&obs);
    let mut ep_return = 0.0f32;
    let mut returns: Vec<f32> = Vec::new();
    for step in 0..steps {
        let cur = stack.stacked();
        let action: ActionVector = if buffer.len() < cfg.warmup_steps {
            (0..adim).map(|_| rng.gen_range(-1.0..=1.0)).collect()
        } else {
            let win = CropWindow::random(h, w, &mut rng);
            actor.act(&cur, win, &mut rng)?
        };
        let (next_obs, next_state, reward, done) = env.step(&action)?;
        stack.push(&next_obs);
        let next = stack.stacked();
        buffer.push(&cur, &state, &action, reward, &next, &next_state, done);
        stats.env_steps += 1;
        ep_return += reward;
        state = next_state;
        if done {
            returns.push(ep_return);
            ep_return = 0.0;
            stats.episodes += 1;
            let (obs, s) = env.reset()?;
            stack.reset(&obs);
            state = s;
        }
        if buffer.len() >= cfg.batch.max(cfg.warmup_steps) && (step + 1) % cfg.update_every == 0 {
            stats.last = sac_update(actor, critic, buffer, cfg, &mut rng)?;
            stats.updates += 1;
        }
    }
    if !returns.is_empty() {
        stats.mean_episode_return = returns.iter().sum::<f32>() / returns.len() as f32;
    }
    Ok(stats)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct EvalResult {
    pub mean_return: f32,
    pub std_return: f32,
    pub success_rate: f32,
    pub episodes: u32,
}

/// Deterministic evaluation: center crop, Gaussian-mean actions. The
/// environment must be instrumented (evaluation is harness privilege for
/// target domains).
pub fn evaluate(
    actor: &Actor,
    env: &mut EnvInstance,
    episodes: usize,
    seed: u64,
) -> Result<EvalResult> {
    env.reseed(seed);
    let (h, w) = (env.spec.render.height, env.spec.render.width);
    let mut stack = FrameStack::new(h, w);
    let mut returns = Vec::with_capacity(episodes);
    let mut successes = 0u32;
    for _ in 0..episodes {
        let (obs, _) = env.reset();
        stack.reset(&obs);
        let mut total = 0.0f32;
        loop {
            let a = actor.act_deterministic(&stack.stacked())?;
            let tr = env.step(&a)?;
            total += tr.reward.ok_or(Error::NotInstrumented("reward"))?;
            stack.push(&tr.next_obs);
            if tr.done {
                break;
            }
        }
        if env.is_success()? {
            successes += 1;
        }
        returns.push(total);
    }
    let n = returns.len() as f32;
    let mean = returns.iter().sum::<f32>() / n;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f32>() / n;
    Ok(EvalResult {
        mean_return: mean,
        std_return: var.sqrt(),
        success_rate: successes as f32 / n,
        episodes: episodes as u32,
    })
}

/// Frozen copy of the actor's conv encoder, the proxy-state feature
/// extractor used by the action transformation.
#[derive(Clone)]
pub struct ProxyEncoder {
    pub params: ParamSet,
    enc: ConvEncoder,
    frame_h: usize,
    frame_w: usize,
}

impl ProxyEncoder {
    pub fn from_actor(actor: &Actor) -> Self {
        let mut params = ParamSet::new();
        crate::models::copy_params_with_prefix(&actor.params, &mut params, "enc.");
        Self {
            params,
            enc: actor.enc.clone(),
            frame_h: actor.frame_h,
            frame_w: actor.frame_w,
        }
    }

    /// 50-dim feature of a single frame: center crop, repeat to fill the
    /// stack, frozen forward pass.
    pub fn encode(&self, obs: &Observation) -> Result<Vec<f32>> {
        let mut stack = FrameStack::new(self.frame_h, self.frame_w);
        stack.reset(obs);
        self.encode_stack(&stack.stacked())
    }

    pub fn encode_stack(&self, stacked: &[f32]) -> Result<Vec<f32>> {
        let cropped = crop_augment(stacked, self.frame_h, self.frame_w, None);
        let (ch, cw) = (self.frame_h - CROP_MARGIN, self.frame_w - CROP_MARGIN);
        let x = Tensor::new(vec![1, 3 * FRAME_STACK, ch, cw], cropped)?;
        let mut g = Graph::new();
        let xi = g.input(x);
        let f = self.enc.forward(&mut g, &self.params, xi, TrainMode::Frozen)?;
        Ok(g.value(f).data().to_vec())
    }

    pub fn feature_dim(&self) -> usize {
        self.enc.feat_dim
    }
}

#[cfg(test)]
mod tests;
