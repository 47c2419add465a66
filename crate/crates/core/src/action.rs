//! Action transformation learned by adversarial imitation from
//! observation. A delta agent proposes a correction to each policy action
//! so that rolling the corrected action through the source environment
//! produces transitions a discriminator cannot tell apart from real
//! target-domain transitions. The agent is optimized with clipped-ratio
//! policy gradients against the discriminator-derived reward.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::datasets::{Domain, UnpairedDataset};
use crate::env::EnvInstance;
use crate::error::{Error, Result};
use crate::grounded::{ActionHook, GroundedEnv, VisualHook};
use crate::nd::graph::{Graph, NodeId};
use crate::nd::layers::{dense, init_dense};
use crate::nd::params::{Init, ParamSet};
use crate::nd::tensor::Tensor;
use crate::policy::{sample_normal, ProxyEncoder};

const HIDDEN: usize = 1024;
const LN_SQRT_2PI: f32 = 0.918_938_5;
// small initial exploration: corrections start near-identity and the
// grounding signal is local
const LOGSTD_INIT: f32 = -3.0;
// discriminator tuples carry feature deltas amplified to the same order
// of magnitude as the features, so the gap is visible to fresh weights
const DELTA_SCALE: f32 = 10.0;

#[derive(Clone, Copy, Debug)]
pub struct SmoothingConfig {
    pub alpha: f32,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self { alpha: 0.95 }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "smoothing alpha {} outside [0,1]",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// â_i = clamp(a_i + alpha * delta_i).
pub fn smooth_and_clamp(a: &[f32], delta: &[f32], alpha: f32) -> Vec<f32> {
    a.iter()
        .zip(delta)
        .map(|(ai, di)| (ai + alpha * di).clamp(-1.0, 1.0))
        .collect()
}

/// Gaussian policy over action deltas plus a value head for the
/// advantage baseline. Trunk is a 2-layer MLP of width 1024 over
/// (proxy feature ⊕ action); the delta mean is tanh-bounded.
pub struct DeltaAgent {
    pub params: ParamSet,
    pub feature_dim: usize,
    pub action_dim: usize,
}

impl DeltaAgent {
    pub fn new(feature_dim: usize, action_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let in_dim = feature_dim + action_dim;
        init_dense(&mut params, "a1", in_dim, HIDDEN, Init::He, &mut rng);
        init_dense(&mut params, "a2", HIDDEN, HIDDEN, Init::He, &mut rng);
        init_dense(&mut params, "mean", HIDDEN, action_dim, Init::Xavier, &mut rng);
        init_dense(&mut params, "value", HIDDEN, 1, Init::Xavier, &mut rng);
        params.insert(
            "logstd",
            Tensor::new(vec![action_dim], vec![LOGSTD_INIT; action_dim]).expect("shape matches"),
        );
        Self {
            params,
            feature_dim,
            action_dim,
        }
    }

    /// Returns (tanh-bounded delta mean, value, logstd) nodes for a batch
    /// of (feature ⊕ action) rows.
    pub fn heads(
        &self,
        g: &mut Graph,
        x: NodeId,
        trainable: bool,
    ) -> Result<(NodeId, NodeId, NodeId)> {
        let h = dense(g, &self.params, "a1", x, trainable)?;
        let h = g.relu(h)?;
        let h = dense(g, &self.params, "a2", h, trainable)?;
        let h = g.relu(h)?;
        let mean = dense(g, &self.params, "mean", h, trainable)?;
        let mean = g.tanh(mean)?;
        let value = dense(g, &self.params, "value", h, trainable)?;
        let logstd = if trainable {
            g.param(&self.params, "logstd")
        } else {
            g.frozen(&self.params, "logstd")
        };
        Ok((mean, value, logstd))
    }

    /// Single-row forward: (delta mean, delta std, state value).
    pub fn policy_value(&self, x_row: &[f32]) -> Result<(Vec<f32>, Vec<f32>, f32)> {
        let expect = self.feature_dim + self.action_dim;
        if x_row.len() != expect {
            return Err(Error::ShapeMismatch(format!(
                "delta agent input {} vs {}",
                x_row.len(),
                expect
            )));
        }
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![1, expect], x_row.to_vec())?);
        let (mean, value, logstd) = self.heads(&mut g, x, false)?;
        let m = g.value(mean).data().to_vec();
        let s: Vec<f32> = g.value(logstd).data().iter().map(|v| v.exp()).collect();
        let v = g.value(value).data()[0];
        Ok((m, s, v))
    }
}

/// Agent whose mean correction is exactly zero everywhere: the final mean
/// layer is zeroed, so the deterministic transform is the identity.
pub fn identity_init(feature_dim: usize, action_dim: usize, seed: u64) -> DeltaAgent {
    let mut agent = DeltaAgent::new(feature_dim, action_dim, seed);
    let w_shape = agent.params.get("mean.w").shape().to_vec();
    agent.params.insert("mean.w", Tensor::zeros(&w_shape));
    agent.params.insert("mean.b", Tensor::zeros(&[action_dim]));
    agent
}

pub fn transform_action(
    agent: &DeltaAgent,
    feat: &[f32],
    a: &[f32],
    smoothing: &SmoothingConfig,
    stochastic: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f32>> {
    smoothing.validate()?;
    if feat.len() != agent.feature_dim || a.len() != agent.action_dim {
        return Err(Error::ShapeMismatch(format!(
            "transform_action: feat {} action {} vs agent {}+{}",
            feat.len(),
            a.len(),
            agent.feature_dim,
            agent.action_dim
        )));
    }
    let x: Vec<f32> = feat.iter().chain(a).copied().collect();
    let (mean, std, _) = agent.policy_value(&x)?;
    let delta: Vec<f32> = if stochastic {
        mean.iter()
            .zip(&std)
            .map(|(m, s)| m + s * sample_normal(rng))
            .collect()
    } else {
        mean
    };
    Ok(smooth_and_clamp(a, &delta, smoothing.alpha))
}

pub fn transform_action_deterministic(
    agent: &DeltaAgent,
    feat: &[f32],
    a: &[f32],
    smoothing: &SmoothingConfig,
) -> Result<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    transform_action(agent, feat, a, smoothing, false, &mut rng)
}

pub fn encode_target(enc: &ProxyEncoder, o: &crate::env::Observation) -> Result<Vec<f32>> {
    enc.encode(o)
}

/// Composition order is fixed: translate first, then encode.
pub fn encode_source(
    enc: &ProxyEncoder,
    tr: &crate::visual::Translator,
    o: &crate::env::Observation,
) -> Result<Vec<f32>> {
    enc.encode(&crate::visual::translate(tr, o)?)
}

/// Classifies (feature_t, action, feature_{t+1}) tuples as real target
/// transitions versus grounded rollouts. 2-layer MLP of width 1024 with a
/// sigmoid output.
pub struct TransitionDiscriminator {
    pub params: ParamSet,
    pub in_dim: usize,
}

impl TransitionDiscriminator {
    pub fn new(feature_dim: usize, action_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let in_dim = 2 * feature_dim + action_dim;
        init_dense(&mut params, "d1", in_dim, HIDDEN, Init::He, &mut rng);
        init_dense(&mut params, "d2", HIDDEN, HIDDEN, Init::He, &mut rng);
        init_dense(&mut params, "out", HIDDEN, 1, Init::Xavier, &mut rng);
        Self { params, in_dim }
    }

    /// Probability-of-real node, shape (n, 1), values in (0,1).
    pub fn forward(&self, g: &mut Graph, x: NodeId, trainable: bool) -> Result<NodeId> {
        let h = dense(g, &self.params, "d1", x, trainable)?;
        let h = g.relu(h)?;
        let h = dense(g, &self.params, "d2", h, trainable)?;
        let h = g.relu(h)?;
        let o = dense(g, &self.params, "out", h, trainable)?;
        g.sigmoid(o)
    }

    pub fn prob_rows(&self, rows: &[f32], n: usize) -> Result<Vec<f32>> {
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![n, self.in_dim], rows.to_vec())?);
        let p = self.forward(&mut g, x, false)?;
        Ok(g.value(p).data().to_vec())
    }
}

/// Adversarial reward from the discriminator's logit: ln D - ln(1 - D).
/// The log-odds form keeps a usable slope on both sides of 0.5 instead of
/// flattening when the discriminator is confident.
pub fn reward_from_prob(p: f32) -> f32 {
    let p = p.clamp(1e-6, 1.0 - 1e-6);
    p.ln() - (1.0 - p).ln()
}

#[derive(Clone, Copy, Debug)]
pub struct PpoConfig {
    pub rollout_len: usize,
    pub lr: f32,
    pub minibatch: usize,
    pub epochs: usize,
    pub discount: f32,
    pub gae_lambda: f32,
    pub clip: f32,
    pub entropy_coef: f32,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            rollout_len: 5000,
            lr: 3e-4,
            minibatch: 32,
            epochs: 5,
            discount: 0.5,
            gae_lambda: 0.95,
            clip: 0.1,
            entropy_coef: 0.001,
        }
    }
}

/// On-policy transition buffer for the delta agent.
pub struct Rollout {
    pub in_dim: usize,
    pub action_dim: usize,
    pub inputs: Vec<f32>,
    pub deltas: Vec<f32>,
    pub logps: Vec<f32>,
    pub values: Vec<f32>,
    pub rewards: Vec<f32>,
    pub dones: Vec<bool>,
}

impl Rollout {
    pub fn new(in_dim: usize, action_dim: usize) -> Self {
        Self {
            in_dim,
            action_dim,
            inputs: Vec::new(),
            deltas: Vec::new(),
            logps: Vec::new(),
            values: Vec::new(),
            rewards: Vec::new(),
            dones: Vec::new(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        x: &[f32],
        delta: &[f32],
        logp: f32,
        value: f32,
        reward: f32,
        done: bool,
    ) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(delta.len(), self.action_dim);
        self.inputs.extend_from_slice(x);
        self.deltas.extend_from_slice(delta);
        self.logps.push(logp);
        self.values.push(value);
        self.rewards.push(reward);
        self.dones.push(done);
    }

    pub fn len(&self) -> usize {
        self.logps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logps.is_empty()
    }
}

pub fn discounted_return(rewards: &[f32], gamma: f32) -> f32 {
    rewards
        .iter()
        .rev()
        .fold(0.0f32, |acc, r| r + gamma * acc)
}

/// Generalized advantage estimation. Episode boundaries cut the bootstrap;
/// a truncated rollout tail bootstraps with zero.
pub fn gae(
    rewards: &[f32],
    values: &[f32],
    dones: &[bool],
    gamma: f32,
    lambda: f32,
) -> (Vec<f32>, Vec<f32>) {
    let n = rewards.len();
    let mut adv = vec![0.0f32; n];
    let mut carry = 0.0f32;
    for t in (0..n).rev() {
        let next_v = if dones[t] || t + 1 == n { 0.0 } else { values[t + 1] };
        let delta = rewards[t] + gamma * next_v - values[t];
        carry = if dones[t] { delta } else { delta + gamma * lambda * carry };
        adv[t] = carry;
    }
    let returns: Vec<f32> = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct PpoStats {
    pub policy_loss: f32,
    pub value_loss: f32,
    pub entropy: f32,
    /// max over minibatches of mean(clipped surrogate) - mean(unclipped);
    /// nonpositive by construction of the clipped objective
    pub clip_gap_max: f32,
}

pub fn ppo_update(
    agent: &mut DeltaAgent,
    rollout: &Rollout,
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> Result<PpoStats> {
    let n = rollout.len();
    if n < cfg.minibatch {
        return Err(Error::InvalidArgument(format!(
            "rollout of {} below minibatch {}",
            n, cfg.minibatch
        )));
    }
    let (mut adv, returns) = gae(
        &rollout.rewards,
        &rollout.values,
        &rollout.dones,
        cfg.discount,
        cfg.gae_lambda,
    );
    let mean = adv.iter().sum::<f32>() / n as f32;
    let std = (adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f32>() / n as f32).sqrt();
    if std > 1e-6 {
        for a in &mut adv {
            *a = (*a - mean) / std;
        }
    }

    let in_dim = rollout.in_dim;
    let adim = rollout.action_dim;
    let mut stats = PpoStats {
        clip_gap_max: f32::NEG_INFINITY,
        ..Default::default()
    };
    let mut batches = 0usize;
    let mut idx: Vec<usize> = (0..n).collect();
    for _ in 0..cfg.epochs {
        idx.shuffle(rng);
        for chunk in idx.chunks(cfg.minibatch) {
            if chunk.len() < cfg.minibatch {
                continue;
            }
            let m = chunk.len();
            let mut x = Vec::with_capacity(m * in_dim);
            let mut d = Vec::with_capacity(m * adim);
            let mut lp = Vec::with_capacity(m);
            let mut av = Vec::with_capacity(m);
            let mut rt = Vec::with_capacity(m);
            for &i in chunk {
                x.extend_from_slice(&rollout.inputs[i * in_dim..(i + 1) * in_dim]);
                d.extend_from_slice(&rollout.deltas[i * adim..(i + 1) * adim]);
                lp.push(rollout.logps[i]);
                av.push(adv[i]);
                rt.push(returns[i]);
            }

            let mut g = Graph::new();
            let xi = g.input(Tensor::new(vec![m, in_dim], x)?);
            let (mean_n, value_n, logstd_n) = agent.heads(&mut g, xi, true)?;
            let di = g.input(Tensor::new(vec![m, adim], d)?);
            let diff = g.sub(di, mean_n)?;
            let neg_logstd = g.neg(logstd_n)?;
            let inv_std = g.exp(neg_logstd)?;
            let z = g.row_broadcast_mul(diff, inv_std)?;
            let zsq = g.square(z)?;
            let zterm = g.scale(zsq, -0.5)?;
            let per_dim = g.row_broadcast_add(zterm, neg_logstd)?;
            let per_dim = g.add_scalar(per_dim, -LN_SQRT_2PI)?;
            let logp_new = g.row_sum(per_dim)?;

            let logp_old = g.input(Tensor::new(vec![m], lp)?);
            let log_ratio = g.sub(logp_new, logp_old)?;
            let ratio = g.exp(log_ratio)?;
            let adv_n = g.input(Tensor::new(vec![m], av)?);
            let s_unclipped = g.mul(ratio, adv_n)?;
            let clipped_ratio = g.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip)?;
            let s_clipped = g.mul(clipped_ratio, adv_n)?;
            let surr = g.minimum(s_unclipped, s_clipped)?;
            let mean_surr = g.mean_all(surr)?;
            let policy_loss = g.neg(mean_surr)?;

            let ret_n = g.input(Tensor::new(vec![m, 1], rt)?);
            let value_loss = g.mse_loss(value_n, ret_n)?;
            let ent = g.sum_all(logstd_n)?;

            let vterm = g.scale(value_loss, 0.5)?;
            let eterm = g.scale(ent, -cfg.entropy_coef)?;
            let loss = g.add(policy_loss, vterm)?;
            let loss = g.add(loss, eterm)?;
            g.backward(loss)?;
            agent.params.adam_step(&g.param_grads(), cfg.lr)?;

            let unclipped_mean = g.value(s_unclipped).data().iter().sum::<f32>() / m as f32;
            let clipped_mean = g.value(surr).data().iter().sum::<f32>() / m as f32;
            stats.clip_gap_max = stats.clip_gap_max.max(clipped_mean - unclipped_mean);
            stats.policy_loss += g.value(policy_loss).item();
            stats.value_loss += g.value(value_loss).item();
            stats.entropy += g.value(ent).item()
                + adim as f32 * 0.5 * (1.0 + 2.0 * LN_SQRT_2PI);
            batches += 1;
        }
    }
    if batches > 0 {
        stats.policy_loss /= batches as f32;
        stats.value_loss /= batches as f32;
        stats.entropy /= batches as f32;
    }
    Ok(stats)
}

/// Where transition features come from. The pipeline uses the policy's
/// frozen conv encoder; `TrueState` reads ground-truth states and exists
/// only for oracle tests of the adversarial loop itself.
pub enum FeatureSource<'a> {
    Encoder(&'a ProxyEncoder),
    TrueState,
}

impl FeatureSource<'_> {
    fn dim(&self, state_dim: usize) -> usize {
        match self {
            FeatureSource::Encoder(enc) => enc.feature_dim(),
            FeatureSource::TrueState => state_dim,
        }
    }

    fn of_record(&self, ds: &UnpairedDataset, i: usize) -> Result<Vec<f32>> {
        match self {
            FeatureSource::Encoder(enc) => enc.encode(&ds.obs(i)),
            FeatureSource::TrueState => ds
                .state(i)
                .cloned()
                .ok_or(Error::InvalidArgument("dataset carries no states".into())),
        }
    }

    fn of_grounded(
        &self,
        genv: &GroundedEnv,
        obs: &crate::env::Observation,
    ) -> Result<Vec<f32>> {
        match self {
            FeatureSource::Encoder(enc) => enc.encode(obs),
            FeatureSource::TrueState => genv.source.state(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GaratEpochStats {
    pub disc_accuracy: f32,
    pub mean_abs_delta: f32,
    pub mean_reward: f32,
    pub rollout_steps: usize,
}

/// Alternates discriminator updates (real target tuples vs grounded
/// rollouts) with policy-gradient updates of the delta agent. Fake tuples
/// replay the recorded target action sequences through the grounded
/// pipeline from matched initial states. The feature source and visual
/// hook are read-only throughout.
#[allow(clippy::too_many_arguments)]
pub fn garat_train(
    agent: &mut DeltaAgent,
    disc: &mut TransitionDiscriminator,
    features: &FeatureSource,
    visual: VisualHook,
    source: EnvInstance,
    d_t_online: &UnpairedDataset,
    smoothing: &SmoothingConfig,
    cfg: &PpoConfig,
    epochs: usize,
    seed: u64,
) -> Result<Vec<GaratEpochStats>> {
    if d_t_online.is_empty() {
        return Err(Error::EmptyDataset);
    }
    // the pipeline grounds against pixels-only target data; the
    // true-state path is an oracle harness and may feed instrumented data
    if matches!(features, FeatureSource::Encoder(_)) && d_t_online.domain != Domain::Target {
        return Err(Error::InvalidArgument(
            "online grounding data must come from the target".into(),
        ));
    }
    smoothing.validate()?;
    let state_dim = source.state_dim();
    let adim = source.action_dim();
    let feat_dim = features.dim(state_dim);
    if agent.feature_dim != feat_dim || agent.action_dim != adim {
        return Err(Error::ShapeMismatch(format!(
            "agent built for {}+{}, envs give {}+{}",
            agent.feature_dim, agent.action_dim, feat_dim, adim
        )));
    }
    if disc.in_dim != 2 * feat_dim + adim {
        return Err(Error::ShapeMismatch(format!(
            "discriminator input {} vs {}",
            disc.in_dim,
            2 * feat_dim + adim
        )));
    }

    // F trains against a fixed grounded pipeline; its own corrections are
    // injected manually so rollout actions can stay stochastic.
    let mut genv = GroundedEnv::new(source, visual, ActionHook::Identity)?;

    // real-tuple features are fixed for the whole run
    let real_feats: Vec<Vec<f32>> = (0..d_t_online.len())
        .map(|i| features.of_record(d_t_online, i))
        .collect::<Result<_>>()?;
    let real_pairs = d_t_online.adjacent_pairs();
    if real_pairs.is_empty() {
        return Err(Error::InvalidArgument(
            "online data has no within-trajectory transitions".into(),
        ));
    }
    let tuple_dim = disc.in_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = Vec::with_capacity(epochs);

    // With recorded states available the rollout resynchronizes to the
    // real state before every transition, so fake tuples differ from real
    // ones only through the one-step dynamics gap. Pixels-only data has no
    // states to resync to and falls back to whole-trajectory replay.
    let resync = d_t_online.has_states();
    let task = genv.source.task;

    for _ in 0..epochs {
        // fake rollout: replay recorded target actions through the
        // grounded env with the current stochastic F
        let mut rollout = Rollout::new(feat_dim + adim, adim);
        let mut fake_rows: Vec<f32> = Vec::new();
        let mut abs_delta_sum = 0.0f64;
        let trajs = d_t_online.trajectories();
        let mut order: Vec<usize> = (0..trajs.len()).collect();
        // cycle the recorded data until the rollout is full; the stochastic
        // corrections make every pass a fresh sample
        'outer: while rollout.len() < cfg.rollout_len {
            order.shuffle(&mut rng);
            for &tj in &order {
            let (start, end) = trajs[tj];
            let obs = genv.reset_from(d_t_online.init_snapshot(tj))?;
            let mut feat = features.of_grounded(&genv, &obs)?;
            for i in start..end {
                if resync {
                    let snap = crate::env::instance::synth_snapshot(
                        task,
                        d_t_online.state(i).expect("resync requires states").clone(),
                        (i - start) as u32,
                    );
                    genv.reset_from(&snap)?;
                    feat = features.of_record(d_t_online, i)?;
                }
                let a = d_t_online.action(i);
                let x: Vec<f32> = feat.iter().chain(a).copied().collect();
                let (mean, std, value) = agent.policy_value(&x)?;
                let mut delta = vec![0.0f32; adim];
                let mut logp = 0.0f32;
                for j in 0..adim {
                    let eps = sample_normal(&mut rng);
                    delta[j] = mean[j] + std[j] * eps;
                    logp += -0.5 * eps * eps - std[j].ln() - LN_SQRT_2PI;
                }
                abs_delta_sum += delta.iter().map(|d| d.abs() as f64).sum::<f64>();
                let a_hat = smooth_and_clamp(a, &delta, smoothing.alpha);
                let tr = genv.grounded_step(&a_hat)?;
                let next_feat = features.of_grounded(&genv, &tr.next_obs)?;
                let done = resync || i + 1 == end || tr.done;
                fake_rows.extend_from_slice(&feat);
                fake_rows.extend_from_slice(a);
                // the discriminator judges the transition as a feature
                // delta, amplified so the one-step dynamics gap is not
                // buried under the feature magnitudes themselves
                for (n, f) in next_feat.iter().zip(&feat) {
                    fake_rows.push(DELTA_SCALE * (n - f));
                }
                rollout.push(&x, &delta, logp, value, 0.0, done);
                feat = next_feat;
                if rollout.len() >= cfg.rollout_len {
                    break 'outer;
                }
                if !resync && tr.done {
                    break;
                }
            }
            }
        }
        let n_fake = rollout.len();

        // discriminator: real tuples labeled 1, grounded tuples 0. It
        // needs several passes per epoch to track the one-step gap; the
        // accuracy gate below keeps it from running away from the agent.
        let mut correct = 0usize;
        let mut judged = 0usize;
        let iters = (4 * n_fake / cfg.minibatch).max(1);
        for _ in 0..iters {
            let m = cfg.minibatch.min(n_fake);
            let mut xr = Vec::with_capacity(m * tuple_dim);
            for _ in 0..m {
                let i = real_pairs[rng.gen_range(0..real_pairs.len())];
                xr.extend_from_slice(&real_feats[i]);
                xr.extend_from_slice(d_t_online.action(i));
                for (n, f) in real_feats[i + 1].iter().zip(&real_feats[i]) {
                    xr.push(DELTA_SCALE * (n - f));
                }
            }
            let mut xf = Vec::with_capacity(m * tuple_dim);
            for _ in 0..m {
                let i = rng.gen_range(0..n_fake);
                xf.extend_from_slice(&fake_rows[i * tuple_dim..(i + 1) * tuple_dim]);
            }
            // instance noise keeps the decision boundary soft, so the
            // agent's reward stays a usable gradient instead of a step
            for v in xr.iter_mut().chain(xf.iter_mut()) {
                *v += 0.07 * sample_normal(&mut rng);
            }
            let mut g = Graph::new();
            let ri = g.input(Tensor::new(vec![m, tuple_dim], xr)?);
            let pr = disc.forward(&mut g, ri, true)?;
            let ones = g.input(Tensor::new(vec![m, 1], vec![1.0; m])?);
            let lr = g.bce_loss(pr, ones)?;
            let fi = g.input(Tensor::new(vec![m, tuple_dim], xf)?);
            let pf = disc.forward(&mut g, fi, true)?;
            let zeros = g.input(Tensor::new(vec![m, 1], vec![0.0; m])?);
            let lf = g.bce_loss(pf, zeros)?;
            let sum = g.add(lr, lf)?;
            let loss = g.scale(sum, 0.5)?;
            let batch_correct = g.value(pr).data().iter().filter(|&&p| p > 0.5).count()
                + g.value(pf).data().iter().filter(|&&p| p < 0.5).count();
            // a saturated discriminator gives the agent a vanishing
            // reward gradient; stop sharpening it past this point
            if (batch_correct as f32) < 0.8 * (2 * m) as f32 {
                g.backward(loss)?;
                disc.params.adam_step(&g.param_grads(), 2.0 * cfg.lr)?;
            }
            correct += batch_correct;
            judged += 2 * m;
        }

        // agent reward from the updated discriminator
        let probs = disc.prob_rows(&fake_rows, n_fake)?;
        let mut reward_sum = 0.0f64;
        for (r, p) in rollout.rewards.iter_mut().zip(&probs) {
            *r = reward_from_prob(*p);
            reward_sum += *r as f64;
        }
        ppo_update(agent, &rollout, cfg, &mut rng)?;

        stats.push(GaratEpochStats {
            disc_accuracy: correct as f32 / judged.max(1) as f32,
            mean_abs_delta: (abs_delta_sum / (n_fake * adim) as f64) as f32,
            mean_reward: (reward_sum / n_fake as f64) as f32,
            rollout_steps: n_fake,
        });
    }
    Ok(stats)
}

pub fn save_agent(agent: &DeltaAgent, path: &std::path::Path) -> Result<()> {
    crate::nd::checkpoint::save(&agent.params, path)
}

pub fn save_discriminator(disc: &TransitionDiscriminator, path: &std::path::Path) -> Result<()> {
    crate::nd::checkpoint::save(&disc.params, path)
}
