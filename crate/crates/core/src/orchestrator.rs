//! End-to-end experiment driver: configuration, metric records, the
//! iterative grounding loop, transfer baselines, and normalized
//! evaluation against oracle bounds.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;

use crate::action::{
    garat_train, identity_init, DeltaAgent, FeatureSource, PpoConfig, SmoothingConfig,
    TransitionDiscriminator,
};
use crate::datasets::{
    collect, finetune_set, ActionSource, CollectionPolicy, Domain, FinetuneMode, Provenance,
    UnpairedDataset,
};
use crate::env::{
    make_pair, randomized_spec, DomainSpec, EnvInstance, GapLevel, Observation,
    RandomizationRange, StateVector, TaskId,
};
use crate::error::{Error, Result};
use crate::grounded::{ActionHook, GroundedEnv, VisualHook};
use crate::policy::{
    evaluate, train_policy, Actor, CropWindow, Critic, FrameStack, PolicyEnv, ProxyEncoder,
    ReplayBuffer, SacConfig,
};
use crate::visual::{
    init_target_predictor, pretrain_source_predictor, train_translator, StatePredictor,
    Translator, VisualLossConfig,
};

// ---- configuration ----

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CollectKind {
    Random,
    Scripted,
}

impl CollectKind {
    fn name(self) -> &'static str {
        match self {
            CollectKind::Random => "random",
            CollectKind::Scripted => "scripted",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(CollectKind::Random),
            "scripted" => Ok(CollectKind::Scripted),
            other => Err(Error::InvalidConfig(format!("collection_policy {other}"))),
        }
    }
}

pub fn gap_name(gap: GapLevel) -> &'static str {
    match gap {
        GapLevel::Easy => "easy",
        GapLevel::Hard => "hard",
    }
}

pub fn gap_parse(s: &str) -> Result<GapLevel> {
    match s {
        "easy" => Ok(GapLevel::Easy),
        "hard" => Ok(GapLevel::Hard),
        other => Err(Error::InvalidConfig(format!("gap_level {other}"))),
    }
}

#[derive(Clone, Debug)]
pub struct VisualSection {
    pub pretrain_epochs: usize,
    pub train_epochs: usize,
    pub finetune_epochs: usize,
    pub lr: f32,
    pub batch: usize,
    pub lambda_reg: f32,
    pub cycle_weight: f32,
    pub adversarial_weight: f32,
}

impl Default for VisualSection {
    fn default() -> Self {
        Self {
            pretrain_epochs: 40,
            train_epochs: 40,
            finetune_epochs: 5,
            lr: 3e-4,
            batch: 16,
            lambda_reg: 10.0,
            cycle_weight: 10.0,
            adversarial_weight: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PolicySection {
    /// Grounded-environment interaction budget per grounding iteration.
    /// Desk-scale default; the source side is cheap so this is tunable.
    pub steps_per_iteration: usize,
    pub lr: f32,
    pub batch: usize,
    pub discount: f32,
    pub entropy_coef: f32,
    pub reward_scale: f32,
    pub tau: f32,
    pub replay_capacity: usize,
    pub warmup_steps: usize,
    pub update_every: usize,
}

impl Default for PolicySection {
    fn default() -> Self {
        let sac = SacConfig::default();
        Self {
            steps_per_iteration: 2000,
            lr: sac.lr,
            batch: sac.batch,
            discount: sac.discount,
            entropy_coef: sac.entropy_coef,
            reward_scale: sac.reward_scale,
            tau: sac.tau,
            replay_capacity: sac.replay_capacity,
            warmup_steps: sac.warmup_steps,
            update_every: sac.update_every,
        }
    }
}

impl PolicySection {
    pub fn sac(&self) -> SacConfig {
        SacConfig {
            lr: self.lr,
            batch: self.batch,
            discount: self.discount,
            entropy_coef: self.entropy_coef,
            reward_scale: self.reward_scale,
            tau: self.tau,
            replay_capacity: self.replay_capacity,
            warmup_steps: self.warmup_steps,
            update_every: self.update_every,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ActionSection {
    pub garat_epochs: usize,
    pub smoothing_alpha: f32,
    pub rollout_len: usize,
    pub lr: f32,
    pub minibatch: usize,
    pub epochs: usize,
    pub discount: f32,
    pub gae_lambda: f32,
    pub clip: f32,
    pub entropy_coef: f32,
}

impl Default for ActionSection {
    fn default() -> Self {
        let ppo = PpoConfig::default();
        Self {
            garat_epochs: 10,
            smoothing_alpha: 0.95,
            rollout_len: ppo.rollout_len,
            lr: ppo.lr,
            minibatch: ppo.minibatch,
            epochs: ppo.epochs,
            discount: ppo.discount,
            gae_lambda: ppo.gae_lambda,
            clip: ppo.clip,
            entropy_coef: ppo.entropy_coef,
        }
    }
}

impl ActionSection {
    pub fn ppo(&self) -> PpoConfig {
        PpoConfig {
            rollout_len: self.rollout_len,
            lr: self.lr,
            minibatch: self.minibatch,
            epochs: self.epochs,
            discount: self.discount,
            gae_lambda: self.gae_lambda,
            clip: self.clip,
            entropy_coef: self.entropy_coef,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub task: TaskId,
    pub gap: GapLevel,
    pub n_grounding_steps: usize,
    pub task_agnostic_size: usize,
    pub online_size: usize,
    pub collection: CollectKind,
    pub lambda_zero: bool,
    pub no_action_transform: bool,
    pub accumulate_data: bool,
    pub eval_episodes: usize,
    pub visual: VisualSection,
    pub policy: PolicySection,
    pub action: ActionSection,
}

impl ExperimentConfig {
    /// Defaults for a task/gap pair: 1 grounding iteration on the easy
    /// gap, 5 on the hard gap.
    pub fn preset(task: TaskId, gap: GapLevel) -> Self {
        Self {
            task,
            gap,
            n_grounding_steps: match gap {
                GapLevel::Easy => 1,
                GapLevel::Hard => 5,
            },
            task_agnostic_size: 20_000,
            online_size: 1_000,
            collection: CollectKind::Random,
            lambda_zero: false,
            no_action_transform: false,
            accumulate_data: false,
            eval_episodes: 100,
            visual: VisualSection::default(),
            policy: PolicySection::default(),
            action: ActionSection::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_grounding_steps == 0 {
            return Err(Error::InvalidConfig("n_grounding_steps must be >= 1".into()));
        }
        if self.task_agnostic_size == 0 || self.online_size == 0 || self.eval_episodes == 0 {
            return Err(Error::InvalidConfig("sizes must be > 0".into()));
        }
        self.visual_loss().validate()?;
        SmoothingConfig {
            alpha: self.action.smoothing_alpha,
        }
        .validate()?;
        Ok(())
    }

    pub fn visual_loss(&self) -> VisualLossConfig {
        VisualLossConfig {
            lambda_reg: if self.lambda_zero {
                0.0
            } else {
                self.visual.lambda_reg
            },
            cycle_weight: self.visual.cycle_weight,
            adversarial_weight: self.visual.adversarial_weight,
            batch: self.visual.batch,
        }
    }

    /// Canonical text form: fixed section and key order, one `key = value`
    /// per line. Hashing and round-tripping go through this.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[experiment]");
        let _ = writeln!(s, "task = {}", self.task.name());
        let _ = writeln!(s, "gap_level = {}", gap_name(self.gap));
        let _ = writeln!(s, "n_grounding_steps = {}", self.n_grounding_steps);
        let _ = writeln!(s, "task_agnostic_size = {}", self.task_agnostic_size);
        let _ = writeln!(s, "online_size = {}", self.online_size);
        let _ = writeln!(s, "collection_policy = {}", self.collection.name());
        let _ = writeln!(s, "lambda_zero = {}", self.lambda_zero);
        let _ = writeln!(s, "no_action_transform = {}", self.no_action_transform);
        let _ = writeln!(s, "accumulate_data = {}", self.accumulate_data);
        let _ = writeln!(s, "eval_episodes = {}", self.eval_episodes);
        let _ = writeln!(s, "[visual]");
        let _ = writeln!(s, "pretrain_epochs = {}", self.visual.pretrain_epochs);
        let _ = writeln!(s, "train_epochs = {}", self.visual.train_epochs);
        let _ = writeln!(s, "finetune_epochs = {}", self.visual.finetune_epochs);
        let _ = writeln!(s, "lr = {}", self.visual.lr);
        let _ = writeln!(s, "batch = {}", self.visual.batch);
        let _ = writeln!(s, "lambda_reg = {}", self.visual.lambda_reg);
        let _ = writeln!(s, "cycle_weight = {}", self.visual.cycle_weight);
        let _ = writeln!(s, "adversarial_weight = {}", self.visual.adversarial_weight);
        let _ = writeln!(s, "[policy]");
        let _ = writeln!(s, "steps_per_iteration = {}", self.policy.steps_per_iteration);
        let _ = writeln!(s, "lr = {}", self.policy.lr);
        let _ = writeln!(s, "batch = {}", self.policy.batch);
        let _ = writeln!(s, "discount = {}", self.policy.discount);
        let _ = writeln!(s, "entropy_coef = {}", self.policy.entropy_coef);
        let _ = writeln!(s, "reward_scale = {}", self.policy.reward_scale);
        let _ = writeln!(s, "tau = {}", self.policy.tau);
        let _ = writeln!(s, "replay_capacity = {}", self.policy.replay_capacity);
        let _ = writeln!(s, "warmup_steps = {}", self.policy.warmup_steps);
        let _ = writeln!(s, "update_every = {}", self.policy.update_every);
        let _ = writeln!(s, "[action]");
        let _ = writeln!(s, "garat_epochs = {}", self.action.garat_epochs);
        let _ = writeln!(s, "smoothing_alpha = {}", self.action.smoothing_alpha);
        let _ = writeln!(s, "rollout_len = {}", self.action.rollout_len);
        let _ = writeln!(s, "lr = {}", self.action.lr);
        let _ = writeln!(s, "minibatch = {}", self.action.minibatch);
        let _ = writeln!(s, "epochs = {}", self.action.epochs);
        let _ = writeln!(s, "discount = {}", self.action.discount);
        let _ = writeln!(s, "gae_lambda = {}", self.action.gae_lambda);
        let _ = writeln!(s, "clip = {}", self.action.clip);
        let _ = writeln!(s, "entropy_coef = {}", self.action.entropy_coef);
        s
    }

    pub fn hash(&self) -> u64 {
        fnv1a64(self.canonical_text().as_bytes())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: Vec<(String, String, String)> = Vec::new();
        let mut section = String::from("experiment");
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected key = value", lineno + 1))
            })?;
            pairs.push((section.clone(), k.trim().to_string(), v.trim().to_string()));
        }

        let find = |sec: &str, key: &str| -> Option<&str> {
            pairs
                .iter()
                .find(|(s, k, _)| s == sec && k == key)
                .map(|(_, _, v)| v.as_str())
        };
        let task = TaskId::parse(
            find("experiment", "task")
                .ok_or_else(|| Error::InvalidConfig("missing experiment.task".into()))?,
        )?;
        let gap = gap_parse(
            find("experiment", "gap_level")
                .ok_or_else(|| Error::InvalidConfig("missing experiment.gap_level".into()))?,
        )?;
        let mut cfg = ExperimentConfig::preset(task, gap);

        for (sec, key, val) in &pairs {
            let handled = match (sec.as_str(), key.as_str()) {
                ("experiment", "task") | ("experiment", "gap_level") => true,
                ("experiment", "n_grounding_steps") => set_usize(&mut cfg.n_grounding_steps, val)?,
                ("experiment", "task_agnostic_size") => set_usize(&mut cfg.task_agnostic_size, val)?,
                ("experiment", "online_size") => set_usize(&mut cfg.online_size, val)?,
                ("experiment", "collection_policy") => {
                    cfg.collection = CollectKind::parse(val)?;
                    true
                }
                ("experiment", "lambda_zero") => set_bool(&mut cfg.lambda_zero, val)?,
                ("experiment", "no_action_transform") => set_bool(&mut cfg.no_action_transform, val)?,
                ("experiment", "accumulate_data") => set_bool(&mut cfg.accumulate_data, val)?,
                ("experiment", "eval_episodes") => set_usize(&mut cfg.eval_episodes, val)?,
                ("visual", "pretrain_epochs") => set_usize(&mut cfg.visual.pretrain_epochs, val)?,
                ("visual", "train_epochs") => set_usize(&mut cfg.visual.train_epochs, val)?,
                ("visual", "finetune_epochs") => set_usize(&mut cfg.visual.finetune_epochs, val)?,
                ("visual", "lr") => set_f32(&mut cfg.visual.lr, val)?,
                ("visual", "batch") => set_usize(&mut cfg.visual.batch, val)?,
                ("visual", "lambda_reg") => set_f32(&mut cfg.visual.lambda_reg, val)?,
                ("visual", "cycle_weight") => set_f32(&mut cfg.visual.cycle_weight, val)?,
                ("visual", "adversarial_weight") => set_f32(&mut cfg.visual.adversarial_weight, val)?,
                ("policy", "steps_per_iteration") => {
                    set_usize(&mut cfg.policy.steps_per_iteration, val)?
                }
                ("policy", "lr") => set_f32(&mut cfg.policy.lr, val)?,
                ("policy", "batch") => set_usize(&mut cfg.policy.batch, val)?,
                ("policy", "discount") => set_f32(&mut cfg.policy.discount, val)?,
                ("policy", "entropy_coef") => set_f32(&mut cfg.policy.entropy_coef, val)?,
                ("policy", "reward_scale") => set_f32(&mut cfg.policy.reward_scale, val)?,
                ("policy", "tau") => set_f32(&mut cfg.policy.tau, val)?,
                ("policy", "replay_capacity") => set_usize(&mut cfg.policy.replay_capacity, val)?,
                ("policy", "warmup_steps") => set_usize(&mut cfg.policy.warmup_steps, val)?,
                ("policy", "update_every") => set_usize(&mut cfg.policy.update_every, val)?,
                ("action", "garat_epochs") => set_usize(&mut cfg.action.garat_epochs, val)?,
                ("action", "smoothing_alpha") => set_f32(&mut cfg.action.smoothing_alpha, val)?,
                ("action", "rollout_len") => set_usize(&mut cfg.action.rollout_len, val)?,
                ("action", "lr") => set_f32(&mut cfg.action.lr, val)?,
                ("action", "minibatch") => set_usize(&mut cfg.action.minibatch, val)?,
                ("action", "epochs") => set_usize(&mut cfg.action.epochs, val)?,
                ("action", "discount") => set_f32(&mut cfg.action.discount, val)?,
                ("action", "gae_lambda") => set_f32(&mut cfg.action.gae_lambda, val)?,
                ("action", "clip") => set_f32(&mut cfg.action.clip, val)?,
                ("action", "entropy_coef") => set_f32(&mut cfg.action.entropy_coef, val)?,
                _ => {
                    return Err(Error::InvalidConfig(format!("unknown key {sec}.{key}")));
                }
            };
            let _ = handled;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set_usize(slot: &mut usize, v: &str) -> Result<bool> {
    *slot = v
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad integer {v}")))?;
    Ok(true)
}

fn set_f32(slot: &mut f32, v: &str) -> Result<bool> {
    *slot = v
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad float {v}")))?;
    Ok(true)
}

fn set_bool(slot: &mut bool, v: &str) -> Result<bool> {
    *slot = match v {
        "true" | "1" => true,
        "false" | "0" => false,
        _ => return Err(Error::InvalidConfig(format!("bad bool {v}"))),
    };
    Ok(true)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Deterministic per-phase RNG seed: mixing the run seed with a phase tag
/// and iteration keeps streams independent and resumable.
pub fn derive_seed(seed: u64, tag: &str, iteration: u64) -> u64 {
    let mut buf = seed.to_le_bytes().to_vec();
    buf.extend_from_slice(tag.as_bytes());
    buf.extend_from_slice(&iteration.to_le_bytes());
    fnv1a64(&buf)
}

// ---- run records ----

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub iteration: u32,
    pub phase: String,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
}

pub const CSV_HEADER: &str = "iteration,phase,metric,value,seed";

#[derive(Clone, Debug)]
pub struct RunRecord {
    pub config_hash: u64,
    pub seed: u64,
    pub provenance: String,
    pub rows: Vec<MetricRow>,
    pub checkpoint_dir: Option<PathBuf>,
}

impl RunRecord {
    pub fn new(cfg: &ExperimentConfig, seed: u64, label: &str) -> Self {
        let hash = cfg.hash();
        Self {
            config_hash: hash,
            seed,
            provenance: format!(
                "{label} cfg={hash:016x} task={} gap={} seed={seed}",
                cfg.task.name(),
                gap_name(cfg.gap)
            ),
            rows: Vec::new(),
            checkpoint_dir: None,
        }
    }

    pub fn log(&mut self, iteration: u32, phase: &str, metric: &str, value: f64) {
        self.rows.push(MetricRow {
            iteration,
            phase: phase.to_string(),
            metric: metric.to_string(),
            value,
            seed: self.seed,
        });
    }

    /// Phase markers record the execution trace in Algorithm order.
    pub fn mark(&mut self, iteration: u32, phase: &str) {
        self.log(iteration, phase, "phase_start", 1.0);
    }

    pub fn phase_trace(&self) -> Vec<(u32, String)> {
        self.rows
            .iter()
            .filter(|r| r.metric == "phase_start")
            .map(|r| (r.iteration, r.phase.clone()))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{}", r.iteration, r.phase, r.metric, r.value, r.seed);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str, config_hash: u64, provenance: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut seed = 0;
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                if line != CSV_HEADER {
                    return Err(Error::Checkpoint(format!("bad CSV header {line}")));
                }
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 5 {
                return Err(Error::Checkpoint(format!("bad CSV row {line}")));
            }
            let row = MetricRow {
                iteration: parts[0]
                    .parse()
                    .map_err(|_| Error::Checkpoint("bad iteration".into()))?,
                phase: parts[1].to_string(),
                metric: parts[2].to_string(),
                value: parts[3]
                    .parse()
                    .map_err(|_| Error::Checkpoint("bad value".into()))?,
                seed: parts[4]
                    .parse()
                    .map_err(|_| Error::Checkpoint("bad seed".into()))?,
            };
            seed = row.seed;
            rows.push(row);
        }
        Ok(Self {
            config_hash,
            seed,
            provenance: provenance.to_string(),
            rows,
            checkpoint_dir: None,
        })
    }
}

pub fn normalized_return(r: f32, r_lb: f32, r_ub: f32) -> Result<f32> {
    if r_ub <= r_lb {
        return Err(Error::InvalidArgument(format!(
            "upper bound {r_ub} not above lower bound {r_lb}"
        )));
    }
    Ok((r - r_lb) / (r_ub - r_lb))
}

// ---- policy rollout adapters ----

/// Lets the stochastic policy drive dataset collection: maintains the
/// frame stack and samples actions with random crop windows.
pub struct PolicySource<'a> {
    actor: &'a Actor,
    stack: FrameStack,
    frame_h: usize,
    frame_w: usize,
    fresh: bool,
}

impl<'a> PolicySource<'a> {
    pub fn new(actor: &'a Actor, frame_h: usize, frame_w: usize) -> Self {
        Self {
            actor,
            stack: FrameStack::new(frame_h, frame_w),
            frame_h,
            frame_w,
            fresh: true,
        }
    }
}

impl ActionSource for PolicySource<'_> {
    fn begin_episode(&mut self) {
        self.fresh = true;
    }

    fn act(&mut self, obs: &Observation, rng: &mut ChaCha8Rng) -> Vec<f32> {
        if self.fresh {
            self.stack.reset(obs);
            self.fresh = false;
        } else {
            self.stack.push(obs);
        }
        let win = CropWindow::random(self.frame_h, self.frame_w, rng);
        self.actor
            .act(&self.stack.stacked(), win, rng)
            .expect("actor forward on collected frames")
    }
}

/// Rolls the policy in the grounded environment and records the raw
/// source-side observations, states, and the policy's actions. These feed
/// visual finetuning, which needs source imagery with known states.
fn collect_grounded_online(
    genv: &mut GroundedEnv,
    actor: &Actor,
    n: usize,
    seed: u64,
) -> Result<UnpairedDataset> {
    use rand::SeedableRng;
    let (h, w) = genv.frame_size();
    let mut ds = UnpairedDataset::empty(
        Domain::Source,
        Provenance::Online,
        genv.source.task,
        h,
        w,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stack = FrameStack::new(h, w);
    while ds.len() < n {
        let (obs_t, _) = genv.grounded_reset()?;
        ds.begin_trajectory(genv.snapshot());
        stack.reset(&obs_t);
        loop {
            let win = CropWindow::random(h, w, &mut rng);
            let a = actor.act(&stack.stacked(), win, &mut rng)?;
            let src_obs = genv.source.render_current();
            let src_state = genv.source.state()?;
            let tr = genv.grounded_step(&a)?;
            ds.push_record(&src_obs, Some(src_state), &a);
            stack.push(&tr.next_obs);
            if ds.len() == n || tr.done {
                break;
            }
        }
    }
    Ok(ds)
}

// ---- checkpointing ----

/// Every trainable network of a run, created with seeds derived from the
/// run seed so staged and end-to-end execution initialize identically.
pub struct NetState {
    pub actor: Actor,
    pub critic: Critic,
    pub translator: Translator,
    pub p_s: StatePredictor,
    pub p_t: StatePredictor,
    pub delta: DeltaAgent,
    pub disc: TransitionDiscriminator,
}

pub fn init_nets(cfg: &ExperimentConfig, seed: u64) -> NetState {
    let task = cfg.task;
    let spec = DomainSpec::identity(task);
    let (h, w) = (spec.render.height, spec.render.width);
    NetState {
        actor: Actor::new(h, w, task.action_dim(), derive_seed(seed, "actor", 0)),
        critic: Critic::new(task.state_dim(), task.action_dim(), derive_seed(seed, "critic", 0)),
        translator: Translator::new(h, w, derive_seed(seed, "translator", 0)),
        p_s: StatePredictor::new(task, h, w, derive_seed(seed, "psrc", 0)),
        p_t: StatePredictor::new(task, h, w, derive_seed(seed, "ptgt", 0)),
        delta: identity_init(crate::policy::FEATURE_DIM, task.action_dim(), derive_seed(seed, "delta", 0)),
        disc: TransitionDiscriminator::new(
            crate::policy::FEATURE_DIM,
            task.action_dim(),
            derive_seed(seed, "disc", 0),
        ),
    }
}

pub fn save_nets(dir: &Path, nets: &NetState) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    crate::nd::checkpoint::save(&nets.actor.params, &dir.join("actor.nn"))?;
    crate::nd::checkpoint::save(&nets.critic.params, &dir.join("critic.nn"))?;
    crate::nd::checkpoint::save(&nets.critic.target, &dir.join("critic_target.nn"))?;
    crate::nd::checkpoint::save(&nets.translator.params, &dir.join("translator.nn"))?;
    crate::nd::checkpoint::save(&nets.p_s.params, &dir.join("predictor_source.nn"))?;
    crate::nd::checkpoint::save(&nets.p_t.params, &dir.join("predictor_target.nn"))?;
    crate::nd::checkpoint::save(&nets.delta.params, &dir.join("delta_agent.nn"))?;
    crate::nd::checkpoint::save(&nets.disc.params, &dir.join("discriminator.nn"))?;
    Ok(())
}

pub fn load_nets(dir: &Path, nets: &mut NetState) -> Result<()> {
    nets.actor.params = crate::nd::checkpoint::load(&dir.join("actor.nn"))?;
    nets.critic.params = crate::nd::checkpoint::load(&dir.join("critic.nn"))?;
    nets.critic.target = crate::nd::checkpoint::load(&dir.join("critic_target.nn"))?;
    nets.translator.params = crate::nd::checkpoint::load(&dir.join("translator.nn"))?;
    nets.p_s.params = crate::nd::checkpoint::load(&dir.join("predictor_source.nn"))?;
    nets.p_t.params = crate::nd::checkpoint::load(&dir.join("predictor_target.nn"))?;
    nets.delta.params = crate::nd::checkpoint::load(&dir.join("delta_agent.nn"))?;
    nets.disc.params = crate::nd::checkpoint::load(&dir.join("discriminator.nn"))?;
    Ok(())
}

/// Progress file: one line per completed stage plus the target-step
/// ledger, so an aborted run can restart after the last finished
/// iteration.
struct Progress {
    completed_init: bool,
    completed_iters: u32,
    target_ledger: u64,
    done: bool,
}

fn read_progress(path: &Path) -> Progress {
    let mut p = Progress {
        completed_init: false,
        completed_iters: 0,
        target_ledger: 0,
        done: false,
    };
    if let Ok(text) = std::fs::read_to_string(path) {
        for line in text.lines() {
            if line == "init" {
                p.completed_init = true;
            } else if line == "done" {
                p.done = true;
            } else if let Some(n) = line.strip_prefix("iter ") {
                p.completed_iters = n.parse().unwrap_or(p.completed_iters);
            } else if let Some(n) = line.strip_prefix("ledger ") {
                p.target_ledger = n.parse().unwrap_or(p.target_ledger);
            }
        }
    }
    p
}

fn append_progress(path: &Path, line: &str) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{line}")?;
    Ok(())
}

// ---- the grounding loop ----

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions<'a> {
    pub out_dir: Option<&'a Path>,
    pub resume: bool,
    /// (lower, upper) oracle bounds; when present, evaluations also log
    /// normalized returns.
    pub bounds: Option<(f32, f32)>,
}

/// Full iterative grounding run. Order per iteration: policy training in
/// the grounded env, online target collection, online grounded
/// collection, visual finetuning, action-transformation training,
/// evaluation. The target-environment step ledger is checked at the end.
pub fn run_idapt(cfg: &ExperimentConfig, seed: u64, opts: &RunOptions) -> Result<RunRecord> {
    cfg.validate()?;
    let mut rec = RunRecord::new(cfg, seed, "idapt");
    let out = opts.out_dir;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.txt"), cfg.canonical_text())?;
        std::fs::write(dir.join("provenance.txt"), &rec.provenance)?;
        rec.checkpoint_dir = Some(dir.join("ckpt"));
    }
    let progress = match (out, opts.resume) {
        (Some(dir), true) => read_progress(&dir.join("progress.txt")),
        _ => Progress {
            completed_init: false,
            completed_iters: 0,
            target_ledger: 0,
            done: false,
        },
    };
    if progress.done {
        let dir = out.expect("resume requires an output directory");
        let text = std::fs::read_to_string(dir.join("metrics.csv"))?;
        let mut rec = RunRecord::from_csv(&text, cfg.hash(), &rec.provenance)?;
        rec.checkpoint_dir = Some(dir.join("ckpt"));
        return Ok(rec);
    }

    let task = cfg.task;
    let (h, w) = {
        let spec = DomainSpec::identity(task);
        (spec.render.height, spec.render.width)
    };
    let sdim = task.state_dim();
    let adim = task.action_dim();

    let (_, mut target) = make_pair(task, cfg.gap, derive_seed(seed, "envs", 0))?;
    let mut nets = init_nets(cfg, seed);
    let mut buffer = ReplayBuffer::new(cfg.policy.replay_capacity, h, w, sdim, adim);
    let sac_cfg = cfg.policy.sac();
    let ppo_cfg = cfg.action.ppo();
    let smoothing = SmoothingConfig {
        alpha: cfg.action.smoothing_alpha,
    };
    let vloss = cfg.visual_loss();
    let kind = |k: CollectKind| match k {
        CollectKind::Random => CollectionPolicy::UniformRandom,
        CollectKind::Scripted => CollectionPolicy::Scripted,
    };

    let ds_s;
    let ds_t;
    let mut dt_history: Vec<UnpairedDataset> = Vec::new();
    let mut ds_history: Vec<UnpairedDataset> = Vec::new();
    let mut start_iter = 1u32;

    if progress.completed_init && progress.completed_iters < cfg.n_grounding_steps as u32 {
        // resume: reload datasets and the latest nets; the replay buffer
        // restarts empty
        let dir = out.expect("resume requires an output directory");
        let data = dir.join("data");
        ds_s = UnpairedDataset::load(&data.join("task_agnostic_source"), Domain::Source, Provenance::Random, task)?;
        ds_t = UnpairedDataset::load(&data.join("task_agnostic_target"), Domain::Target, Provenance::Random, task)?;
        for i in 1..=progress.completed_iters {
            dt_history.push(UnpairedDataset::load(
                &data.join(format!("online_target_{i}")),
                Domain::Target,
                Provenance::Online,
                task,
            )?);
            ds_history.push(UnpairedDataset::load(
                &data.join(format!("online_source_{i}")),
                Domain::Source,
                Provenance::Online,
                task,
            )?);
        }
        let stage = if progress.completed_iters == 0 {
            "init".to_string()
        } else {
            format!("iter{}", progress.completed_iters)
        };
        load_nets(&dir.join("ckpt").join(stage), &mut nets)?;
        target.restore_ledger(progress.target_ledger);
        start_iter = progress.completed_iters + 1;
        rec.log(0, "resume", "resumed_after_iteration", progress.completed_iters as f64);
    } else {
        // Algorithm start: task-agnostic data in both domains, then
        // source-state pretraining and visual-transformation training
        let mut source = EnvInstance::new(task, DomainSpec::identity(task), true, derive_seed(seed, "src0", 0))?;
        rec.mark(0, "collect_task_agnostic");
        ds_s = collect(&mut source, kind(cfg.collection), cfg.task_agnostic_size, derive_seed(seed, "collect_s", 0))?;
        ds_t = collect(&mut target, kind(cfg.collection), cfg.task_agnostic_size, derive_seed(seed, "collect_t", 0))?;
        rec.log(0, "collect_task_agnostic", "target_steps", target.steps_taken() as f64);

        rec.mark(0, "pretrain_source_predictor");
        let losses = pretrain_source_predictor(
            &mut nets.p_s,
            &ds_s,
            cfg.visual.pretrain_epochs,
            cfg.visual.lr,
            cfg.visual.batch,
            derive_seed(seed, "pretrain", 0),
        )?;
        if let Some(last) = losses.last() {
            rec.log(0, "pretrain_source_predictor", "state_loss", *last as f64);
        }

        rec.mark(0, "train_translator");
        nets.p_t = init_target_predictor(&nets.p_s);
        let stats = train_translator(
            &mut nets.translator,
            &mut nets.p_t,
            &ds_s,
            &ds_t,
            cfg.visual.train_epochs,
            cfg.visual.lr,
            &vloss,
            derive_seed(seed, "translator_train", 0),
        )?;
        if let Some(last) = stats.last() {
            rec.log(0, "train_translator", "gen_loss", last.gen_loss as f64);
            rec.log(0, "train_translator", "disc_loss", last.disc_loss as f64);
            rec.log(0, "train_translator", "cycle", last.cycle as f64);
            rec.log(0, "train_translator", "regularizer", last.regularizer as f64);
        }

        if let Some(dir) = out {
            let data = dir.join("data");
            ds_s.save(&data.join("task_agnostic_source"), seed, cfg.hash())?;
            ds_t.save(&data.join("task_agnostic_target"), seed, cfg.hash())?;
            save_nets(&dir.join("ckpt").join("init"), &nets)?;
            append_progress(&dir.join("progress.txt"), "init")?;
            append_progress(&dir.join("progress.txt"), &format!("ledger {}", target.steps_taken()))?;
        }
    }

    // the action transformation consumes features from the policy
    // snapshot taken after the previous iteration's policy phase
    let mut proxy = ProxyEncoder::from_actor(&nets.actor);

    for iter in start_iter..=cfg.n_grounding_steps as u32 {
        // policy training in the grounded environment
        rec.mark(iter, "train_policy");
        {
            let src = EnvInstance::new(task, DomainSpec::identity(task), true, derive_seed(seed, "gsrc", iter as u64))?;
            let mut genv = GroundedEnv::new(
                src,
                VisualHook::Learned(&nets.translator),
                ActionHook::Learned {
                    agent: &nets.delta,
                    proxy: &proxy,
                    smoothing,
                },
            )?;
            let stats = train_policy(
                &mut nets.actor,
                &mut nets.critic,
                &mut buffer,
                &mut genv,
                cfg.policy.steps_per_iteration,
                &sac_cfg,
                derive_seed(seed, "policy", iter as u64),
            )?;
            rec.log(iter, "train_policy", "grounded_return", stats.mean_episode_return as f64);
            rec.log(iter, "train_policy", "updates", stats.updates as f64);
        }

        // online target rollouts (the only target interaction per
        // iteration; metered)
        rec.mark(iter, "collect_target_online");
        let dt_online = {
            let mut src = PolicySource::new(&nets.actor, h, w);
            collect(
                &mut target,
                CollectionPolicy::Learned(&mut src),
                cfg.online_size,
                derive_seed(seed, "dt_online", iter as u64),
            )?
        };
        rec.log(iter, "collect_target_online", "target_steps", target.steps_taken() as f64);

        // online grounded rollouts on the source side
        rec.mark(iter, "collect_grounded_online");
        let ds_online = {
            let src = EnvInstance::new(task, DomainSpec::identity(task), true, derive_seed(seed, "gsrc2", iter as u64))?;
            let mut genv = GroundedEnv::new(
                src,
                VisualHook::Learned(&nets.translator),
                ActionHook::Learned {
                    agent: &nets.delta,
                    proxy: &proxy,
                    smoothing,
                },
            )?;
            collect_grounded_online(&mut genv, &nets.actor, cfg.online_size, derive_seed(seed, "ds_online", iter as u64))?
        };
        dt_history.push(dt_online);
        ds_history.push(ds_online);

        // visual finetuning on the online data
        rec.mark(iter, "finetune_visual");
        let mode = if cfg.accumulate_data {
            FinetuneMode::Accumulate
        } else {
            FinetuneMode::RecentOnly
        };
        let ft_s = finetune_set(&ds_s, &ds_history, mode)?;
        let ft_t = finetune_set(&ds_t, &dt_history, mode)?;
        let losses = pretrain_source_predictor(
            &mut nets.p_s,
            &ft_s,
            cfg.visual.finetune_epochs,
            cfg.visual.lr,
            cfg.visual.batch,
            derive_seed(seed, "ft_psrc", iter as u64),
        )?;
        if let Some(last) = losses.last() {
            rec.log(iter, "finetune_visual", "state_loss", *last as f64);
        }
        let stats = train_translator(
            &mut nets.translator,
            &mut nets.p_t,
            &ft_s,
            &ft_t,
            cfg.visual.finetune_epochs,
            cfg.visual.lr,
            &vloss,
            derive_seed(seed, "ft_translator", iter as u64),
        )?;
        if let Some(last) = stats.last() {
            rec.log(iter, "finetune_visual", "gen_loss", last.gen_loss as f64);
        }

        // action transformation against the fresh policy features
        proxy = ProxyEncoder::from_actor(&nets.actor);
        if !cfg.no_action_transform {
            rec.mark(iter, "train_action");
            let src = EnvInstance::new(task, DomainSpec::identity(task), true, derive_seed(seed, "garat_src", iter as u64))?;
            let stats = garat_train(
                &mut nets.delta,
                &mut nets.disc,
                &FeatureSource::Encoder(&proxy),
                VisualHook::Learned(&nets.translator),
                src,
                dt_history.last().expect("pushed this iteration"),
                &smoothing,
                &ppo_cfg,
                cfg.action.garat_epochs,
                derive_seed(seed, "garat", iter as u64),
            )?;
            if let Some(last) = stats.last() {
                rec.log(iter, "train_action", "disc_accuracy", last.disc_accuracy as f64);
                rec.log(iter, "train_action", "mean_abs_delta", last.mean_abs_delta as f64);
                rec.log(iter, "train_action", "mean_reward", last.mean_reward as f64);
            }
        }

        // target evaluation on an instrumented clone: oracle privilege,
        // exempt from the interaction budget
        rec.mark(iter, "evaluate");
        let mut tclone = target.instrumented_clone(derive_seed(seed, "evalenv", iter as u64))?;
        let res = evaluate(&nets.actor, &mut tclone, cfg.eval_episodes, derive_seed(seed, "eval", iter as u64))?;
        rec.log(iter, "evaluate", "target_return", res.mean_return as f64);
        rec.log(iter, "evaluate", "target_success", res.success_rate as f64);
        rec.log(iter, "evaluate", "oracle_eval_steps", tclone.steps_taken() as f64);
        if let Some((lb, ub)) = opts.bounds {
            rec.log(iter, "evaluate", "normalized_return", normalized_return(res.mean_return, lb, ub)? as f64);
        }
        rec.log(iter, "evaluate", "target_budget", target.steps_taken() as f64);

        if let Some(dir) = out {
            let data = dir.join("data");
            dt_history.last().unwrap().save(&data.join(format!("online_target_{iter}")), seed, cfg.hash())?;
            ds_history.last().unwrap().save(&data.join(format!("online_source_{iter}")), seed, cfg.hash())?;
            save_nets(&dir.join("ckpt").join(format!("iter{iter}")), &nets)?;
            append_progress(&dir.join("progress.txt"), &format!("iter {iter}"))?;
            append_progress(&dir.join("progress.txt"), &format!("ledger {}", target.steps_taken()))?;
            rec.write_csv(&dir.join("metrics.csv"))?;
        }
    }

    // interaction-budget ledger: task-agnostic collection plus one online
    // batch per iteration, nothing else
    let expected = (cfg.task_agnostic_size + cfg.n_grounding_steps * cfg.online_size) as u64;
    if target.steps_taken() != expected {
        return Err(Error::InvalidArgument(format!(
            "target budget violated: {} steps vs {} expected",
            target.steps_taken(),
            expected
        )));
    }
    rec.log(cfg.n_grounding_steps as u32, "budget_check", "target_steps_final", expected as f64);

    if let Some(dir) = out {
        rec.write_csv(&dir.join("metrics.csv"))?;
        append_progress(&dir.join("progress.txt"), "done")?;
    }
    Ok(rec)
}

// ---- baselines ----

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineKind {
    DirectTransfer,
    DRNarrow,
    DRWide,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::DirectTransfer => "direct-transfer",
            BaselineKind::DRNarrow => "dr-narrow",
            BaselineKind::DRWide => "dr-wide",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "direct-transfer" | "direct" => Ok(BaselineKind::DirectTransfer),
            "dr-narrow" => Ok(BaselineKind::DRNarrow),
            "dr-wide" => Ok(BaselineKind::DRWide),
            other => Err(Error::InvalidArgument(format!("unknown baseline {other}"))),
        }
    }
}

/// Source environment whose spec is resampled from a randomization range
/// at every episode start.
pub struct RandomizedEnv {
    env: EnvInstance,
    range: RandomizationRange,
    rng: ChaCha8Rng,
}

impl RandomizedEnv {
    pub fn new(task: TaskId, range: RandomizationRange, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        Ok(Self {
            env: EnvInstance::new(task, DomainSpec::identity(task), true, seed)?,
            range,
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x5d),
        })
    }
}

impl PolicyEnv for RandomizedEnv {
    fn reset(&mut self) -> Result<(Observation, StateVector)> {
        self.env.spec = randomized_spec(self.env.task, self.range, &mut self.rng);
        let (obs, state) = self.env.reset();
        Ok((obs, state.expect("randomized env is instrumented")))
    }

    fn step(&mut self, a: &[f32]) -> Result<(Observation, StateVector, f32, bool)> {
        let tr = self.env.step(a)?;
        Ok((
            tr.next_obs,
            tr.next_state.expect("randomized env is instrumented"),
            tr.reward.expect("randomized env is instrumented"),
            tr.done,
        ))
    }

    fn action_dim(&self) -> usize {
        self.env.action_dim()
    }

    fn state_dim(&self) -> usize {
        self.env.state_dim()
    }

    fn frame_size(&self) -> (usize, usize) {
        (self.env.spec.render.height, self.env.spec.render.width)
    }
}

/// Trains SAC for the baseline's full step budget and evaluates on the
/// target. DirectTransfer trains on the raw source; the DR variants
/// resample a randomized source spec every episode.
pub fn run_baseline(
    kind: BaselineKind,
    cfg: &ExperimentConfig,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunRecord> {
    cfg.validate()?;
    let mut rec = RunRecord::new(cfg, seed, kind.name());
    let task = cfg.task;
    let spec = DomainSpec::identity(task);
    let (h, w) = (spec.render.height, spec.render.width);
    let total_steps = cfg.policy.steps_per_iteration * cfg.n_grounding_steps;

    let mut actor = Actor::new(h, w, task.action_dim(), derive_seed(seed, "actor", 0));
    let mut critic = Critic::new(task.state_dim(), task.action_dim(), derive_seed(seed, "critic", 0));
    let mut buffer = ReplayBuffer::new(cfg.policy.replay_capacity, h, w, task.state_dim(), task.action_dim());
    let sac_cfg = cfg.policy.sac();

    rec.mark(0, "train_policy");
    let stats = match kind {
        BaselineKind::DirectTransfer => {
            let mut src = EnvInstance::new(task, spec, true, derive_seed(seed, "src", 0))?;
            let mut env = crate::policy::InstrumentedEnv(&mut src);
            train_policy(&mut actor, &mut critic, &mut buffer, &mut env, total_steps, &sac_cfg, derive_seed(seed, "policy", 0))?
        }
        BaselineKind::DRNarrow | BaselineKind::DRWide => {
            let range = if kind == BaselineKind::DRNarrow {
                RandomizationRange::Narrow
            } else {
                RandomizationRange::Wide
            };
            let mut env = RandomizedEnv::new(task, range, derive_seed(seed, "src", 0))?;
            train_policy(&mut actor, &mut critic, &mut buffer, &mut env, total_steps, &sac_cfg, derive_seed(seed, "policy", 0))?
        }
    };
    rec.log(0, "train_policy", "source_return", stats.mean_episode_return as f64);

    rec.mark(0, "evaluate");
    let (_, target) = make_pair(task, cfg.gap, derive_seed(seed, "envs", 0))?;
    let mut tclone = target.instrumented_clone(derive_seed(seed, "evalenv", 0))?;
    let res = evaluate(&actor, &mut tclone, cfg.eval_episodes, derive_seed(seed, "eval", 0))?;
    rec.log(0, "evaluate", "target_return", res.mean_return as f64);
    rec.log(0, "evaluate", "target_success", res.success_rate as f64);
    if let Some((lb, ub)) = opts.bounds {
        rec.log(0, "evaluate", "normalized_return", normalized_return(res.mean_return, lb, ub)? as f64);
    }

    if let Some(dir) = opts.out_dir {
        std::fs::create_dir_all(dir)?;
        let ckpt = dir.join("ckpt");
        std::fs::create_dir_all(&ckpt)?;
        crate::nd::checkpoint::save(&actor.params, &ckpt.join("actor.nn"))?;
        rec.write_csv(&dir.join("metrics.csv"))?;
        rec.checkpoint_dir = Some(ckpt);
    }
    Ok(rec)
}

// ---- oracle bounds ----

/// Lower bound: a source-trained policy evaluated on the target. Upper
/// bound: a policy trained directly on an instrumented clone of the
/// target. Both are harness privilege; neither touches the metered target
/// instance. Cached per (task, gap, seed) when a cache path is given.
pub fn bounds(
    cfg: &ExperimentConfig,
    seed: u64,
    cache: Option<&Path>,
) -> Result<(f32, f32)> {
    let key = format!("{},{},{}", cfg.task.name(), gap_name(cfg.gap), seed);
    if let Some(path) = cache {
        if let Ok(text) = std::fs::read_to_string(path) {
            for line in text.lines() {
                let mut it = line.rsplitn(3, ',');
                let ub: Option<f32> = it.next().and_then(|v| v.parse().ok());
                let lb: Option<f32> = it.next().and_then(|v| v.parse().ok());
                let k = it.next().unwrap_or("");
                if k == key {
                    if let (Some(lb), Some(ub)) = (lb, ub) {
                        return Ok((lb, ub));
                    }
                }
            }
        }
    }

    let task = cfg.task;
    let spec = DomainSpec::identity(task);
    let (h, w) = (spec.render.height, spec.render.width);
    let total_steps = cfg.policy.steps_per_iteration * cfg.n_grounding_steps;
    let sac_cfg = cfg.policy.sac();
    let (_, target) = make_pair(task, cfg.gap, derive_seed(seed, "envs", 0))?;

    // lower bound: direct transfer
    let lb = {
        let rec = run_baseline(BaselineKind::DirectTransfer, cfg, seed, &RunOptions::default())?;
        rec.rows
            .iter()
            .find(|r| r.metric == "target_return")
            .map(|r| r.value as f32)
            .ok_or_else(|| Error::InvalidArgument("baseline logged no return".into()))?
    };

    // upper bound: oracle training inside the target; the oracle is not
    // metered, so it trains for twice the grounded budget to approximate a
    // converged target policy
    let ub_steps = 2 * total_steps;
    let ub = {
        let mut actor = Actor::new(h, w, task.action_dim(), derive_seed(seed, "ub_actor", 0));
        let mut critic = Critic::new(task.state_dim(), task.action_dim(), derive_seed(seed, "ub_critic", 0));
        let mut buffer = ReplayBuffer::new(cfg.policy.replay_capacity, h, w, task.state_dim(), task.action_dim());
        let mut tclone = target.instrumented_clone(derive_seed(seed, "ub_env", 0))?;
        let mut env = crate::policy::InstrumentedEnv(&mut tclone);
        train_policy(&mut actor, &mut critic, &mut buffer, &mut env, ub_steps, &sac_cfg, derive_seed(seed, "ub_policy", 0))?;
        let mut eval_env = target.instrumented_clone(derive_seed(seed, "ub_evalenv", 0))?;
        evaluate(&actor, &mut eval_env, cfg.eval_episodes, derive_seed(seed, "ub_eval", 0))?.mean_return
    };

    if let Some(path) = cache {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        use std::io::Write;
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        writeln!(f, "{key},{lb},{ub}")?;
    }
    Ok((lb, ub))
}

/// Expected phase-marker sequence for a config, for trace validation.
pub fn expected_trace(cfg: &ExperimentConfig) -> Vec<(u32, String)> {
    let mut t = vec![
        (0, "collect_task_agnostic".to_string()),
        (0, "pretrain_source_predictor".to_string()),
        (0, "train_translator".to_string()),
    ];
    for iter in 1..=cfg.n_grounding_steps as u32 {
        t.push((iter, "train_policy".to_string()));
        t.push((iter, "collect_target_online".to_string()));
        t.push((iter, "collect_grounded_online".to_string()));
        t.push((iter, "finetune_visual".to_string()));
        if !cfg.no_action_transform {
            t.push((iter, "train_action".to_string()));
        }
        t.push((iter, "evaluate".to_string()));
    }
    t
}
