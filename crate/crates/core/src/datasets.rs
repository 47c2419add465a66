//! Unpaired observation datasets and collection policies.
//!
//! A dataset stores observations in trajectory order with the action taken
//! at each step, plus an opaque snapshot of every trajectory's initial
//! state. Source-domain records carry states; target records never do.
//! Pixels are quantized to u8 in storage (quantization error < 1/510 per
//! channel, far below any threshold used downstream).

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{ActionVector, EnvInstance, Observation, StateSnapshot, StateVector, TaskId};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Source,
    Target,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Random,
    Backwards,
    Expert,
    Mixture,
    Online,
}

impl Provenance {
    pub fn name(self) -> &'static str {
        match self {
            Provenance::Random => "random",
            Provenance::Backwards => "backwards",
            Provenance::Expert => "expert",
            Provenance::Mixture => "mixture",
            Provenance::Online => "online",
        }
    }
}

/// Supplies actions during collection. Learned policies implement this
/// (managing their own frame stacking); built-in policies are handled by
/// `CollectionPolicy`.
pub trait ActionSource {
    fn begin_episode(&mut self);
    fn act(&mut self, obs: &Observation, rng: &mut ChaCha8Rng) -> ActionVector;
}

pub enum CollectionPolicy<'a> {
    UniformRandom,
    /// Off-task scripted behavior: constant torque for the pendulum, a
    /// high arm sweep (no puck contact) for push. State-diverse but not
    /// goal-directed.
    Scripted,
    Learned(&'a mut dyn ActionSource),
}

struct ScriptState {
    torque_sign: f32,
    phase: f32,
    t: u32,
}

fn scripted_action(task: TaskId, script: &mut ScriptState) -> ActionVector {
    script.t += 1;
    match task {
        TaskId::PointPendulum => vec![script.torque_sign],
        TaskId::PointPush => {
            let th = script.phase + script.t as f32 * 0.15;
            // arm stays lifted, sweeping in a circle
            vec![th.cos(), th.sin(), 1.0]
        }
    }
}

#[derive(Clone)]
pub struct UnpairedDataset {
    pub domain: Domain,
    pub provenance: Provenance,
    pub task: TaskId,
    pub height: usize,
    pub width: usize,
    pub action_dim: usize,
    obs_data: Vec<u8>,
    states: Vec<StateVector>,
    actions: Vec<f32>,
    traj_starts: Vec<usize>,
    init_snapshots: Vec<StateSnapshot>,
    n: usize,
}

impl UnpairedDataset {
    pub(crate) fn empty(
        domain: Domain,
        provenance: Provenance,
        task: TaskId,
        h: usize,
        w: usize,
    ) -> Self {
        Self {
            domain,
            provenance,
            task,
            height: h,
            width: w,
            action_dim: task.action_dim(),
            obs_data: Vec::new(),
            states: Vec::new(),
            actions: Vec::new(),
            traj_starts: Vec::new(),
            init_snapshots: Vec::new(),
            n: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn has_states(&self) -> bool {
        !self.states.is_empty()
    }

    pub fn num_trajectories(&self) -> usize {
        self.traj_starts.len()
    }

    fn obs_stride(&self) -> usize {
        3 * self.height * self.width
    }

    pub fn obs(&self, i: usize) -> Observation {
        let s = self.obs_stride();
        let pixels = self.obs_data[i * s..(i + 1) * s]
            .iter()
            .map(|&b| b as f32 / 255.0)
            .collect();
        Observation {
            height: self.height,
            width: self.width,
            pixels,
        }
    }

    /// Raw pixels of record i, dequantized, without allocation per call
    /// site bookkeeping. Same values as `obs(i).pixels`.
    pub fn obs_into(&self, i: usize, out: &mut [f32]) {
        let s = self.obs_stride();
        for (o, &b) in out.iter_mut().zip(&self.obs_data[i * s..(i + 1) * s]) {
            *o = b as f32 / 255.0;
        }
    }

    pub fn state(&self, i: usize) -> Option<&StateVector> {
        self.states.get(i)
    }

    pub fn action(&self, i: usize) -> &[f32] {
        &self.actions[i * self.action_dim..(i + 1) * self.action_dim]
    }

    pub fn init_snapshot(&self, traj: usize) -> &StateSnapshot {
        &self.init_snapshots[traj]
    }

    /// (start, end) record range of each trajectory.
    pub fn trajectories(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.traj_starts.len());
        for (j, &start) in self.traj_starts.iter().enumerate() {
            let end = self
                .traj_starts
                .get(j + 1)
                .copied()
                .unwrap_or(self.n);
            out.push((start, end));
        }
        out
    }

    /// Indices i such that records i and i+1 are temporally adjacent
    /// within one trajectory, for (o_t, a_t, o_{t+1}) tuples.
    pub fn adjacent_pairs(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (start, end) in self.trajectories() {
            for i in start..end.saturating_sub(1) {
                out.push(i);
            }
        }
        out
    }

    pub fn sample_indices(&self, batch: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
        if self.n == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok((0..batch).map(|_| rng.gen_range(0..self.n)).collect())
    }

    /// Starts a new trajectory whose records follow via `push_record`.
    pub(crate) fn begin_trajectory(&mut self, snap: StateSnapshot) {
        self.traj_starts.push(self.n);
        self.init_snapshots.push(snap);
    }

    pub(crate) fn push_record(
        &mut self,
        obs: &Observation,
        state: Option<StateVector>,
        action: &[f32],
    ) {
        debug_assert_eq!(obs.height, self.height);
        self.obs_data.extend(
            obs.pixels
                .iter()
                .map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
        if let Some(s) = state {
            self.states.push(s);
        }
        self.actions.extend_from_slice(action);
        self.n += 1;
    }

    pub fn concat(&self, others: &[&UnpairedDataset]) -> Result<UnpairedDataset> {
        let mut out = self.clone();
        out.provenance = Provenance::Mixture;
        for d in others {
            if d.domain != self.domain
                || d.task != self.task
                || d.height != self.height
                || d.width != self.width
            {
                return Err(Error::InvalidArgument(
                    "cannot concatenate datasets from different domains or shapes".into(),
                ));
            }
            if d.has_states() != self.has_states() {
                return Err(Error::InvalidArgument(
                    "cannot concatenate state-bearing with state-free datasets".into(),
                ));
            }
            out.obs_data.extend_from_slice(&d.obs_data);
            out.states.extend_from_slice(&d.states);
            out.actions.extend_from_slice(&d.actions);
            out.traj_starts.extend(d.traj_starts.iter().map(|s| s + out.n));
            out.init_snapshots.extend_from_slice(&d.init_snapshots);
            out.n += d.n;
        }
        Ok(out)
    }
}

/// Rolls a policy in the environment until exactly `n_samples` records are
/// stored. Each record is the pre-step observation plus the action taken
/// from it; one record costs one environment step.
pub fn collect(
    env: &mut EnvInstance,
    policy: CollectionPolicy,
    n_samples: usize,
    seed: u64,
) -> Result<UnpairedDataset> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be > 0".into()));
    }
    let domain = if env.instrumented {
        Domain::Source
    } else {
        Domain::Target
    };
    let provenance = match &policy {
        CollectionPolicy::UniformRandom => Provenance::Random,
        CollectionPolicy::Scripted => Provenance::Backwards,
        CollectionPolicy::Learned(_) => Provenance::Online,
    };
    let mut policy = policy;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ds = UnpairedDataset::empty(
        domain,
        provenance,
        env.task,
        env.spec.render.height,
        env.spec.render.width,
    );
    let adim = env.action_dim();
    while ds.len() < n_samples {
        let (mut obs, mut state) = env.reset();
        ds.traj_starts.push(ds.len());
        ds.init_snapshots.push(env.snapshot());
        let mut script = ScriptState {
            torque_sign: if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
            phase: rng.gen_range(0.0..std::f32::consts::TAU),
            t: 0,
        };
        if let CollectionPolicy::Learned(p) = &mut policy {
            p.begin_episode();
        }
        loop {
            let action: ActionVector = match &mut policy {
                CollectionPolicy::UniformRandom => {
                    (0..adim).map(|_| rng.gen_range(-1.0..=1.0)).collect()
                }
                CollectionPolicy::Scripted => scripted_action(env.task, &mut script),
                CollectionPolicy::Learned(p) => p.act(&obs, &mut rng),
            };
            let tr = env.step(&action)?;
            ds.push_record(&obs, state.take(), &action);
            if ds.len() == n_samples || tr.done {
                break;
            }
            obs = tr.next_obs;
            state = tr.next_state;
        }
    }
    Ok(ds)
}

/// Unpaired sampling for translation training: independent uniform draws
/// with replacement from each dataset. No pairing between the two sides.
pub fn minibatch(
    ds_a: &UnpairedDataset,
    ds_b: &UnpairedDataset,
    batch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let a = ds_a.sample_indices(batch, rng)?;
    let b = ds_b.sample_indices(batch, rng)?;
    Ok((a, b))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FinetuneMode {
    RecentOnly,
    Accumulate,
}

/// Selects the finetuning data for one grounding iteration. The default
/// uses only the newest online dataset; accumulation concatenates the
/// task-agnostic data with the full online history.
pub fn finetune_set(
    task_agnostic: &UnpairedDataset,
    online_history: &[UnpairedDataset],
    mode: FinetuneMode,
) -> Result<UnpairedDataset> {
    match mode {
        FinetuneMode::RecentOnly => online_history
            .last()
            .cloned()
            .ok_or_else(|| Error::InvalidArgument("RecentOnly needs a non-empty history".into())),
        FinetuneMode::Accumulate => {
            let refs: Vec<&UnpairedDataset> = online_history.iter().collect();
            task_agnostic.concat(&refs)
        }
    }
}

const SHARD_MAGIC: &[u8; 4] = b"UPDS";
const SHARD_VERSION: u32 = 1;

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn write_f32s(w: &mut impl Write, vs: &[f32]) -> Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f32s(r: &mut impl Read, n: usize) -> Result<Vec<f32>> {
    let mut buf = vec![0u8; 4 * n];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

impl UnpairedDataset {
    /// Writes the dataset as a binary shard plus a human-readable
    /// manifest in `dir`.
    pub fn save(&self, dir: &Path, seed: u64, spec_hash: u64) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join("data.bin"))?);
        w.write_all(SHARD_MAGIC)?;
        write_u32(&mut w, SHARD_VERSION)?;
        write_u32(&mut w, self.n as u32)?;
        write_u32(&mut w, self.height as u32)?;
        write_u32(&mut w, self.width as u32)?;
        let state_dim = if self.has_states() {
            self.task.state_dim()
        } else {
            0
        };
        write_u32(&mut w, state_dim as u32)?;
        write_u32(&mut w, self.action_dim as u32)?;
        write_u32(&mut w, self.traj_starts.len() as u32)?;
        for &s in &self.traj_starts {
            write_u32(&mut w, s as u32)?;
        }
        w.write_all(&self.obs_data)?;
        for s in &self.states {
            write_f32s(&mut w, s)?;
        }
        write_f32s(&mut w, &self.actions)?;
        for snap in &self.init_snapshots {
            write_f32s(&mut w, &snap.state)?;
        }
        drop(w);

        let manifest = format!(
            "domain={:?}\nprovenance={}\ntask={}\nrecords={}\ntrajectories={}\nseed={}\nspec_hash={:016x}\n",
            self.domain,
            self.provenance.name(),
            self.task.name(),
            self.n,
            self.traj_starts.len(),
            seed,
            spec_hash,
        );
        std::fs::write(dir.join("manifest.txt"), manifest)?;
        Ok(())
    }

    pub fn load(dir: &Path, domain: Domain, provenance: Provenance, task: TaskId) -> Result<Self> {
        let mut r = std::io::BufReader::new(std::fs::File::open(dir.join("data.bin"))?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SHARD_MAGIC {
            return Err(Error::Checkpoint("bad dataset shard magic".into()));
        }
        if read_u32(&mut r)? != SHARD_VERSION {
            return Err(Error::Checkpoint("unsupported dataset shard version".into()));
        }
        let n = read_u32(&mut r)? as usize;
        let h = read_u32(&mut r)? as usize;
        let w = read_u32(&mut r)? as usize;
        let state_dim = read_u32(&mut r)? as usize;
        let action_dim = read_u32(&mut r)? as usize;
        let n_traj = read_u32(&mut r)? as usize;
        let mut traj_starts = Vec::with_capacity(n_traj);
        for _ in 0..n_traj {
            traj_starts.push(read_u32(&mut r)? as usize);
        }
        let mut obs_data = vec![0u8; n * 3 * h * w];
        r.read_exact(&mut obs_data)?;
        let mut states = Vec::new();
        if state_dim > 0 {
            for _ in 0..n {
                states.push(read_f32s(&mut r, state_dim)?);
            }
        }
        let actions = read_f32s(&mut r, n * action_dim)?;
        let mut init_snapshots = Vec::with_capacity(n_traj);
        for _ in 0..n_traj {
            init_snapshots.push(StateSnapshot {
                task,
                state: read_f32s(&mut r, task.state_dim())?,
                elapsed: 0,
            });
        }
        Ok(Self {
            domain,
            provenance,
            task,
            height: h,
            width: w,
            action_dim,
            obs_data,
            states,
            actions,
            traj_starts,
            init_snapshots,
            n,
        })
    }
}
