use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct AdamConfig {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct ParamEntry {
    pub value: Tensor,
    pub m: Tensor,
    pub v: Tensor,
}

/// Named parameter tensors with per-parameter Adam moments and a shared
/// step counter. Iteration order is the name order (BTreeMap), which keeps
/// checkpoints and update sweeps deterministic.
#[derive(Clone, Debug)]
pub struct ParamSet {
    pub(crate) entries: BTreeMap<String, ParamEntry>,
    pub(crate) step: u64,
    pub adam: AdamConfig,
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
            step: 0,
            adam: AdamConfig::default(),
        }
    }

    pub fn insert(&mut self, name: &str, value: Tensor) {
        let m = Tensor::zeros(value.shape());
        let v = Tensor::zeros(value.shape());
        self.entries
            .insert(name.to_string(), ParamEntry { value, m, v });
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self
            .entries
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
            .value
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        &mut self
            .entries
            .get_mut(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
            .value
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn num_values(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }

    /// Standard Adam update over the provided gradients. Parameters without
    /// a gradient entry are left untouched (including their moments), which
    /// is how callers freeze layers.
    pub fn adam_step(&mut self, grads: &HashMap<String, Tensor>, lr: f32) -> Result<()> {
        for (name, g) in grads {
            g.check_finite(&format!("gradient of {name}"))?;
        }
        self.step += 1;
        let t = self.step as f64;
        let cfg = self.adam;
        let bc1 = 1.0 - (cfg.beta1 as f64).powf(t);
        let bc2 = 1.0 - (cfg.beta2 as f64).powf(t);
        for (name, entry) in self.entries.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            if g.shape() != entry.value.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "gradient for {name}: {:?} vs {:?}",
                    g.shape(),
                    entry.value.shape()
                )));
            }
            let gd = g.data();
            let (m, v, p) = (entry.m.data_mut(), entry.v.data_mut(), &mut entry.value);
            for (k, pv) in p.data_mut().iter_mut().enumerate() {
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gd[k];
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gd[k] * gd[k];
                let mh = m[k] as f64 / bc1;
                let vh = v[k] as f64 / bc2;
                *pv -= (lr as f64 * mh / (vh.sqrt() + cfg.eps as f64)) as f32;
            }
        }
        Ok(())
    }
}

/// Fan-in scaled uniform init: He-style for relu paths, Xavier for tanh.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    He,
    Xavier,
    Zero,
}

pub fn init_tensor(shape: &[usize], fan_in: usize, init: Init, rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let bound = match init {
        Init::He => (6.0 / fan_in as f32).sqrt(),
        Init::Xavier => (3.0 / fan_in as f32).sqrt(),
        Init::Zero => 0.0,
    };
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("init shape")
}
