//! Network building blocks shared across modules: the 4-layer conv
//! encoder (used by the policy actor, the state predictors, and proxy
//! features) and small helpers for assembling image batches.

use rand_chacha::ChaCha8Rng;

use crate::env::Observation;
use crate::nd::layers::{conv, dense, init_conv, init_dense};
use crate::nd::{Graph, Init, NodeId, ParamSet, Tensor};
use crate::Result;

/// Which layers of a network receive gradients.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMode {
    All,
    /// Only the first conv layer trains; everything else is frozen.
    FirstConvOnly,
    Frozen,
}

/// 4-layer conv stack ending in a tanh-bounded feature vector.
/// Layer 1 strides by 2; layers 2..4 are stride 1, all unpadded 3x3.
#[derive(Clone, Debug)]
pub struct ConvEncoder {
    pub prefix: String,
    pub in_ch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub feat_dim: usize,
    pub channels: usize,
}

impl ConvEncoder {
    pub fn new(prefix: &str, in_ch: usize, in_h: usize, in_w: usize, feat_dim: usize) -> Self {
        Self {
            prefix: prefix.to_string(),
            in_ch,
            in_h,
            in_w,
            feat_dim,
            channels: 32,
        }
    }

    fn out_hw(&self) -> (usize, usize) {
        let mut h = (self.in_h - 3) / 2 + 1;
        let mut w = (self.in_w - 3) / 2 + 1;
        for _ in 0..3 {
            h -= 2;
            w -= 2;
        }
        (h, w)
    }

    pub fn flat_dim(&self) -> usize {
        let (h, w) = self.out_hw();
        self.channels * h * w
    }

    pub fn init(&self, ps: &mut ParamSet, rng: &mut ChaCha8Rng) {
        init_conv(ps, &format!("{}.conv1", self.prefix), self.in_ch, self.channels, 3, Init::He, rng);
        for i in 2..=4 {
            init_conv(ps, &format!("{}.conv{i}", self.prefix), self.channels, self.channels, 3, Init::He, rng);
        }
        init_dense(ps, &format!("{}.fc", self.prefix), self.flat_dim(), self.feat_dim, Init::Xavier, rng);
    }

    /// Input (n, in_ch, in_h, in_w) -> tanh feature (n, feat_dim).
    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, x: NodeId, mode: TrainMode) -> Result<NodeId> {
        let first = mode != TrainMode::Frozen;
        let rest = mode == TrainMode::All;
        let mut h = conv(g, ps, &format!("{}.conv1", self.prefix), x, 2, 0, first)?;
        h = g.relu(h)?;
        for i in 2..=4 {
            h = conv(g, ps, &format!("{}.conv{i}", self.prefix), h, 1, 0, rest)?;
            h = g.relu(h)?;
        }
        let flat = g.flatten(h)?;
        let f = dense(g, ps, &format!("{}.fc", self.prefix), flat, rest)?;
        g.tanh(f)
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in 1..=4 {
            out.push(format!("{}.conv{i}.w", self.prefix));
            out.push(format!("{}.conv{i}.b", self.prefix));
        }
        out.push(format!("{}.fc.w", self.prefix));
        out.push(format!("{}.fc.b", self.prefix));
        out
    }
}

/// Stacks observations into an (n, 3, h, w) input tensor.
pub fn obs_batch(obs: &[&Observation]) -> Result<Tensor> {
    let (h, w) = (obs[0].height, obs[0].width);
    let mut data = Vec::with_capacity(obs.len() * 3 * h * w);
    for o in obs {
        data.extend_from_slice(&o.pixels);
    }
    Tensor::new(vec![obs.len(), 3, h, w], data)
}

/// Rows of per-record vectors into an (n, d) tensor.
pub fn row_batch(rows: &[Vec<f32>]) -> Result<Tensor> {
    let d = rows[0].len();
    let mut data = Vec::with_capacity(rows.len() * d);
    for r in rows {
        data.extend_from_slice(r);
    }
    Tensor::new(vec![rows.len(), d], data)
}

/// Copies every parameter (values only) whose name starts with `prefix`
/// from `src` into `dst`, creating entries as needed. Optimizer moments in
/// `dst` are reset for the copied names.
pub fn copy_params_with_prefix(src: &ParamSet, dst: &mut ParamSet, prefix: &str) {
    let names: Vec<String> = src
        .names()
        .filter(|n| n.starts_with(prefix))
        .map(|n| n.to_string())
        .collect();
    for name in names {
        dst.insert(&name, src.get(&name).clone());
    }
}
