//! Layer registration/forward helpers shared by every network in the crate.
//!
//! A layer `name` owns the parameters `name.w` and `name.b`. Passing
//! `trainable = false` wires the layer into the tape as a frozen leaf, so
//! no gradient is produced for it.

use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, NodeId};
use super::params::{init_tensor, Init, ParamSet};
use super::tensor::Tensor;
use crate::error::Result;

pub fn init_dense(ps: &mut ParamSet, name: &str, fan_in: usize, fan_out: usize, init: Init, rng: &mut ChaCha8Rng) {
    ps.insert(&format!("{name}.w"), init_tensor(&[fan_in, fan_out], fan_in, init, rng));
    ps.insert(&format!("{name}.b"), Tensor::zeros(&[fan_out]));
}

pub fn dense(g: &mut Graph, ps: &ParamSet, name: &str, x: NodeId, trainable: bool) -> Result<NodeId> {
    let w = leaf(g, ps, &format!("{name}.w"), trainable);
    let b = leaf(g, ps, &format!("{name}.b"), trainable);
    let h = g.matmul(x, w)?;
    g.add_bias(h, b)
}

pub fn init_conv(
    ps: &mut ParamSet,
    name: &str,
    chans_in: usize,
    chans_out: usize,
    kernel: usize,
    init: Init,
    rng: &mut ChaCha8Rng,
) {
    let fan_in = chans_in * kernel * kernel;
    ps.insert(
        &format!("{name}.w"),
        init_tensor(&[chans_out, chans_in, kernel, kernel], fan_in, init, rng),
    );
    ps.insert(&format!("{name}.b"), Tensor::zeros(&[chans_out]));
}

pub fn conv(
    g: &mut Graph,
    ps: &ParamSet,
    name: &str,
    x: NodeId,
    stride: usize,
    pad: usize,
    trainable: bool,
) -> Result<NodeId> {
    let w = leaf(g, ps, &format!("{name}.w"), trainable);
    let b = leaf(g, ps, &format!("{name}.b"), trainable);
    g.conv2d(x, w, b, stride, pad)
}

fn leaf(g: &mut Graph, ps: &ParamSet, name: &str, trainable: bool) -> NodeId {
    if trainable {
        g.param(ps, name)
    } else {
        g.frozen(ps, name)
    }
}
