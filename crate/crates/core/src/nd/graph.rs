//! Define-by-run reverse-mode tape.
//!
//! Every op builder computes its value eagerly and records a node; nodes are
//! therefore already in topological order and `backward` walks them once in
//! reverse. Parameters enter the tape by name via [`Graph::param`] and their
//! gradients are collected with [`Graph::param_grads`].

use std::collections::HashMap;

use super::conv::{col2im_add, im2col, ConvGeom};
use super::gemm::gemm;
use super::params::ParamSet;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param,
    Matmul,
    AddBias,
    Conv2d(ConvGeom),
    Upsample2x,
    Relu,
    Tanh,
    Sigmoid,
    Softplus,
    Exp,
    Neg,
    Square,
    Scale(f32),
    // the offset is carried for Debug output only; backward is identity
    AddScalar(#[allow(dead_code)] f32),
    Clamp(f32, f32),
    Add,
    Sub,
    Mul,
    Minimum,
    RowBroadcastMul,
    RowBroadcastAdd,
    RowSum,
    SumAll,
    MeanAll,
    Concat,
    Reshape,
    L1Loss,
    MseLoss,
    BceLoss,
}

struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor,
    grad: Option<Vec<f32>>,
    needs_grad: bool,
    param: Option<String>,
}

pub struct Graph {
    nodes: Vec<Node>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&[f32]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Input, vec![], t, false, None)
    }

    /// Registers a trainable leaf holding a copy of the named parameter.
    pub fn param(&mut self, ps: &ParamSet, name: &str) -> NodeId {
        let t = ps.get(name).clone();
        self.push(Op::Param, vec![], t, true, Some(name.to_string()))
    }

    /// A leaf that shares a parameter's value but receives no gradient.
    pub fn frozen(&mut self, ps: &ParamSet, name: &str) -> NodeId {
        let t = ps.get(name).clone();
        self.push(Op::Input, vec![], t, false, None)
    }

    fn push(
        &mut self,
        op: Op,
        inputs: Vec<NodeId>,
        value: Tensor,
        needs_grad: bool,
        param: Option<String>,
    ) -> NodeId {
        self.nodes.push(Node {
            op,
            inputs,
            value,
            grad: None,
            needs_grad,
            param,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push_op(&mut self, op: Op, inputs: Vec<NodeId>, value: Tensor) -> Result<NodeId> {
        value.check_finite(&format!("{:?} output", op))?;
        let needs = inputs.iter().any(|i| self.nodes[i.0].needs_grad);
        Ok(self.push(op, inputs, value, needs, None))
    }

    // ---- op builders ----

    /// (n,k) x (k,m) -> (n,m)
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape2(a, "matmul lhs")?, self.shape2(b, "matmul rhs")?);
        if sa.1 != sb.0 {
            return Err(Error::ShapeMismatch(format!(
                "matmul {}x{} by {}x{}",
                sa.0, sa.1, sb.0, sb.1
            )));
        }
        let mut out = vec![0.0; sa.0 * sb.1];
        gemm(
            sa.0,
            sa.1,
            sb.1,
            1.0,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            0.0,
            &mut out,
        );
        let t = Tensor::new(vec![sa.0, sb.1], out)?;
        self.push_op(Op::Matmul, vec![a, b], t)
    }

    /// Adds a length-m bias vector to each row of an (n,m) matrix.
    pub fn add_bias(&mut self, x: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, m) = self.shape2(x, "add_bias input")?;
        if self.value(b).shape() != [m] {
            return Err(Error::ShapeMismatch(format!(
                "bias {:?} for input {}x{}",
                self.value(b).shape(),
                n,
                m
            )));
        }
        let mut out = self.value(x).data().to_vec();
        let bias = self.value(b).data();
        for row in out.chunks_mut(m) {
            for (o, bv) in row.iter_mut().zip(bias) {
                *o += bv;
            }
        }
        let t = Tensor::new(vec![n, m], out)?;
        self.push_op(Op::AddBias, vec![x, b], t)
    }

    /// x: (n,c,h,w), w: (o,c,k,k), b: (o); zero padding, square kernel.
    pub fn conv2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: NodeId,
        stride: usize,
        pad: usize,
    ) -> Result<NodeId> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        if xs.len() != 4 || ws.len() != 4 || ws[2] != ws[3] {
            return Err(Error::ShapeMismatch(format!(
                "conv2d input {:?} weight {:?}",
                xs, ws
            )));
        }
        if xs[1] != ws[1] {
            return Err(Error::ShapeMismatch(format!(
                "conv2d channels: input {} weight {}",
                xs[1], ws[1]
            )));
        }
        if self.value(b).shape() != [ws[0]] {
            return Err(Error::ShapeMismatch("conv2d bias".into()));
        }
        let g = ConvGeom {
            chans_in: xs[1],
            chans_out: ws[0],
            h: xs[2],
            w: xs[3],
            kernel: ws[2],
            stride,
            pad,
        };
        let (oh, ow) = (g.out_h(), g.out_w());
        let n = xs[0];
        let mut out = vec![0.0; n * g.chans_out * oh * ow];
        let mut col = vec![0.0; g.col_rows() * g.col_cols()];
        let xin = self.value(x).data();
        let wv = self.value(w).data();
        let bias = self.value(b).data();
        let img = g.chans_in * g.h * g.w;
        let oimg = g.chans_out * oh * ow;
        for i in 0..n {
            im2col(&xin[i * img..(i + 1) * img], &g, &mut col);
            let dst = &mut out[i * oimg..(i + 1) * oimg];
            gemm(
                g.chans_out,
                g.col_rows(),
                g.col_cols(),
                1.0,
                wv,
                false,
                &col,
                false,
                0.0,
                dst,
            );
            for (c, chunk) in dst.chunks_mut(oh * ow).enumerate() {
                for v in chunk.iter_mut() {
                    *v += bias[c];
                }
            }
        }
        let t = Tensor::new(vec![n, g.chans_out, oh, ow], out)?;
        self.push_op(Op::Conv2d(g), vec![x, w, b], t)
    }

    /// Nearest-neighbor 2x upsampling of (n,c,h,w).
    pub fn upsample2x(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.value(x).shape().to_vec();
        if s.len() != 4 {
            return Err(Error::ShapeMismatch(format!("upsample2x input {:?}", s)));
        }
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let src = self.value(x).data();
        let mut out = vec![0.0; n * c * 4 * h * w];
        for p in 0..n * c {
            let sp = &src[p * h * w..(p + 1) * h * w];
            let dp = &mut out[p * 4 * h * w..(p + 1) * 4 * h * w];
            for y in 0..h {
                for x2 in 0..w {
                    let v = sp[y * w + x2];
                    let base = 2 * y * 2 * w + 2 * x2;
                    dp[base] = v;
                    dp[base + 1] = v;
                    dp[base + 2 * w] = v;
                    dp[base + 2 * w + 1] = v;
                }
            }
        }
        let t = Tensor::new(vec![n, c, 2 * h, 2 * w], out)?;
        self.push_op(Op::Upsample2x, vec![x], t)
    }

    fn unary(&mut self, op: Op, x: NodeId, f: impl Fn(f32) -> f32) -> Result<NodeId> {
        let mut t = self.value(x).clone();
        for v in t.data_mut() {
            *v = f(*v);
        }
        self.push_op(op, vec![x], t)
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Op::Relu, x, |v| v.max(0.0))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Op::Tanh, x, f32::tanh)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Op::Sigmoid, x, sigmoid)
    }

    pub fn softplus(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Op::Softplus, x, softplus)
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Op::Exp, x, f32::exp)
    }

    pub fn neg(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Op::Neg, x, |v| -v)
    }

    pub fn square(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(Op::Square, x, |v| v * v)
    }

    pub fn scale(&mut self, x: NodeId, c: f32) -> Result<NodeId> {
        self.unary(Op::Scale(c), x, |v| v * c)
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f32) -> Result<NodeId> {
        self.unary(Op::AddScalar(c), x, |v| v + c)
    }

    /// Hard clamp; gradient is zero outside [lo, hi].
    pub fn clamp(&mut self, x: NodeId, lo: f32, hi: f32) -> Result<NodeId> {
        self.unary(Op::Clamp(lo, hi), x, |v| v.clamp(lo, hi))
    }

    fn binary(&mut self, op: Op, a: NodeId, b: NodeId, f: impl Fn(f32, f32) -> f32) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::ShapeMismatch(format!(
                "{:?}: {:?} vs {:?}",
                op,
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut t = self.value(a).clone();
        for (o, &bv) in t.data_mut().iter_mut().zip(self.nodes[b.0].value.data()) {
            *o = f(*o, bv);
        }
        self.push_op(op, vec![a, b], t)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Op::Add, a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Op::Sub, a, b, |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Op::Mul, a, b, |x, y| x * y)
    }

    pub fn minimum(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Op::Minimum, a, b, f32::min)
    }

    /// (n,d) * (d) broadcast over rows.
    pub fn row_broadcast_mul(&mut self, x: NodeId, v: NodeId) -> Result<NodeId> {
        self.row_broadcast(Op::RowBroadcastMul, x, v, |a, b| a * b)
    }

    /// (n,d) + (d) broadcast over rows.
    pub fn row_broadcast_add(&mut self, x: NodeId, v: NodeId) -> Result<NodeId> {
        self.row_broadcast(Op::RowBroadcastAdd, x, v, |a, b| a + b)
    }

    fn row_broadcast(
        &mut self,
        op: Op,
        x: NodeId,
        v: NodeId,
        f: impl Fn(f32, f32) -> f32,
    ) -> Result<NodeId> {
        let (n, d) = self.shape2(x, "row broadcast input")?;
        if self.value(v).shape() != [d] {
            return Err(Error::ShapeMismatch(format!(
                "row broadcast vector {:?} for {}x{}",
                self.value(v).shape(),
                n,
                d
            )));
        }
        let mut t = self.value(x).clone();
        let vv = self.nodes[v.0].value.data().to_vec();
        for row in t.data_mut().chunks_mut(d) {
            for (o, bv) in row.iter_mut().zip(&vv) {
                *o = f(*o, *bv);
            }
        }
        self.push_op(op, vec![x, v], t)
    }

    /// (n,d) -> (n): sum over the last axis.
    pub fn row_sum(&mut self, x: NodeId) -> Result<NodeId> {
        let (n, d) = self.shape2(x, "row_sum input")?;
        let src = self.value(x).data();
        let out: Vec<f32> = (0..n).map(|i| src[i * d..(i + 1) * d].iter().sum()).collect();
        let t = Tensor::new(vec![n], out)?;
        self.push_op(Op::RowSum, vec![x], t)
    }

    pub fn sum_all(&mut self, x: NodeId) -> Result<NodeId> {
        let s: f32 = self.value(x).data().iter().sum();
        self.push_op(Op::SumAll, vec![x], Tensor::scalar(s))
    }

    pub fn mean_all(&mut self, x: NodeId) -> Result<NodeId> {
        let n = self.value(x).len() as f32;
        let s: f32 = self.value(x).data().iter().sum();
        self.push_op(Op::MeanAll, vec![x], Tensor::scalar(s / n))
    }

    /// Concatenates (n,a) and (n,b) along the last axis.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (n, da) = self.shape2(a, "concat lhs")?;
        let (nb, db) = self.shape2(b, "concat rhs")?;
        if n != nb {
            return Err(Error::ShapeMismatch(format!(
                "concat rows {} vs {}",
                n, nb
            )));
        }
        let mut out = Vec::with_capacity(n * (da + db));
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        for i in 0..n {
            out.extend_from_slice(&av[i * da..(i + 1) * da]);
            out.extend_from_slice(&bv[i * db..(i + 1) * db]);
        }
        let t = Tensor::new(vec![n, da + db], out)?;
        self.push_op(Op::Concat, vec![a, b], t)
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let t = self.value(x).clone().reshape(shape)?;
        self.push_op(Op::Reshape, vec![x], t)
    }

    /// Flattens (n, ...) to (n, rest).
    pub fn flatten(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.value(x).shape();
        if s.is_empty() {
            return Err(Error::ShapeMismatch("flatten of scalar".into()));
        }
        let n = s[0];
        let rest: usize = s[1..].iter().product();
        self.reshape(x, vec![n, rest])
    }

    fn loss_shapes(&self, a: NodeId, b: NodeId, what: &str) -> Result<()> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::ShapeMismatch(format!(
                "{what}: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    /// mean(|pred - target|)
    pub fn l1_loss(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        self.loss_shapes(pred, target, "l1_loss")?;
        let n = self.value(pred).len() as f32;
        let s: f32 = self
            .value(pred)
            .data()
            .iter()
            .zip(self.value(target).data())
            .map(|(p, t)| (p - t).abs())
            .sum();
        self.push_op(Op::L1Loss, vec![pred, target], Tensor::scalar(s / n))
    }

    /// mean((pred - target)^2)
    pub fn mse_loss(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        self.loss_shapes(pred, target, "mse_loss")?;
        let n = self.value(pred).len() as f32;
        let s: f32 = self
            .value(pred)
            .data()
            .iter()
            .zip(self.value(target).data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        self.push_op(Op::MseLoss, vec![pred, target], Tensor::scalar(s / n))
    }

    /// mean(-y ln p - (1-y) ln(1-p)) with p clamped away from {0,1}.
    pub fn bce_loss(&mut self, p: NodeId, y: NodeId) -> Result<NodeId> {
        self.loss_shapes(p, y, "bce_loss")?;
        let n = self.value(p).len() as f32;
        let s: f32 = self
            .value(p)
            .data()
            .iter()
            .zip(self.value(y).data())
            .map(|(&p, &y)| {
                let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                -y * p.ln() - (1.0 - y) * (1.0 - p).ln()
            })
            .sum();
        self.push_op(Op::BceLoss, vec![p, y], Tensor::scalar(s / n))
    }

    // ---- backward ----

    /// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
    /// reachable trainable node, visiting the tape in reverse order.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::LossNotScalar(self.value(loss).shape().to_vec()));
        }
        self.value(loss).check_finite("loss")?;
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..self.nodes.len()).rev() {
            if self.nodes[i].grad.is_none() || !self.nodes[i].needs_grad {
                continue;
            }
            self.backprop_node(i)?;
        }
        Ok(())
    }

    fn take_grad(&mut self, i: usize) -> Vec<f32> {
        self.nodes[i].grad.clone().expect("grad present")
    }

    fn acc_grad(&mut self, id: NodeId, add: impl FnOnce(&mut [f32])) {
        if !self.nodes[id.0].needs_grad {
            return;
        }
        let n = self.nodes[id.0].value.len();
        let g = self.nodes[id.0].grad.get_or_insert_with(|| vec![0.0; n]);
        add(g);
    }

    fn backprop_node(&mut self, i: usize) -> Result<()> {
        let dy = self.take_grad(i);
        let op = self.nodes[i].op.clone();
        let inputs = self.nodes[i].inputs.clone();
        match op {
            Op::Input | Op::Param => {}
            Op::Matmul => {
                let (a, b) = (inputs[0], inputs[1]);
                let (n, k) = self.shape2(a, "")?;
                let m = self.value(b).shape()[1];
                let av = self.value(a).data().to_vec();
                let bv = self.value(b).data().to_vec();
                self.acc_grad(a, |g| gemm(n, m, k, 1.0, &dy, false, &bv, true, 1.0, g));
                self.acc_grad(b, |g| gemm(k, n, m, 1.0, &av, true, &dy, false, 1.0, g));
            }
            Op::AddBias => {
                let (x, b) = (inputs[0], inputs[1]);
                let m = self.value(b).len();
                self.acc_grad(x, |g| {
                    for (gv, dv) in g.iter_mut().zip(&dy) {
                        *gv += dv;
                    }
                });
                self.acc_grad(b, |g| {
                    for row in dy.chunks(m) {
                        for (gv, dv) in g.iter_mut().zip(row) {
                            *gv += dv;
                        }
                    }
                });
            }
            Op::Conv2d(geom) => self.backprop_conv(&geom, &inputs, &dy),
            Op::Upsample2x => {
                let x = inputs[0];
                let s = self.value(x).shape().to_vec();
                let (h, w) = (s[2], s[3]);
                self.acc_grad(x, |g| {
                    for p in 0..s[0] * s[1] {
                        let dp = &dy[p * 4 * h * w..(p + 1) * 4 * h * w];
                        let gp = &mut g[p * h * w..(p + 1) * h * w];
                        for y in 0..h {
                            for x2 in 0..w {
                                let base = 2 * y * 2 * w + 2 * x2;
                                gp[y * w + x2] += dp[base]
                                    + dp[base + 1]
                                    + dp[base + 2 * w]
                                    + dp[base + 2 * w + 1];
                            }
                        }
                    }
                });
            }
            Op::Relu => {
                let xv = self.value(inputs[0]).data().to_vec();
                self.acc_grad(inputs[0], |g| {
                    for ((gv, dv), xv) in g.iter_mut().zip(&dy).zip(&xv) {
                        if *xv > 0.0 {
                            *gv += dv;
                        }
                    }
                });
            }
            Op::Tanh => {
                let yv = self.nodes[i].value.data().to_vec();
                self.acc_grad(inputs[0], |g| {
                    for ((gv, dv), yv) in g.iter_mut().zip(&dy).zip(&yv) {
                        *gv += dv * (1.0 - yv * yv);
                    }
                });
            }
            Op::Sigmoid => {
                let yv = self.nodes[i].value.data().to_vec();
                self.acc_grad(inputs[0], |g| {
                    for ((gv, dv), yv) in g.iter_mut().zip(&dy).zip(&yv) {
                        *gv += dv * yv * (1.0 - yv);
                    }
                });
            }
            Op::Softplus => {
                let xv = self.value(inputs[0]).data().to_vec();
                self.acc_grad(inputs[0], |g| {
                    for ((gv, dv), xv) in g.iter_mut().zip(&dy).zip(&xv) {
                        *gv += dv * sigmoid(*xv);
                    }
                });
            }
            Op::Exp => {
                let yv = self.nodes[i].value.data().to_vec();
                self.acc_grad(inputs[0], |g| {
                    for ((gv, dv), yv) in g.iter_mut().zip(&dy).zip(&yv) {
                        *gv += dv * yv;
                    }
                });
            }
            Op::Neg => self.acc_grad(inputs[0], |g| {
                for (gv, dv) in g.iter_mut().zip(&dy) {
                    *gv -= dv;
                }
            }),
            Op::Square => {
                let xv = self.value(inputs[0]).data().to_vec();
                self.acc_grad(inputs[0], |g| {
                    for ((gv, dv), xv) in g.iter_mut().zip(&dy).zip(&xv) {
                        *gv += dv * 2.0 * xv;
                    }
                });
            }
            Op::Scale(c) => self.acc_grad(inputs[0], |g| {
                for (gv, dv) in g.iter_mut().zip(&dy) {
                    *gv += dv * c;
                }
            }),
            Op::AddScalar(_) => self.acc_grad(inputs[0], |g| {
                for (gv, dv) in g.iter_mut().zip(&dy) {
                    *gv += dv;
                }
            }),
            Op::Clamp(lo, hi) => {
                let xv = self.value(inputs[0]).data().to_vec();
                self.acc_grad(inputs[0], |g| {
                    for ((gv, dv), xv) in g.iter_mut().zip(&dy).zip(&xv) {
                        if *xv > lo && *xv < hi {
                            *gv += dv;
                        }
                    }
                });
            }
            Op::Add => {
                for inp in inputs {
                    self.acc_grad(inp, |g| {
                        for (gv, dv) in g.iter_mut().zip(&dy) {
                            *gv += dv;
                        }
                    });
                }
            }
            Op::Sub => {
                self.acc_grad(inputs[0], |g| {
                    for (gv, dv) in g.iter_mut().zip(&dy) {
                        *gv += dv;
                    }
                });
                self.acc_grad(inputs[1], |g| {
                    for (gv, dv) in g.iter_mut().zip(&dy) {
                        *gv -= dv;
                    }
                });
            }
            Op::Mul => {
                let av = self.value(inputs[0]).data().to_vec();
                let bv = self.value(inputs[1]).data().to_vec();
                self.acc_grad(inputs[0], |g| {
                    for ((gv, dv), bv) in g.iter_mut().zip(&dy).zip(&bv) {
                        *gv += dv * bv;
                    }
                });
                self.acc_grad(inputs[1], |g| {
                    for ((gv, dv), av) in g.iter_mut().zip(&dy).zip(&av) {
                        *gv += dv * av;
                    }
                });
            }
            Op::Minimum => {
                let av = self.value(inputs[0]).data().to_vec();
                let bv = self.value(inputs[1]).data().to_vec();
                self.acc_grad(inputs[0], |g| {
                    for (k, (gv, dv)) in g.iter_mut().zip(&dy).enumerate() {
                        if av[k] <= bv[k] {
                            *gv += dv;
                        }
                    }
                });
                self.acc_grad(inputs[1], |g| {
                    for (k, (gv, dv)) in g.iter_mut().zip(&dy).enumerate() {
                        if bv[k] < av[k] {
                            *gv += dv;
                        }
                    }
                });
            }
            Op::RowBroadcastMul => {
                let (x, v) = (inputs[0], inputs[1]);
                let d = self.value(v).len();
                let xv = self.value(x).data().to_vec();
                let vv = self.value(v).data().to_vec();
                self.acc_grad(x, |g| {
                    for (row, drow) in g.chunks_mut(d).zip(dy.chunks(d)) {
                        for ((gv, dv), vv) in row.iter_mut().zip(drow).zip(&vv) {
                            *gv += dv * vv;
                        }
                    }
                });
                self.acc_grad(v, |g| {
                    for (xrow, drow) in xv.chunks(d).zip(dy.chunks(d)) {
                        for ((gv, dv), xv) in g.iter_mut().zip(drow).zip(xrow) {
                            *gv += dv * xv;
                        }
                    }
                });
            }
            Op::RowBroadcastAdd => {
                let (x, v) = (inputs[0], inputs[1]);
                let d = self.value(v).len();
                self.acc_grad(x, |g| {
                    for (gv, dv) in g.iter_mut().zip(&dy) {
                        *gv += dv;
                    }
                });
                self.acc_grad(v, |g| {
                    for drow in dy.chunks(d) {
                        for (gv, dv) in g.iter_mut().zip(drow) {
                            *gv += dv;
                        }
                    }
                });
            }
            Op::RowSum => {
                let d = self.value(inputs[0]).shape()[1];
                self.acc_grad(inputs[0], |g| {
                    for (row, dv) in g.chunks_mut(d).zip(&dy) {
                        for gv in row {
                            *gv += dv;
                        }
                    }
                });
            }
            Op::SumAll => self.acc_grad(inputs[0], |g| {
                for gv in g.iter_mut() {
                    *gv += dy[0];
                }
            }),
            Op::MeanAll => {
                let n = self.value(inputs[0]).len() as f32;
                self.acc_grad(inputs[0], |g| {
                    for gv in g.iter_mut() {
                        *gv += dy[0] / n;
                    }
                });
            }
            Op::Concat => {
                let (a, b) = (inputs[0], inputs[1]);
                let da = self.value(a).shape()[1];
                let db = self.value(b).shape()[1];
                self.acc_grad(a, |g| {
                    for (row, drow) in g.chunks_mut(da).zip(dy.chunks(da + db)) {
                        for (gv, dv) in row.iter_mut().zip(&drow[..da]) {
                            *gv += dv;
                        }
                    }
                });
                self.acc_grad(b, |g| {
                    for (row, drow) in g.chunks_mut(db).zip(dy.chunks(da + db)) {
                        for (gv, dv) in row.iter_mut().zip(&drow[da..]) {
                            *gv += dv;
                        }
                    }
                });
            }
            Op::Reshape => self.acc_grad(inputs[0], |g| {
                for (gv, dv) in g.iter_mut().zip(&dy) {
                    *gv += dv;
                }
            }),
            Op::L1Loss => {
                let (p, t) = (inputs[0], inputs[1]);
                let n = self.value(p).len() as f32;
                let pv = self.value(p).data().to_vec();
                let tv = self.value(t).data().to_vec();
                self.acc_grad(p, |g| {
                    for (k, gv) in g.iter_mut().enumerate() {
                        *gv += dy[0] * (pv[k] - tv[k]).signum() / n;
                    }
                });
                self.acc_grad(t, |g| {
                    for (k, gv) in g.iter_mut().enumerate() {
                        *gv -= dy[0] * (pv[k] - tv[k]).signum() / n;
                    }
                });
            }
            Op::MseLoss => {
                let (p, t) = (inputs[0], inputs[1]);
                let n = self.value(p).len() as f32;
                let pv = self.value(p).data().to_vec();
                let tv = self.value(t).data().to_vec();
                self.acc_grad(p, |g| {
                    for (k, gv) in g.iter_mut().enumerate() {
                        *gv += dy[0] * 2.0 * (pv[k] - tv[k]) / n;
                    }
                });
                self.acc_grad(t, |g| {
                    for (k, gv) in g.iter_mut().enumerate() {
                        *gv -= dy[0] * 2.0 * (pv[k] - tv[k]) / n;
                    }
                });
            }
            Op::BceLoss => {
                let (p, y) = (inputs[0], inputs[1]);
                let n = self.value(p).len() as f32;
                let pv = self.value(p).data().to_vec();
                let yv = self.value(y).data().to_vec();
                self.acc_grad(p, |g| {
                    for (k, gv) in g.iter_mut().enumerate() {
                        let pc = pv[k].clamp(BCE_EPS, 1.0 - BCE_EPS);
                        *gv += dy[0] * (pc - yv[k]) / (pc * (1.0 - pc)) / n;
                    }
                });
            }
        }
        Ok(())
    }

    fn backprop_conv(&mut self, g: &ConvGeom, inputs: &[NodeId], dy: &[f32]) {
        let (x, w, b) = (inputs[0], inputs[1], inputs[2]);
        let n = self.value(x).shape()[0];
        let (oh, ow) = (g.out_h(), g.out_w());
        let img = g.chans_in * g.h * g.w;
        let oimg = g.chans_out * oh * ow;
        let xv = self.value(x).data().to_vec();
        let wv = self.value(w).data().to_vec();
        let need_x = self.nodes[x.0].needs_grad;
        let need_w = self.nodes[w.0].needs_grad;
        let need_b = self.nodes[b.0].needs_grad;

        let mut col = vec![0.0; g.col_rows() * g.col_cols()];
        let mut dcol = vec![0.0; g.col_rows() * g.col_cols()];
        let mut dx = if need_x { vec![0.0; n * img] } else { vec![] };
        let mut dw = if need_w { vec![0.0; wv.len()] } else { vec![] };
        let mut db = if need_b { vec![0.0; g.chans_out] } else { vec![] };

        for i in 0..n {
            let dyi = &dy[i * oimg..(i + 1) * oimg];
            if need_w {
                im2col(&xv[i * img..(i + 1) * img], g, &mut col);
                gemm(
                    g.chans_out,
                    g.col_cols(),
                    g.col_rows(),
                    1.0,
                    dyi,
                    false,
                    &col,
                    true,
                    1.0,
                    &mut dw,
                );
            }
            if need_x {
                gemm(
                    g.col_rows(),
                    g.chans_out,
                    g.col_cols(),
                    1.0,
                    &wv,
                    true,
                    dyi,
                    false,
                    0.0,
                    &mut dcol,
                );
                col2im_add(&dcol, g, &mut dx[i * img..(i + 1) * img]);
            }
            if need_b {
                for (c, chunk) in dyi.chunks(oh * ow).enumerate() {
                    db[c] += chunk.iter().sum::<f32>();
                }
            }
        }
        if need_x {
            self.acc_grad(x, |gr| {
                for (gv, dv) in gr.iter_mut().zip(&dx) {
                    *gv += dv;
                }
            });
        }
        if need_w {
            self.acc_grad(w, |gr| {
                for (gv, dv) in gr.iter_mut().zip(&dw) {
                    *gv += dv;
                }
            });
        }
        if need_b {
            self.acc_grad(b, |gr| {
                for (gv, dv) in gr.iter_mut().zip(&db) {
                    *gv += dv;
                }
            });
        }
    }

    /// Sums gradients per parameter name across every occurrence on the tape.
    pub fn param_grads(&self) -> HashMap<String, Tensor> {
        let mut out: HashMap<String, Tensor> = HashMap::new();
        for node in &self.nodes {
            let (Some(name), Some(grad)) = (&node.param, &node.grad) else {
                continue;
            };
            match out.get_mut(name) {
                Some(t) => {
                    for (gv, dv) in t.data_mut().iter_mut().zip(grad) {
                        *gv += dv;
                    }
                }
                None => {
                    let t = Tensor::new(node.value.shape().to_vec(), grad.clone())
                        .expect("grad shape matches value");
                    out.insert(name.clone(), t);
                }
            }
        }
        out
    }

    fn shape2(&self, id: NodeId, what: &str) -> Result<(usize, usize)> {
        let s = self.value(id).shape();
        if s.len() != 2 {
            return Err(Error::ShapeMismatch(format!("{what}: expected 2-d, got {s:?}")));
        }
        Ok((s[0], s[1]))
    }
}

const BCE_EPS: f32 = 1e-7;

pub fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softplus(x: f32) -> f32 {
    // numerically stable ln(1 + e^x)
    if x > 20.0 {
        x
    } else if x < -20.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}
