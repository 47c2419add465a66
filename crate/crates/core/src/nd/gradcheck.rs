//! Central finite-difference gradient checking against a 64-bit reference
//! forward pass. The reference closure must be independent straight-line
//! arithmetic; it is evaluated at perturbed points and never touches the
//! tape being checked.

/// d/dx_i f(x) by central differences, all in f64.
pub fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + eps;
        let hi = f(&xp);
        xp[i] = orig - eps;
        let lo = f(&xp);
        xp[i] = orig;
        out.push((hi - lo) / (2.0 * eps));
    }
    out
}

/// Max-norm relative error between an analytic f32 gradient and the
/// numeric f64 reference.
pub fn rel_err(analytic: &[f32], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let scale = numeric
        .iter()
        .map(|v| v.abs())
        .fold(0.0f64, f64::max)
        .max(1.0);
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a as f64 - n).abs())
        .fold(0.0f64, f64::max)
        / scale
}

// ---- f64 reference layer forwards ----

pub fn ref_dense(x: &[f64], w: &[f64], b: &[f64], n: usize, k: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            let mut acc = b[j];
            for p in 0..k {
                acc += x[i * k + p] * w[p * m + j];
            }
            out[i * m + j] = acc;
        }
    }
    out
}

/// Direct (non-im2col) convolution, NCHW, square kernel, zero padding.
#[allow(clippy::too_many_arguments)]
pub fn ref_conv2d(
    x: &[f64],
    w: &[f64],
    b: &[f64],
    n: usize,
    cin: usize,
    h: usize,
    wd: usize,
    cout: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let oh = (h + 2 * pad - kernel) / stride + 1;
    let ow = (wd + 2 * pad - kernel) / stride + 1;
    let mut out = vec![0.0; n * cout * oh * ow];
    for i in 0..n {
        for co in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[co];
                    for ci in 0..cin {
                        for ky in 0..kernel {
                            for kx in 0..kernel {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || iy >= h as isize || ix < 0 || ix >= wd as isize {
                                    continue;
                                }
                                acc += x[((i * cin + ci) * h + iy as usize) * wd + ix as usize]
                                    * w[((co * cin + ci) * kernel + ky) * kernel + kx];
                            }
                        }
                    }
                    out[((i * cout + co) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    out
}

pub fn ref_relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.max(0.0)).collect()
}

pub fn ref_tanh(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.tanh()).collect()
}

pub fn ref_sigmoid(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect()
}

pub fn ref_softplus(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.exp().ln_1p()).collect()
}

pub fn ref_upsample2x(x: &[f64], planes: usize, h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![0.0; planes * 4 * h * w];
    for p in 0..planes {
        for y in 0..h {
            for x2 in 0..w {
                let v = x[p * h * w + y * w + x2];
                let base = p * 4 * h * w + 2 * y * 2 * w + 2 * x2;
                out[base] = v;
                out[base + 1] = v;
                out[base + 2 * w] = v;
                out[base + 2 * w + 1] = v;
            }
        }
    }
    out
}

pub fn ref_l1(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter()
        .zip(target)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / pred.len() as f64
}

pub fn ref_mse(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64
}

pub fn ref_bce(p: &[f64], y: &[f64]) -> f64 {
    p.iter()
        .zip(y)
        .map(|(&p, &y)| {
            let p = p.clamp(1e-7, 1.0 - 1e-7);
            -y * p.ln() - (1.0 - y) * (1.0 - p).ln()
        })
        .sum::<f64>()
        / p.len() as f64
}

/// loss = sum(out * probe), the scalarizer used by every gradient check.
pub fn probe_loss(out: &[f64], probe: &[f64]) -> f64 {
    out.iter().zip(probe).map(|(o, p)| o * p).sum()
}
