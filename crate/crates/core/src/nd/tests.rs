use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::*;
use super::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn dense_zero_weights_gives_bias() {
    let mut ps = ParamSet::new();
    ps.insert("w", Tensor::zeros(&[3, 2]));
    ps.insert("b", Tensor::from_vec(vec![0.5, -1.5]));
    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.0, 4.0]).unwrap());
    let w = g.param(&ps, "w");
    let b = g.param(&ps, "b");
    let h = g.matmul(x, w).unwrap();
    let out = g.add_bias(h, b).unwrap();
    assert_eq!(g.value(out).data(), &[0.5, -1.5, 0.5, -1.5]);
}

#[test]
fn conv_1x1_identity_kernel_preserves_input() {
    let mut g = Graph::new();
    let mut r = rng(1);
    let xv = rand_vec(2 * 1 * 4 * 4, &mut r);
    let x = g.input(Tensor::new(vec![2, 1, 4, 4], xv.clone()).unwrap());
    let w = g.input(Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap());
    let b = g.input(Tensor::zeros(&[1]));
    let y = g.conv2d(x, w, b, 1, 0).unwrap();
    assert_eq!(g.value(y).data(), &xv[..]);
}

#[test]
fn two_layer_net_matches_straight_line_oracle() {
    let mut r = rng(7);
    let (n, d0, d1, d2) = (3, 4, 5, 2);
    let xv = rand_vec(n * d0, &mut r);
    let w1 = rand_vec(d0 * d1, &mut r);
    let b1 = rand_vec(d1, &mut r);
    let w2 = rand_vec(d1 * d2, &mut r);
    let b2 = rand_vec(d2, &mut r);

    let mut ps = ParamSet::new();
    ps.insert("l1.w", Tensor::new(vec![d0, d1], w1.clone()).unwrap());
    ps.insert("l1.b", Tensor::new(vec![d1], b1.clone()).unwrap());
    ps.insert("l2.w", Tensor::new(vec![d1, d2], w2.clone()).unwrap());
    ps.insert("l2.b", Tensor::new(vec![d2], b2.clone()).unwrap());

    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![n, d0], xv.clone()).unwrap());
    let h = layers::dense(&mut g, &ps, "l1", x, true).unwrap();
    let h = g.tanh(h).unwrap();
    let y = layers::dense(&mut g, &ps, "l2", h, true).unwrap();

    let f64v = |v: &[f32]| v.iter().map(|&x| x as f64).collect::<Vec<f64>>();
    let h_ref = ref_dense(&f64v(&xv), &f64v(&w1), &f64v(&b1), n, d0, d1);
    let h_ref = ref_tanh(&h_ref);
    let y_ref = ref_dense(&h_ref, &f64v(&w2), &f64v(&b2), n, d1, d2);
    for (a, b) in g.value(y).data().iter().zip(&y_ref) {
        assert!((*a as f64 - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn backward_sum_is_all_ones() {
    let mut ps = ParamSet::new();
    ps.insert("x", Tensor::from_vec(vec![1.0, -2.0, 3.0]));
    let mut g = Graph::new();
    let x = g.param(&ps, "x");
    let loss = g.sum_all(x).unwrap();
    g.backward(loss).unwrap();
    assert_eq!(g.param_grads()["x"].data(), &[1.0, 1.0, 1.0]);
}

#[test]
fn backward_half_square_is_identity() {
    let mut ps = ParamSet::new();
    ps.insert("x", Tensor::from_vec(vec![1.5, -2.0, 0.25]));
    let mut g = Graph::new();
    let x = g.param(&ps, "x");
    let sq = g.square(x).unwrap();
    let half = g.scale(sq, 0.5).unwrap();
    let loss = g.sum_all(half).unwrap();
    g.backward(loss).unwrap();
    assert_eq!(g.param_grads()["x"].data(), &[1.5, -2.0, 0.25]);
}

#[test]
fn three_layer_net_matches_finite_differences() {
    let mut r = rng(11);
    let (n, d0, d1, d2, d3) = (2, 3, 4, 4, 2);
    let xv = rand_vec(n * d0, &mut r);
    let probe = rand_vec(n * d3, &mut r);
    let dims = [(d0, d1), (d1, d2), (d2, d3)];
    let mut ps = ParamSet::new();
    let mut flat = Vec::new();
    for (i, (fin, fout)) in dims.iter().enumerate() {
        let w = rand_vec(fin * fout, &mut r);
        let b = rand_vec(*fout, &mut r);
        flat.extend(w.iter().map(|&v| v as f64));
        flat.extend(b.iter().map(|&v| v as f64));
        ps.insert(&format!("l{i}.w"), Tensor::new(vec![*fin, *fout], w).unwrap());
        ps.insert(&format!("l{i}.b"), Tensor::new(vec![*fout], b).unwrap());
    }

    let mut g = Graph::new();
    let x = g.input(Tensor::new(vec![n, d0], xv.clone()).unwrap());
    let mut h = x;
    for i in 0..3 {
        h = layers::dense(&mut g, &ps, &format!("l{i}"), h, true).unwrap();
        if i < 2 {
            h = g.tanh(h).unwrap();
        }
    }
    let p = g.input(Tensor::new(vec![n, d3], probe.clone()).unwrap());
    let prod = g.mul(h, p).unwrap();
    let loss = g.sum_all(prod).unwrap();
    g.backward(loss).unwrap();
    let grads = g.param_grads();

    let x64: Vec<f64> = xv.iter().map(|&v| v as f64).collect();
    let probe64: Vec<f64> = probe.iter().map(|&v| v as f64).collect();
    let mut f = |params: &[f64]| {
        let mut off = 0;
        let mut h = x64.clone();
        let mut rows = n;
        for (i, (fin, fout)) in dims.iter().enumerate() {
            let w = &params[off..off + fin * fout];
            off += fin * fout;
            let b = &params[off..off + fout];
            off += fout;
            h = ref_dense(&h, w, b, rows, *fin, *fout);
            if i < 2 {
                h = ref_tanh(&h);
            }
            rows = n;
        }
        probe_loss(&h, &probe64)
    };
    let numeric = central_diff(&mut f, &flat, 1e-4);

    let mut analytic = Vec::new();
    for i in 0..3 {
        analytic.extend_from_slice(grads[&format!("l{i}.w")].data());
        analytic.extend_from_slice(grads[&format!("l{i}.b")].data());
    }
    let err = rel_err(&analytic, &numeric);
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn adam_zero_gradient_leaves_parameters_unchanged() {
    let mut ps = ParamSet::new();
    ps.insert("x", Tensor::from_vec(vec![1.0, 2.0]));
    let before = ps.get("x").clone();
    let mut grads = HashMap::new();
    grads.insert("x".to_string(), Tensor::zeros(&[2]));
    ps.adam_step(&grads, 3e-4).unwrap();
    assert_eq!(ps.get("x"), &before);
    assert_eq!(ps.step_count(), 1);
}

#[test]
fn adam_first_step_magnitude_is_lr_times_sign() {
    let mut ps = ParamSet::new();
    ps.insert("x", Tensor::from_vec(vec![0.0, 0.0, 0.0]));
    let mut grads = HashMap::new();
    grads.insert("x".to_string(), Tensor::from_vec(vec![0.3, -7.0, 1e-3]));
    let lr = 0.01;
    ps.adam_step(&grads, lr).unwrap();
    for (&p, &g) in ps.get("x").data().iter().zip([0.3f32, -7.0, 1e-3].iter()) {
        assert!((p + lr * g.signum()).abs() < lr * 0.01, "p={p} g={g}");
    }
}

#[test]
fn adam_on_quadratic_bowl_decreases_loss() {
    let mut ps = ParamSet::new();
    ps.insert("x", Tensor::from_vec(vec![2.0, -3.0]));
    let mut last = f32::INFINITY;
    for _ in 0..10 {
        let mut g = Graph::new();
        let x = g.param(&ps, "x");
        let sq = g.square(x).unwrap();
        let loss = g.sum_all(sq).unwrap();
        let lv = g.value(loss).item();
        assert!(lv < last, "loss must strictly decrease: {lv} vs {last}");
        last = lv;
        g.backward(loss).unwrap();
        ps.adam_step(&g.param_grads(), 0.05).unwrap();
    }
}

#[test]
fn adam_update_direction_invariant_to_loss_scale() {
    // After moment warm-up, rescaling all gradients by c>0 must not change
    // the update sign pattern.
    let run = |c: f32| -> Vec<f32> {
        let mut ps = ParamSet::new();
        ps.insert("x", Tensor::from_vec(vec![0.0; 8]));
        let mut r = rng(3);
        let mut seq = Vec::new();
        for _ in 0..60 {
            seq.push(rand_vec(8, &mut r));
        }
        for gv in &seq {
            let mut grads = HashMap::new();
            grads.insert(
                "x".to_string(),
                Tensor::from_vec(gv.iter().map(|v| v * c).collect()),
            );
            ps.adam_step(&grads, 1e-3).unwrap();
        }
        // one more step; record the update sign
        let before = ps.get("x").data().to_vec();
        let mut grads = HashMap::new();
        grads.insert(
            "x".to_string(),
            Tensor::from_vec(seq[0].iter().map(|v| v * c).collect()),
        );
        ps.adam_step(&grads, 1e-3).unwrap();
        ps.get("x")
            .data()
            .iter()
            .zip(before)
            .map(|(a, b)| (a - b).signum())
            .collect()
    };
    assert_eq!(run(1.0), run(100.0));
}

#[test]
fn relu_layer_example() {
    let mut g = Graph::new();
    let x = g.input(Tensor::from_vec(vec![-1.0, 0.0, 2.0]));
    let y = g.relu(x).unwrap();
    assert_eq!(g.value(y).data(), &[0.0, 0.0, 2.0]);
}

#[test]
fn l1_loss_of_identical_tensors_is_zero() {
    let mut g = Graph::new();
    let x = g.input(Tensor::from_vec(vec![1.0, -2.0, 3.0]));
    let y = g.input(Tensor::from_vec(vec![1.0, -2.0, 3.0]));
    let l = g.l1_loss(x, y).unwrap();
    assert_eq!(g.value(l).item(), 0.0);
}

#[test]
fn bce_at_half_prob_is_ln2() {
    let mut g = Graph::new();
    let p = g.input(Tensor::from_vec(vec![0.5]));
    let y = g.input(Tensor::from_vec(vec![1.0]));
    let l = g.bce_loss(p, y).unwrap();
    assert!((g.value(l).item() - std::f32::consts::LN_2).abs() < 1e-6);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut ps = ParamSet::new();
    ps.insert("x", Tensor::from_vec(vec![1.0, 2.0]));
    let mut g = Graph::new();
    let x = g.param(&ps, "x");
    assert!(matches!(
        g.backward(x),
        Err(crate::error::Error::LossNotScalar(_))
    ));
}

#[test]
fn matmul_shape_mismatch_is_an_error() {
    let mut g = Graph::new();
    let a = g.input(Tensor::zeros(&[2, 3]));
    let b = g.input(Tensor::zeros(&[4, 2]));
    assert!(g.matmul(a, b).is_err());
}

#[test]
fn non_finite_op_output_is_an_error() {
    let mut g = Graph::new();
    let x = g.input(Tensor::from_vec(vec![100.0]));
    let e = g.exp(x); // overflows f32
    assert!(matches!(e, Err(crate::error::Error::NonFinite(_))));
}

#[test]
fn adam_rejects_non_finite_gradient() {
    let mut ps = ParamSet::new();
    ps.insert("x", Tensor::from_vec(vec![1.0]));
    let mut grads = HashMap::new();
    grads.insert("x".to_string(), Tensor::from_vec(vec![f32::NAN]));
    assert!(ps.adam_step(&grads, 1e-3).is_err());
}

#[test]
fn seeded_training_is_bit_deterministic() {
    let run = || -> Vec<f32> {
        let mut r = rng(42);
        let mut ps = ParamSet::new();
        layers::init_dense(&mut ps, "l", 4, 3, Init::He, &mut r);
        for _ in 0..5 {
            let xv = rand_vec(2 * 4, &mut r);
            let mut g = Graph::new();
            let x = g.input(Tensor::new(vec![2, 4], xv).unwrap());
            let h = layers::dense(&mut g, &ps, "l", x, true).unwrap();
            let sq = g.square(h).unwrap();
            let loss = g.mean_all(sq).unwrap();
            g.backward(loss).unwrap();
            ps.adam_step(&g.param_grads(), 1e-3).unwrap();
        }
        ps.get("l.w").data().to_vec()
    };
    let (a, b) = (run(), run());
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(9);
    let mut ps = ParamSet::new();
    layers::init_dense(&mut ps, "a", 3, 5, Init::He, &mut r);
    layers::init_conv(&mut ps, "c", 2, 4, 3, Init::Xavier, &mut r);
    // give the moments non-zero values
    let mut grads = HashMap::new();
    for name in ["a.w", "a.b", "c.w", "c.b"] {
        let shape = ps.get(name).shape().to_vec();
        let n = shape.iter().product();
        grads.insert(name.to_string(), Tensor::new(shape, rand_vec(n, &mut r)).unwrap());
    }
    ps.adam_step(&grads, 1e-3).unwrap();

    let p1 = dir.path().join("a.glnn");
    let p2 = dir.path().join("b.glnn");
    checkpoint::save(&ps, &p1).unwrap();
    let loaded = checkpoint::load(&p1).unwrap();
    assert_eq!(loaded.step_count(), ps.step_count());
    checkpoint::save(&loaded, &p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
}
