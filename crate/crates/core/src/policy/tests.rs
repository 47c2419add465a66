use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::env::{make_pair, GapLevel, TaskId};

/// 1-step continuous bandit: constant frame, reward -(a - 0.5)^2.
struct Bandit {
    h: usize,
    w: usize,
    last_a: f32,
}

impl Bandit {
    fn new() -> Self {
        Self {
            h: 20,
            w: 20,
            last_a: 0.0,
        }
    }

    fn obs(&self) -> Observation {
        Observation {
            height: self.h,
            width: self.w,
            pixels: vec![0.3; 3 * self.h * self.w],
        }
    }
}

impl PolicyEnv for Bandit {
    fn reset(&mut self) -> Result<(Observation, StateVector)> {
        Ok((self.obs(), vec![0.0]))
    }

    fn step(&mut self, a: &[f32]) -> Result<(Observation, StateVector, f32, bool)> {
        self.last_a = a[0];
        let r = -(a[0] - 0.5) * (a[0] - 0.5);
        Ok((self.obs(), vec![0.0], r, true))
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn frame_size(&self) -> (usize, usize) {
        (self.h, self.w)
    }
}

fn bandit_run(entropy_coef: f32, steps: usize, seed: u64) -> (Actor, f32) {
    let mut env = Bandit::new();
    let mut actor = Actor::new(20, 20, 1, seed);
    let mut critic = Critic::new(1, 1, seed + 1);
    let cfg = SacConfig {
        entropy_coef,
        warmup_steps: 100,
        replay_capacity: 10_000,
        ..Default::default()
    };
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity, 20, 20, 1, 1);
    train_policy(&mut actor, &mut critic, &mut buffer, &mut env, steps, &cfg, seed + 2).unwrap();
    // converged policy std at the bandit state, via the log_std head
    let mut stack = FrameStack::new(20, 20);
    stack.reset(&env.obs());
    let x = actor
        .crop_tensor(&[&stack.stacked()], &[CropWindow::center(20, 20)])
        .unwrap();
    let mut g = Graph::new();
    let xi = g.input(x);
    let (_, log_std) = actor.dist(&mut g, xi, false).unwrap();
    let std = g.value(log_std).data()[0].exp();
    (actor, std)
}

#[test]
fn crop_shapes_and_windows() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let stack: Vec<f32> = (0..9 * 32 * 32).map(|i| (i % 251) as f32 / 250.0).collect();
    let out = crop_augment(&stack, 32, 32, Some(&mut rng));
    assert_eq!(out.len(), 9 * 28 * 28);

    // pinned top-left window equals the raw sub-grid
    let mut corner = vec![0.0f32; 9 * 28 * 28];
    crop_into(&stack, 32, 32, 9, CropWindow { dy: 0, dx: 0 }, &mut corner);
    for c in 0..9 {
        for y in 0..28 {
            for x in 0..28 {
                assert_eq!(corner[(c * 28 + y) * 28 + x], stack[(c * 32 + y) * 32 + x]);
            }
        }
    }

    // evaluation mode: deterministic center crop
    let eval1 = crop_augment(&stack, 32, 32, None);
    let eval2 = crop_augment(&stack, 32, 32, None);
    assert_eq!(eval1, eval2);
    assert_eq!(CropWindow::center(32, 32), CropWindow { dy: 2, dx: 2 });
}

#[test]
fn crop_window_is_shared_across_stack() {
    // frame k is the constant k; any crop must preserve that
    let mut stack = vec![0.0f32; 9 * 32 * 32];
    for c in 0..9 {
        for v in &mut stack[c * 1024..(c + 1) * 1024] {
            *v = c as f32 / 10.0;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let out = crop_augment(&stack, 32, 32, Some(&mut rng));
    for c in 0..9 {
        assert!(out[c * 784..(c + 1) * 784].iter().all(|&v| v == c as f32 / 10.0));
    }
}

#[test]
fn replay_fifo_and_counters() {
    let mut buf = ReplayBuffer::new(3, 8, 8, 1, 1);
    let stack = vec![0.5f32; 9 * 64];
    for i in 0..5 {
        buf.push(&stack, &[0.0], &[0.1], i as f32, &stack, &[0.0], false);
    }
    assert_eq!(buf.len(), 3);
    assert_eq!(buf.total_pushes(), 5);
    // rewards 0 and 1 were overwritten in FIFO order
    let mut seen = buf.rewards.clone();
    seen.sort_by(f32::total_cmp);
    assert_eq!(seen, vec![2.0, 3.0, 4.0]);
}

#[test]
fn sac_update_requires_full_batch() {
    let mut actor = Actor::new(20, 20, 1, 0);
    let mut critic = Critic::new(1, 1, 1);
    let buf = ReplayBuffer::new(100, 20, 20, 1, 1);
    let cfg = SacConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(sac_update(&mut actor, &mut critic, &buf, &cfg, &mut rng).is_err());
}

#[test]
fn bellman_target_arithmetic() {
    let cfg = SacConfig::default();
    // terminal: no bootstrap
    assert_eq!(bellman_target(1.5, true, 10.0, -3.0, &cfg), 1.5);
    // r=1, min-Q'=2, gamma=0.99, entropy coefficient 0.001
    let e = -3.0f32;
    let expect = 1.0 + 0.99 * (2.0 - 0.001 * e);
    assert!((bellman_target(1.0, false, 2.0, e, &cfg) - expect).abs() < 1e-6);
}

#[test]
fn critics_are_state_only() {
    let critic = Critic::new(4, 2, 0);
    // every first-layer weight matrix consumes state + action, no pixels
    assert_eq!(critic.params.get("q1.l1.w").shape()[0], 6);
    assert_eq!(critic.params.get("q2.l1.w").shape()[0], 6);
    // critic loss produces no encoder gradients
    let mut g = Graph::new();
    let s = g.input(Tensor::zeros(&[2, 4]));
    let a = g.input(Tensor::zeros(&[2, 2]));
    let q = Critic::q(&mut g, &critic.params, "q1", s, a, true).unwrap();
    let y = g.input(Tensor::zeros(&[2, 1]));
    let loss = g.mse_loss(q, y).unwrap();
    g.backward(loss).unwrap();
    assert!(g.param_grads().keys().all(|k| !k.starts_with("enc.")));
}

#[test]
fn train_policy_zero_steps_is_noop_and_counter_matches() {
    let mut env = Bandit::new();
    let mut actor = Actor::new(20, 20, 1, 7);
    let mut critic = Critic::new(1, 1, 8);
    let cfg = SacConfig {
        warmup_steps: 10,
        ..Default::default()
    };
    let mut buffer = ReplayBuffer::new(1000, 20, 20, 1, 1);
    let before: Vec<f32> = actor.params.get("mean.w").data().to_vec();
    let stats =
        train_policy(&mut actor, &mut critic, &mut buffer, &mut env, 0, &cfg, 0).unwrap();
    assert_eq!(stats.env_steps, 0);
    assert_eq!(actor.params.get("mean.w").data(), before.as_slice());

    let stats =
        train_policy(&mut actor, &mut critic, &mut buffer, &mut env, 50, &cfg, 0).unwrap();
    assert_eq!(stats.env_steps, 50);
    assert_eq!(buffer.total_pushes(), 50);
}

#[test]
fn emitted_actions_stay_in_range() {
    let actor = Actor::new(20, 20, 3, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let stack = vec![0.5f32; 9 * 400];
    for _ in 0..20 {
        let win = CropWindow::random(20, 20, &mut rng);
        let a = actor.act(&stack, win, &mut rng).unwrap();
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
    let d = actor.act_deterministic(&stack).unwrap();
    assert!(d.iter().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn bandit_converges_to_optimum() {
    let (actor, _) = bandit_run(0.001, 1500, 42);
    let mut stack = FrameStack::new(20, 20);
    stack.reset(&Bandit::new().obs());
    let a = actor.act_deterministic(&stack.stacked()).unwrap();
    assert!((a[0] - 0.5).abs() < 0.05, "policy mean {}", a[0]);
}

#[test]
fn entropy_coefficient_raises_policy_std() {
    let (_, std_low) = bandit_run(0.001, 900, 5);
    let (_, std_high) = bandit_run(0.1, 900, 5);
    assert!(
        std_high > std_low,
        "std {} at coef 0.1 vs {} at 0.001",
        std_high,
        std_low
    );
}

#[test]
fn proxy_encoder_matches_actor_and_is_pure() {
    let actor = Actor::new(32, 32, 1, 3);
    let proxy = ProxyEncoder::from_actor(&actor);
    assert_eq!(proxy.feature_dim(), 50);
    let (mut src, _) = make_pair(TaskId::PointPendulum, GapLevel::Easy, 0).unwrap();
    let (obs, _) = src.reset();
    let f1 = proxy.encode(&obs).unwrap();
    let f2 = proxy.encode(&obs).unwrap();
    assert_eq!(f1.len(), 50);
    assert_eq!(f1, f2);
    // identical weights to the actor snapshot
    for name in proxy.params.names() {
        assert_eq!(proxy.params.get(name).data(), actor.params.get(name).data());
    }
}

#[test]
fn evaluate_is_deterministic_per_seed() {
    let actor = Actor::new(32, 32, 1, 9);
    let (mut src, _) = make_pair(TaskId::PointPendulum, GapLevel::Easy, 0).unwrap();
    let r1 = evaluate(&actor, &mut src, 2, 123).unwrap();
    let r2 = evaluate(&actor, &mut src, 2, 123).unwrap();
    assert_eq!(r1.mean_return, r2.mean_return);
    assert_eq!(r1.episodes, 2);
}
