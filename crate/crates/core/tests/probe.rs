// Temporary calibration probes; not part of the suite.

use std::time::Instant;

use idapt_core::datasets::{collect, CollectionPolicy, Domain, Provenance};
use idapt_core::env::{make_pair, DomainSpec, EnvInstance, GapLevel, TaskId};
use idapt_core::policy::{evaluate, train_policy, Actor, Critic, InstrumentedEnv, ReplayBuffer, SacConfig};
use idapt_core::visual::{init_target_predictor, pretrain_source_predictor, train_translator, StatePredictor, Translator, VisualLossConfig};

#[test]
#[ignore]
fn probe_visual_epoch() {
    let task = TaskId::PointPendulum;
    let mut src = EnvInstance::new(task, DomainSpec::identity(task), true, 1).unwrap();
    let (_, mut tgt) = make_pair(task, GapLevel::Easy, 1).unwrap();
    let t0 = Instant::now();
    let ds_s = collect(&mut src, CollectionPolicy::UniformRandom, 1000, 2).unwrap();
    let ds_t = collect(&mut tgt, CollectionPolicy::UniformRandom, 1000, 3).unwrap();
    println!("collect 2x1000: {:?}", t0.elapsed());

    let mut p_s = StatePredictor::new(task, 32, 32, 4);
    let t0 = Instant::now();
    pretrain_source_predictor(&mut p_s, &ds_s, 1, 3e-4, 16, 5).unwrap();
    println!("pretrain 1 epoch / 1000 imgs: {:?}", t0.elapsed());

    let mut tr = Translator::new(32, 32, 6);
    let mut p_t = init_target_predictor(&p_s);
    let cfg = VisualLossConfig::default();
    let t0 = Instant::now();
    let stats = train_translator(&mut tr, &mut p_t, &ds_s, &ds_t, 1, 3e-4, &cfg, 7).unwrap();
    println!("translator 1 epoch / 1000 imgs: {:?} stats {:?}", t0.elapsed(), stats.last());
}

#[test]
#[ignore]
fn probe_sac_learning() {
    let task = TaskId::PointPendulum;
    let mut src = EnvInstance::new(task, DomainSpec::identity(task), true, 11).unwrap();
    let mut actor = Actor::new(32, 32, task.action_dim(), 12);
    let mut critic = Critic::new(task.state_dim(), task.action_dim(), 13);
    let mut buffer = ReplayBuffer::new(10_000, 32, 32, task.state_dim(), task.action_dim());
    let cfg = SacConfig {
        warmup_steps: 300,
        update_every: 2,
        ..Default::default()
    };
    let mut env = InstrumentedEnv(&mut src);
    for chunk in 0..4 {
        let t0 = Instant::now();
        let stats = train_policy(&mut actor, &mut critic, &mut buffer, &mut env, 1000, &cfg, 14 + chunk).unwrap();
        println!(
            "steps {}..{}: train return {:.1}, {} updates, {:?}",
            chunk * 1000,
            (chunk + 1) * 1000,
            stats.mean_episode_return,
            stats.updates,
            t0.elapsed()
        );
    }
    drop(env);
    let mut eval_src = EnvInstance::new(task, DomainSpec::identity(task), true, 20).unwrap();
    let t0 = Instant::now();
    let res = evaluate(&actor, &mut eval_src, 20, 21).unwrap();
    println!("eval source: return {:.1} success {:.2} ({:?})", res.mean_return, res.success_rate, t0.elapsed());
    let (_, target) = make_pair(task, GapLevel::Easy, 11).unwrap();
    let mut tclone = target.instrumented_clone(22).unwrap();
    let res = evaluate(&actor, &mut tclone, 20, 23).unwrap();
    println!("eval target-easy: return {:.1} success {:.2}", res.mean_return, res.success_rate);
    let _ = (Domain::Source, Provenance::Random);
}

#[test]
#[ignore]
fn probe_translator_quality() {
    use idapt_core::env::render::render;
    use idapt_core::env::target_spec;
    use idapt_core::visual::state_error;

    let task = TaskId::PointPendulum;
    let n = 20000;
    let epochs = 1;
    let mut src = EnvInstance::new(task, DomainSpec::identity(task), true, 1).unwrap();
    let (_, mut tgt) = make_pair(task, GapLevel::Easy, 1).unwrap();
    let ds_s = collect(&mut src, CollectionPolicy::UniformRandom, n, 2).unwrap();
    let ds_t = collect(&mut tgt, CollectionPolicy::UniformRandom, n, 3).unwrap();

    // oracle-paired eval data from an instrumented target clone
    let mut oracle_env = tgt.instrumented_clone(40).unwrap();
    let ds_oracle = collect(&mut oracle_env, CollectionPolicy::UniformRandom, 500, 41).unwrap();

    // held-out source states for pixel error
    let mut held_src = EnvInstance::new(task, DomainSpec::identity(task), true, 42).unwrap();
    let ds_held = collect(&mut held_src, CollectionPolicy::UniformRandom, 500, 43).unwrap();
    let tspec = target_spec(task, GapLevel::Easy);

    for lambda in [10.0f32] {
        let mut p_s = StatePredictor::new(task, 32, 32, 4);
        let t0 = Instant::now();
        pretrain_source_predictor(&mut p_s, &ds_s, 3, 3e-4, 16, 5).unwrap();
        let mut tr = Translator::new(32, 32, 6);
        let mut p_t = init_target_predictor(&p_s);
        let cfg = VisualLossConfig { lambda_reg: lambda, ..Default::default() };
        let stats = train_translator(&mut tr, &mut p_t, &ds_s, &ds_t, epochs, 3e-4, &cfg, 7).unwrap();
        println!("lambda {lambda}: trained in {:?}, last {:?}", t0.elapsed(), stats.last());

        // mean abs pixel error of G(o_s) vs oracle re-render
        let mut err_sum = 0.0f64;
        let mut cnt = 0usize;
        for i in 0..ds_held.len() {
            let o = ds_held.obs(i);
            let translated = idapt_core::visual::translate(&tr, &o).unwrap();
            let state = ds_held.state(i).unwrap();
            let oracle = render(task, state, &tspec.visual, &tspec.render);
            for (a, b) in translated.pixels.iter().zip(oracle.pixels.iter()) {
                err_sum += (a - b).abs() as f64;
                cnt += 1;
            }
        }
        println!("lambda {lambda}: heldout pixel error {:.4}", err_sum / cnt as f64);

        let idx: Vec<usize> = (0..ds_oracle.len()).collect();
        let serr = state_error(&p_t, &ds_oracle, &idx).unwrap();
        println!("lambda {lambda}: P_T state error on oracle pairs {serr:.4}");
    }
}

#[test]
#[ignore]
fn probe_visual_budget() {
    use idapt_core::env::render::render;
    use idapt_core::env::target_spec;

    let task = TaskId::PointPendulum;
    let mut held_src = EnvInstance::new(task, DomainSpec::identity(task), true, 42).unwrap();
    let ds_held = collect(&mut held_src, CollectionPolicy::UniformRandom, 300, 43).unwrap();
    let tspec = target_spec(task, GapLevel::Easy);

    for (n, epochs) in [(2000usize, 10usize), (5000, 4)] {
        let mut src = EnvInstance::new(task, DomainSpec::identity(task), true, 1).unwrap();
        let (_, mut tgt) = make_pair(task, GapLevel::Easy, 1).unwrap();
        let ds_s = collect(&mut src, CollectionPolicy::UniformRandom, n, 2).unwrap();
        let ds_t = collect(&mut tgt, CollectionPolicy::UniformRandom, n, 3).unwrap();
        let mut p_s = StatePredictor::new(task, 32, 32, 4);
        pretrain_source_predictor(&mut p_s, &ds_s, 3, 3e-4, 16, 5).unwrap();
        let mut tr = Translator::new(32, 32, 6);
        let mut p_t = init_target_predictor(&p_s);
        let cfg = VisualLossConfig::default();
        let t0 = Instant::now();
        train_translator(&mut tr, &mut p_t, &ds_s, &ds_t, epochs, 3e-4, &cfg, 7).unwrap();
        let mut err_sum = 0.0f64;
        let mut cnt = 0usize;
        for i in 0..ds_held.len() {
            let o = ds_held.obs(i);
            let translated = idapt_core::visual::translate(&tr, &o).unwrap();
            let state = ds_held.state(i).unwrap();
            let oracle = render(task, state, &tspec.visual, &tspec.render);
            for (a, b) in translated.pixels.iter().zip(oracle.pixels.iter()) {
                err_sum += (a - b).abs() as f64;
                cnt += 1;
            }
        }
        println!("n {n} epochs {epochs}: pixel error {:.4} ({:?})", err_sum / cnt as f64, t0.elapsed());
    }
}

#[test]
#[ignore]
fn probe_garat_recovery() {
    use idapt_core::action::{garat_train, identity_init, transform_action_deterministic, FeatureSource, PpoConfig, SmoothingConfig, TransitionDiscriminator};
    use idapt_core::env::target_spec;
    use idapt_core::grounded::VisualHook;
    use idapt_core::policy::FEATURE_DIM;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    let task = TaskId::PointPush;
    // dynamics gap: rotation + bias only
    let mut tspec = DomainSpec::identity(task);
    tspec.visual = target_spec(task, GapLevel::Easy).visual.clone();
    tspec.dynamics.action_rotation_deg = 45.0;
    tspec.dynamics.action_bias = vec![0.0, 0.0, -0.5];

    for seed in [1u64, 2, 3, 4, 5, 6] {
        let mut tgt = EnvInstance::new(task, tspec.clone(), true, seed * 100).unwrap();
        let d_t = collect(&mut tgt, CollectionPolicy::UniformRandom, 500, seed * 100 + 1).unwrap();

        let adim = task.action_dim();
        let sdim = task.state_dim();
        let mut agent = identity_init(sdim, adim, seed * 100 + 2);
        let mut disc = TransitionDiscriminator::new(sdim, adim, seed * 100 + 3);
        let smoothing = SmoothingConfig::default();
        let ppo = PpoConfig { rollout_len: 500, epochs: 10, entropy_coef: 0.0, ..Default::default() };
        for block in 0..1u64 {
        let src = EnvInstance::new(task, DomainSpec::identity(task), true, seed * 100 + 4 + 40 * block).unwrap();
        let t0 = Instant::now();
        let stats = garat_train(
            &mut agent, &mut disc, &FeatureSource::TrueState,
            VisualHook::Oracle(tspec.visual.clone()), src, &d_t,
            &smoothing, &ppo, 10, seed * 100 + 5 + block,
        ).unwrap();
        let last = stats.last().unwrap();
        println!("block {block}: garat {:?}, disc_acc {:.3} |d| {:.3} rew {:.3}", t0.elapsed(), last.disc_accuracy, last.mean_abs_delta, last.mean_reward);

        // one-step next-state error vs the real target, learned F vs identity F
        let mut eval_tgt = EnvInstance::new(task, tspec.clone(), true, seed * 100 + 6).unwrap();
        let mut src_l = EnvInstance::new(task, DomainSpec::identity(task), true, 1).unwrap();
        let mut src_i = EnvInstance::new(task, DomainSpec::identity(task), true, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed * 100 + 7);
        let (mut err_l, mut err_i) = (0.0f64, 0.0f64);
        let n_eval = 200;
        eval_tgt.reset();
        for k in 0..n_eval {
            if eval_tgt.episode_done() {
                eval_tgt.reset();
            }
            let snap = eval_tgt.snapshot();
            let a: Vec<f32> = (0..task.action_dim()).map(|_| rng.gen_range(-1.0..1.0f32)).collect();
            let tr_t = eval_tgt.step(&a).unwrap();
            let s_next = tr_t.next_state.clone().unwrap();

            src_l.reset_from(&snap).unwrap();
            let feat = src_l.state().unwrap();
            let ahat = transform_action_deterministic(&agent, &feat, &a, &smoothing).unwrap();
            let tr_l = src_l.step(&ahat).unwrap();
            err_l += l2(&tr_l.next_state.unwrap(), &s_next);

            src_i.reset_from(&snap).unwrap();
            let tr_i = src_i.step(&a).unwrap();
            err_i += l2(&tr_i.next_state.unwrap(), &s_next);
            let _ = k;
        }
        println!("block {block}: one-step error learned {:.5} identity {:.5} ratio {:.3}", err_l / n_eval as f64, err_i / n_eval as f64, err_l / err_i);
        }
        let _ = FEATURE_DIM;
    }
}

fn l2(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| ((x - y) as f64).powi(2)).sum::<f64>().sqrt()
}

#[test]
#[ignore]
fn probe_disc_alone() {
    use idapt_core::action::TransitionDiscriminator;
    use idapt_core::nd::{Graph, Tensor};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    let task = TaskId::PointPush;
    let mut tspec = DomainSpec::identity(task);
    tspec.dynamics.action_rotation_deg = 45.0;
    tspec.dynamics.action_bias = vec![0.0, 0.0, -0.5];

    let sdim = task.state_dim();
    let adim = task.action_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    // paired one-step tuples: same (s, a), next state under target vs source dynamics
    let mut tgt = EnvInstance::new(task, tspec.clone(), true, 10).unwrap();
    let mut src = EnvInstance::new(task, DomainSpec::identity(task), true, 11).unwrap();
    let n = 1000;
    let mut real = Vec::new();
    let mut fake = Vec::new();
    let mut dmag = 0.0f64;
    let mut gapmag = 0.0f64;
    tgt.reset();
    for _ in 0..n {
        if tgt.episode_done() { tgt.reset(); }
        let snap = tgt.snapshot();
        let s = tgt.state().unwrap();
        let a: Vec<f32> = (0..adim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let t_t = tgt.step(&a).unwrap();
        src.reset_from(&snap).unwrap();
        let t_s = src.step(&a).unwrap();
        let nt = t_t.next_state.unwrap();
        let ns = t_s.next_state.unwrap();
        dmag += l2(&nt, &s);
        gapmag += l2(&nt, &ns);
        real.extend(s.iter().copied());
        real.extend(a.iter().copied());
        real.extend(nt.iter().zip(&s).map(|(x, y)| x - y));
        fake.extend(s.iter().copied());
        fake.extend(a.iter().copied());
        fake.extend(ns.iter().zip(&s).map(|(x, y)| x - y));
    }
    println!("mean |s'-s| {:.4}, mean gap {:.4}", dmag / n as f64, gapmag / n as f64);

    let tuple_dim = 2 * sdim + adim;
    let mut disc = TransitionDiscriminator::new(sdim, adim, 12);
    for lr in [3e-4f32] {
        for epoch in 0..10 {
            let mut correct = 0usize;
            for it in 0..(n / 32) {
                let m = 32;
                let mut xr = Vec::new();
                let mut xf = Vec::new();
                for _ in 0..m {
                    let i = rng.gen_range(0..n);
                    xr.extend_from_slice(&real[i * tuple_dim..(i + 1) * tuple_dim]);
                    let j = rng.gen_range(0..n);
                    xf.extend_from_slice(&fake[j * tuple_dim..(j + 1) * tuple_dim]);
                }
                let mut g = Graph::new();
                let ri = g.input(Tensor::new(vec![m, tuple_dim], xr).unwrap());
                let pr = disc.forward(&mut g, ri, true).unwrap();
                let ones = g.input(Tensor::new(vec![m, 1], vec![1.0; m]).unwrap());
                let lr_ = g.bce_loss(pr, ones).unwrap();
                let fi = g.input(Tensor::new(vec![m, tuple_dim], xf).unwrap());
                let pf = disc.forward(&mut g, fi, true).unwrap();
                let zeros = g.input(Tensor::new(vec![m, 1], vec![0.0; m]).unwrap());
                let lf = g.bce_loss(pf, zeros).unwrap();
                let s_ = g.add(lr_, lf).unwrap();
                let loss = g.scale(s_, 0.5).unwrap();
                g.backward(loss).unwrap();
                disc.params.adam_step(&g.param_grads(), lr).unwrap();
                correct += g.value(pr).data().iter().filter(|&&p| p > 0.5).count();
                correct += g.value(pf).data().iter().filter(|&&p| p < 0.5).count();
                let _ = it;
            }
            println!("lr {lr} epoch {epoch}: acc {:.3}", correct as f64 / (2.0 * 32.0 * (n / 32) as f64));
        }
    }
}

#[test]
#[ignore]
fn probe_ppo_oracle_reward() {
    use idapt_core::action::{identity_init, ppo_update, PpoConfig, Rollout, smooth_and_clamp};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    let task = TaskId::PointPush;
    let mut tspec = DomainSpec::identity(task);
    tspec.dynamics.action_rotation_deg = 45.0;
    tspec.dynamics.action_bias = vec![0.0, 0.0, -0.5];
    let sdim = task.state_dim();
    let adim = task.action_dim();

    let mut agent = identity_init(sdim, adim, 50);
    let cfg = PpoConfig { rollout_len: 500, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let mut tgt = EnvInstance::new(task, tspec.clone(), true, 52).unwrap();
    let mut src = EnvInstance::new(task, DomainSpec::identity(task), true, 53).unwrap();

    for epoch in 0..20 {
        let mut rollout = Rollout::new(sdim + adim, adim);
        let mut abs_delta = 0.0f64;
        let mut err_sum = 0.0f64;
        tgt.reset();
        for _ in 0..cfg.rollout_len {
            if tgt.episode_done() { tgt.reset(); }
            let snap = tgt.snapshot();
            let s = tgt.state().unwrap();
            let a: Vec<f32> = (0..adim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            let t_t = tgt.step(&a).unwrap();
            let real_next = t_t.next_state.unwrap();

            src.reset_from(&snap).unwrap();
            let x: Vec<f32> = s.iter().chain(&a).copied().collect();
            let (mean, std, value) = agent.policy_value(&x).unwrap();
            let mut delta = vec![0.0f32; adim];
            let mut logp = 0.0f32;
            for j in 0..adim {
                let eps = {
                    // same normal sampler as training
                    let u: f32 = rng.gen_range(1e-6..1.0f32);
                    let v: f32 = rng.gen_range(0.0..std::f32::consts::TAU);
                    (-2.0 * u.ln()).sqrt() * v.cos()
                };
                delta[j] = mean[j] + std[j] * eps;
                logp += -0.5 * eps * eps - std[j].ln() - 0.9189385;
            }
            abs_delta += delta.iter().map(|d| d.abs() as f64).sum::<f64>() / adim as f64;
            let a_hat = smooth_and_clamp(&a, &delta, 0.95);
            let t_s = src.step(&a_hat).unwrap();
            let fake_next = t_s.next_state.unwrap();
            let e = l2(&fake_next, &real_next);
            err_sum += e;
            let r = -(e as f32) * 10.0;
            rollout.push(&x, &delta, logp, value, r, true);
        }
        ppo_update(&mut agent, &rollout, &cfg, &mut rng).unwrap();
        if epoch % 2 == 0 || epoch == 19 {
            let (m, _, _) = agent.policy_value(&vec![0.0; sdim + adim]).unwrap();
            println!("epoch {epoch}: err {:.4} |d| {:.3} mean@0 {:?}", err_sum / 500.0, abs_delta / 500.0, m);
        }
    }
}

#[test]
#[ignore]
fn probe_transfer_easy() {
    use idapt_core::orchestrator::{bounds, run_baseline, run_idapt, BaselineKind, ExperimentConfig, RunOptions};

    let mut cfg = ExperimentConfig::preset(TaskId::PointPendulum, GapLevel::Easy);
    cfg.task_agnostic_size = 2000;
    cfg.online_size = 500;
    cfg.eval_episodes = 20;
    cfg.visual.pretrain_epochs = 3;
    cfg.visual.train_epochs = 3;
    cfg.visual.finetune_epochs = 1;
    cfg.policy.warmup_steps = 300;
    cfg.policy.update_every = 2;
    cfg.policy.steps_per_iteration = 6000;
    cfg.action.rollout_len = 500;
    cfg.action.epochs = 10;
    cfg.action.entropy_coef = 0.0;

    let seed = 1u64;
    let t0 = Instant::now();
    let (lb, ub) = bounds(&cfg, seed, None).unwrap();
    println!("bounds: lb {lb:.1} ub {ub:.1} ({:?})", t0.elapsed());
    let opts = RunOptions { bounds: Some((lb, ub)), ..Default::default() };
    let t0 = Instant::now();
    let rec = run_idapt(&cfg, seed, &opts).unwrap();
    for r in rec.rows.iter().filter(|r| r.phase == "evaluate" || r.phase == "train_policy" || r.phase == "train_action") {
        println!("iter {} {} {} = {:.4}", r.iteration, r.phase, r.metric, r.value);
    }
    println!("idapt run {:?}", t0.elapsed());
    let base = run_baseline(BaselineKind::DirectTransfer, &cfg, seed, &opts).unwrap();
    for r in base.rows.iter().filter(|r| r.phase == "evaluate") {
        println!("baseline {} = {:.4}", r.metric, r.value);
    }
}

#[test]
#[ignore]
fn probe_transfer_hard() {
    use idapt_core::orchestrator::{bounds, ExperimentConfig, RunOptions, run_idapt};

    let mut cfg = ExperimentConfig::preset(TaskId::PointPush, GapLevel::Hard);
    cfg.task_agnostic_size = 2000;
    cfg.online_size = 500;
    cfg.eval_episodes = 10;
    cfg.n_grounding_steps = 5;
    cfg.visual.pretrain_epochs = 3;
    cfg.visual.train_epochs = 3;
    cfg.visual.finetune_epochs = 1;
    cfg.policy.warmup_steps = 300;
    cfg.policy.update_every = 2;
    cfg.policy.steps_per_iteration = 1500;
    cfg.action.rollout_len = 500;
    cfg.action.epochs = 10;
    cfg.action.entropy_coef = 0.0;

    let seed = 1u64;
    let t0 = Instant::now();
    let (lb, ub) = bounds(&cfg, seed, None).unwrap();
    println!("bounds: lb {lb:.1} ub {ub:.1} ({:?})", t0.elapsed());
    let opts = RunOptions { bounds: Some((lb, ub)), ..Default::default() };
    let t0 = Instant::now();
    let rec = run_idapt(&cfg, seed, &opts).unwrap();
    for r in rec.rows.iter().filter(|r| r.phase == "evaluate") {
        println!("iter {} {} = {:.4}", r.iteration, r.metric, r.value);
    }
    println!("idapt run {:?}", t0.elapsed());
}

#[test]
#[ignore]
fn probe_target_sac() {
    let task = TaskId::PointPendulum;
    let (_, target) = make_pair(task, GapLevel::Easy, 1).unwrap();
    let mut tclone = target.instrumented_clone(2).unwrap();
    let mut actor = Actor::new(32, 32, task.action_dim(), 3);
    let mut critic = Critic::new(task.state_dim(), task.action_dim(), 4);
    let mut buffer = ReplayBuffer::new(100_000, 32, 32, task.state_dim(), task.action_dim());
    let cfg = SacConfig { warmup_steps: 300, update_every: 2, ..Default::default() };
    let mut env = InstrumentedEnv(&mut tclone);
    for chunk in 0..8u64 {
        let t0 = Instant::now();
        let stats = train_policy(&mut actor, &mut critic, &mut buffer, &mut env, 2000, &cfg, 10 + chunk).unwrap();
        let mut ev = target.instrumented_clone(100 + chunk).unwrap();
        let res = evaluate(&actor, &mut ev, 10, 200 + chunk).unwrap();
        println!("steps {}: train ret {:.1}, eval ret {:.1} success {:.2} ({:?})",
            (chunk + 1) * 2000, stats.mean_episode_return, res.mean_return, res.success_rate, t0.elapsed());
    }
}
