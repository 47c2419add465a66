//! Command-line front end for the grounded-transfer pipeline. Staged
//! subcommands (collect, pretrain-visual, train-policy, ground, evaluate)
//! write the same output layout as `run-idapt`, so a staged run can be
//! continued end to end with `run-idapt --resume`.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use idapt_core::action::{garat_train, FeatureSource, SmoothingConfig};
use idapt_core::datasets::{collect, CollectionPolicy, Domain, Provenance, UnpairedDataset};
use idapt_core::env::{make_pair, DomainSpec, EnvInstance};
use idapt_core::grounded::{ActionHook, GroundedEnv, VisualHook};
use idapt_core::orchestrator::{
    bounds, derive_seed, gap_name, init_nets, load_nets, run_baseline, run_idapt, save_nets,
    BaselineKind, CollectKind, ExperimentConfig, PolicySource, RunOptions, CSV_HEADER,
};
use idapt_core::policy::{evaluate, train_policy, ProxyEncoder, ReplayBuffer};
use idapt_core::visual::{init_target_predictor, pretrain_source_predictor, train_translator};

#[derive(Parser)]
#[command(name = "idapt", about = "Iterative environment grounding for visual policy transfer")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Collect task-agnostic observation datasets in both domains
    Collect(StageArgs),
    /// Pretrain the source state predictor and train the visual transformation
    PretrainVisual(StageArgs),
    /// Train the policy in the grounded source environment
    TrainPolicy(StageArgs),
    /// Collect online target data and train the action transformation
    Ground(StageArgs),
    /// Evaluate the current policy checkpoint on the target
    Evaluate(EvaluateArgs),
    /// Run the full iterative grounding loop over one or more seeds
    RunIdapt(RunArgs),
    /// Run a transfer baseline over one or more seeds
    RunBaseline(BaselineArgs),
    /// Render per-seed and mean learning curves from an aggregate CSV to SVG
    Plot(PlotArgs),
    /// Tabulate final results across the run directories under a root
    Report(ReportArgs),
}

#[derive(Args)]
struct StageArgs {
    /// Experiment config file (key = value sections)
    #[arg(long)]
    config: PathBuf,
    /// Run directory; shared by every stage of one run
    #[arg(long)]
    out: PathBuf,
    /// Run seed; stages of one run must agree on it
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum)]
    ablate: Vec<Ablation>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    stage: StageArgs,
    /// Also compute oracle bounds and report the normalized return
    #[arg(long)]
    oracle_bounds: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Number of seeds; runs use seeds 0..N in per-seed subdirectories
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Continue an interrupted run from its progress file
    #[arg(long)]
    resume: bool,
    /// Compute oracle bounds per seed and log normalized returns
    #[arg(long)]
    oracle_bounds: bool,
    #[arg(long, value_enum)]
    ablate: Vec<Ablation>,
}

#[derive(Args)]
struct BaselineArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Which baseline to run
    #[arg(long)]
    kind: String,
}

#[derive(Args)]
struct PlotArgs {
    /// Aggregate metrics CSV produced by run-idapt or run-baseline
    #[arg(long)]
    input: PathBuf,
    /// Output SVG path
    #[arg(long)]
    out: PathBuf,
    /// Metric to plot; defaults to normalized_return when present, else
    /// target_return
    #[arg(long)]
    metric: Option<String>,
}

#[derive(Args)]
struct ReportArgs {
    /// Root directory containing one run directory per method
    #[arg(long)]
    dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Ablation {
    /// Drop the state-reconstruction term from the visual loss
    Lambda0,
    /// Skip action-transformation training entirely
    NoAt,
    /// Finetune on all online data instead of the latest batch
    Accumulate,
}

fn load_config(path: &Path, ablate: &[Ablation]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut cfg = ExperimentConfig::parse(&text)
        .with_context(|| format!("parsing config {}", path.display()))?;
    for a in ablate {
        match a {
            Ablation::Lambda0 => cfg.lambda_zero = true,
            Ablation::NoAt => cfg.no_action_transform = true,
            Ablation::Accumulate => cfg.accumulate_data = true,
        }
    }
    Ok(cfg)
}

fn method_label(base: &str, cfg: &ExperimentConfig) -> String {
    let mut s = base.to_string();
    if cfg.lambda_zero {
        s.push_str("-lambda0");
    }
    if cfg.no_action_transform {
        s.push_str("-noat");
    }
    if cfg.accumulate_data {
        s.push_str("-accumulate");
    }
    s
}

fn collection_policy(kind: CollectKind) -> CollectionPolicy<'static> {
    match kind {
        CollectKind::Random => CollectionPolicy::UniformRandom,
        CollectKind::Scripted => CollectionPolicy::Scripted,
    }
}

fn frame_size(cfg: &ExperimentConfig) -> (usize, usize) {
    let spec = DomainSpec::identity(cfg.task);
    (spec.render.height, spec.render.width)
}

fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    writeln!(f, "{line}")?;
    Ok(())
}

/// Most advanced checkpoint stage in a run directory: the highest iterN,
/// else init. The returned iteration is the one the next phase belongs to.
fn latest_stage(out: &Path) -> Result<(PathBuf, u32)> {
    let ckpt = out.join("ckpt");
    let mut best: Option<u32> = None;
    if let Ok(entries) = std::fs::read_dir(&ckpt) {
        for e in entries.flatten() {
            if let Some(n) = e
                .file_name()
                .to_str()
                .and_then(|s| s.strip_prefix("iter"))
                .and_then(|s| s.parse::<u32>().ok())
            {
                best = Some(best.map_or(n, |b| b.max(n)));
            }
        }
    }
    if let Some(n) = best {
        return Ok((ckpt.join(format!("iter{n}")), n + 1));
    }
    let init = ckpt.join("init");
    if init.is_dir() {
        return Ok((init, 1));
    }
    bail!(
        "no checkpoint under {}; run pretrain-visual (or run-idapt) first",
        ckpt.display()
    )
}

fn cmd_collect(a: &StageArgs) -> Result<()> {
    let cfg = load_config(&a.config, &a.ablate)?;
    let seed = a.seed;
    let mut source = EnvInstance::new(
        cfg.task,
        DomainSpec::identity(cfg.task),
        true,
        derive_seed(seed, "src0", 0),
    )?;
    let (_, mut target) = make_pair(cfg.task, cfg.gap, derive_seed(seed, "envs", 0))?;
    let ds_s = collect(
        &mut source,
        collection_policy(cfg.collection),
        cfg.task_agnostic_size,
        derive_seed(seed, "collect_s", 0),
    )?;
    let ds_t = collect(
        &mut target,
        collection_policy(cfg.collection),
        cfg.task_agnostic_size,
        derive_seed(seed, "collect_t", 0),
    )?;
    let data = a.out.join("data");
    ds_s.save(&data.join("task_agnostic_source"), seed, cfg.hash())?;
    ds_t.save(&data.join("task_agnostic_target"), seed, cfg.hash())?;
    std::fs::write(a.out.join("config.txt"), cfg.canonical_text())?;
    println!(
        "collected {} source and {} target samples ({} target env steps)",
        ds_s.len(),
        ds_t.len(),
        target.steps_taken()
    );
    Ok(())
}

fn cmd_pretrain_visual(a: &StageArgs) -> Result<()> {
    let cfg = load_config(&a.config, &a.ablate)?;
    let seed = a.seed;
    let data = a.out.join("data");
    let ds_s = UnpairedDataset::load(
        &data.join("task_agnostic_source"),
        Domain::Source,
        Provenance::Random,
        cfg.task,
    )
    .context("loading task-agnostic source data; run collect first")?;
    let ds_t = UnpairedDataset::load(
        &data.join("task_agnostic_target"),
        Domain::Target,
        Provenance::Random,
        cfg.task,
    )
    .context("loading task-agnostic target data; run collect first")?;

    let mut nets = init_nets(&cfg, seed);
    let losses = pretrain_source_predictor(
        &mut nets.p_s,
        &ds_s,
        cfg.visual.pretrain_epochs,
        cfg.visual.lr,
        cfg.visual.batch,
        derive_seed(seed, "pretrain", 0),
    )?;
    if let Some(last) = losses.last() {
        println!("source predictor state loss {last:.6}");
    }
    nets.p_t = init_target_predictor(&nets.p_s);
    let stats = train_translator(
        &mut nets.translator,
        &mut nets.p_t,
        &ds_s,
        &ds_t,
        cfg.visual.train_epochs,
        cfg.visual.lr,
        &cfg.visual_loss(),
        derive_seed(seed, "translator_train", 0),
    )?;
    if let Some(last) = stats.last() {
        println!(
            "translator gen {:.6} disc {:.6} cycle {:.6} reg {:.6}",
            last.gen_loss, last.disc_loss, last.cycle, last.regularizer
        );
    }
    save_nets(&a.out.join("ckpt").join("init"), &nets)?;
    std::fs::write(a.out.join("config.txt"), cfg.canonical_text())?;
    let progress = a.out.join("progress.txt");
    append_line(&progress, "init")?;
    // the target ledger after collection equals the task-agnostic budget
    append_line(&progress, &format!("ledger {}", cfg.task_agnostic_size))?;
    println!("wrote {}", a.out.join("ckpt").join("init").display());
    Ok(())
}

fn cmd_train_policy(a: &StageArgs) -> Result<()> {
    let cfg = load_config(&a.config, &a.ablate)?;
    let seed = a.seed;
    let (stage, iter) = latest_stage(&a.out)?;
    let mut nets = init_nets(&cfg, seed);
    load_nets(&stage, &mut nets)?;
    let (h, w) = frame_size(&cfg);
    let smoothing = SmoothingConfig {
        alpha: cfg.action.smoothing_alpha,
    };
    // features for the action transform come from the pre-training policy
    let proxy = ProxyEncoder::from_actor(&nets.actor);
    let src = EnvInstance::new(
        cfg.task,
        DomainSpec::identity(cfg.task),
        true,
        derive_seed(seed, "gsrc", iter as u64),
    )?;
    let mut genv = GroundedEnv::new(
        src,
        VisualHook::Learned(&nets.translator),
        ActionHook::Learned {
            agent: &nets.delta,
            proxy: &proxy,
            smoothing,
        },
    )?;
    let mut buffer = ReplayBuffer::new(
        cfg.policy.replay_capacity,
        h,
        w,
        cfg.task.state_dim(),
        cfg.task.action_dim(),
    );
    let stats = train_policy(
        &mut nets.actor,
        &mut nets.critic,
        &mut buffer,
        &mut genv,
        cfg.policy.steps_per_iteration,
        &cfg.policy.sac(),
        derive_seed(seed, "policy", iter as u64),
    )?;
    drop(genv);
    save_nets(&stage, &nets)?;
    println!(
        "iteration {iter}: grounded return {:.3} over {} updates; checkpoint updated at {}",
        stats.mean_episode_return,
        stats.updates,
        stage.display()
    );
    Ok(())
}

fn cmd_ground(a: &StageArgs) -> Result<()> {
    let cfg = load_config(&a.config, &a.ablate)?;
    if cfg.no_action_transform {
        bail!("config disables the action transformation; nothing to ground");
    }
    let seed = a.seed;
    let (stage, iter) = latest_stage(&a.out)?;
    let mut nets = init_nets(&cfg, seed);
    load_nets(&stage, &mut nets)?;
    let (h, w) = frame_size(&cfg);

    let (_, mut target) = make_pair(cfg.task, cfg.gap, derive_seed(seed, "envs", 0))?;
    let dt_online = {
        let mut src = PolicySource::new(&nets.actor, h, w);
        collect(
            &mut target,
            CollectionPolicy::Learned(&mut src),
            cfg.online_size,
            derive_seed(seed, "dt_online", iter as u64),
        )?
    };
    dt_online.save(
        &a.out.join("data").join(format!("online_target_{iter}")),
        seed,
        cfg.hash(),
    )?;

    let proxy = ProxyEncoder::from_actor(&nets.actor);
    let smoothing = SmoothingConfig {
        alpha: cfg.action.smoothing_alpha,
    };
    let src = EnvInstance::new(
        cfg.task,
        DomainSpec::identity(cfg.task),
        true,
        derive_seed(seed, "garat_src", iter as u64),
    )?;
    let stats = garat_train(
        &mut nets.delta,
        &mut nets.disc,
        &FeatureSource::Encoder(&proxy),
        VisualHook::Learned(&nets.translator),
        src,
        &dt_online,
        &smoothing,
        &cfg.action.ppo(),
        cfg.action.garat_epochs,
        derive_seed(seed, "garat", iter as u64),
    )?;
    save_nets(&stage, &nets)?;
    if let Some(last) = stats.last() {
        println!(
            "iteration {iter}: disc accuracy {:.3}, mean |delta| {:.4}, mean reward {:.4}",
            last.disc_accuracy, last.mean_abs_delta, last.mean_reward
        );
    }
    println!("{} online target steps collected this invocation", cfg.online_size);
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let cfg = load_config(&a.stage.config, &a.stage.ablate)?;
    let seed = a.stage.seed;
    let (stage, _) = latest_stage(&a.stage.out)?;
    let mut nets = init_nets(&cfg, seed);
    load_nets(&stage, &mut nets)?;
    let (_, target) = make_pair(cfg.task, cfg.gap, derive_seed(seed, "envs", 0))?;
    let mut tclone = target.instrumented_clone(derive_seed(seed, "evalenv", 0))?;
    let res = evaluate(
        &nets.actor,
        &mut tclone,
        cfg.eval_episodes,
        derive_seed(seed, "eval", 0),
    )?;
    println!(
        "target return {:.3}, success rate {:.3} over {} episodes",
        res.mean_return, res.success_rate, cfg.eval_episodes
    );
    if a.oracle_bounds {
        let (lb, ub) = bounds(&cfg, seed, Some(&a.stage.out.join("bounds.csv")))?;
        let norm = idapt_core::orchestrator::normalized_return(res.mean_return, lb, ub)?;
        println!("normalized return {norm:.3} (bounds {lb:.3} .. {ub:.3})");
    }
    Ok(())
}

fn write_run_meta(out: &Path, method: &str, cfg: &ExperimentConfig) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(
        out.join("meta.txt"),
        format!(
            "method = {method}\ntask = {}\ngap_level = {}\n",
            cfg.task.name(),
            gap_name(cfg.gap)
        ),
    )?;
    std::fs::write(out.join("config.txt"), cfg.canonical_text())?;
    Ok(())
}

fn run_over_seeds(
    a: &RunArgs,
    cfg: &ExperimentConfig,
    method: &str,
    mut one: impl FnMut(u64, &RunOptions) -> Result<idapt_core::orchestrator::RunRecord>,
) -> Result<()> {
    if a.seeds == 0 {
        bail!("--seeds must be >= 1");
    }
    write_run_meta(&a.out, method, cfg)?;
    let mut aggregate = String::from(CSV_HEADER);
    aggregate.push('\n');
    for seed in 0..a.seeds {
        let seed_dir = a.out.join(format!("seed{seed}"));
        let b = if a.oracle_bounds {
            Some(bounds(cfg, seed, Some(&a.out.join("bounds_cache.csv")))?)
        } else {
            None
        };
        let opts = RunOptions {
            out_dir: Some(&seed_dir),
            resume: a.resume,
            bounds: b,
        };
        let rec = one(seed, &opts)?;
        let final_ret = rec
            .rows
            .iter()
            .rev()
            .find(|r| r.phase == "evaluate" && r.metric == "target_return")
            .map(|r| r.value);
        match final_ret {
            Some(v) => println!("{method} seed {seed}: final target return {v:.3}"),
            None => println!("{method} seed {seed}: no evaluation logged"),
        }
        let csv = rec.to_csv();
        aggregate.push_str(csv.split_once('\n').map_or("", |(_, rest)| rest));
    }
    std::fs::write(a.out.join("aggregate.csv"), aggregate)?;
    println!("wrote {}", a.out.join("aggregate.csv").display());
    Ok(())
}

fn cmd_run_idapt(a: &RunArgs) -> Result<()> {
    let cfg = load_config(&a.config, &a.ablate)?;
    let method = method_label("idapt", &cfg);
    run_over_seeds(a, &cfg, &method, |seed, opts| {
        run_idapt(&cfg, seed, opts).map_err(anyhow::Error::from)
    })
}

fn cmd_run_baseline(a: &BaselineArgs) -> Result<()> {
    let kind = BaselineKind::parse(&a.kind)?;
    let cfg = load_config(&a.run.config, &a.run.ablate)?;
    if a.run.resume {
        bail!("baselines train in one shot and do not support --resume");
    }
    run_over_seeds(&a.run, &cfg, kind.name(), |seed, opts| {
        run_baseline(kind, &cfg, seed, opts).map_err(anyhow::Error::from)
    })
}

// ---- plotting and reporting ----

struct Row {
    iteration: u32,
    phase: String,
    metric: String,
    value: f64,
    seed: u64,
}

fn parse_rows(text: &str) -> Result<Vec<Row>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != CSV_HEADER {
                bail!("unexpected CSV header: {line}");
            }
            continue;
        }
        let p: Vec<&str> = line.split(',').collect();
        if p.len() != 5 {
            bail!("bad CSV row: {line}");
        }
        rows.push(Row {
            iteration: p[0].parse().context("iteration column")?,
            phase: p[1].to_string(),
            metric: p[2].to_string(),
            value: p[3].parse().context("value column")?,
            seed: p[4].parse().context("seed column")?,
        });
    }
    Ok(rows)
}

fn pick_metric(rows: &[Row], requested: Option<&str>) -> Result<String> {
    if let Some(m) = requested {
        if !rows.iter().any(|r| r.metric == m) {
            bail!("metric {m} not present in the CSV");
        }
        return Ok(m.to_string());
    }
    for m in ["normalized_return", "target_return"] {
        if rows.iter().any(|r| r.phase == "evaluate" && r.metric == m) {
            return Ok(m.to_string());
        }
    }
    bail!("no evaluation metrics in the CSV")
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn cmd_plot(a: &PlotArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.input)
        .with_context(|| format!("reading {}", a.input.display()))?;
    let rows = parse_rows(&text)?;
    let metric = pick_metric(&rows, a.metric.as_deref())?;
    let pts: Vec<&Row> = rows
        .iter()
        .filter(|r| r.phase == "evaluate" && r.metric == metric)
        .collect();
    if pts.is_empty() {
        bail!("no rows for metric {metric}");
    }

    let mut seeds: Vec<u64> = pts.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let mut iters: Vec<u32> = pts.iter().map(|r| r.iteration).collect();
    iters.sort_unstable();
    iters.dedup();

    let (x_lo, x_hi) = (iters[0] as f64, *iters.last().unwrap() as f64);
    let y_min = pts.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
    let y_max = pts.iter().map(|r| r.value).fold(f64::NEG_INFINITY, f64::max);
    let pad = ((y_max - y_min) * 0.05).max(1e-9);
    let (y_lo, y_hi) = (y_min - pad, y_max + pad);

    let (width, height) = (640.0, 420.0);
    let (ml, mr, mt, mb) = (60.0, 15.0, 15.0, 40.0);
    let sx = |x: f64| {
        if x_hi > x_lo {
            ml + (x - x_lo) / (x_hi - x_lo) * (width - ml - mr)
        } else {
            (ml + width - mr) / 2.0
        }
    };
    let sy = |y: f64| height - mb - (y - y_lo) / (y_hi - y_lo) * (height - mt - mb);

    let polyline = |series: &[(f64, f64)], style: &str| {
        let points: Vec<String> = series
            .iter()
            .map(|(x, y)| format!("{:.1},{:.1}", sx(*x), sy(*y)))
            .collect();
        format!("<polyline fill=\"none\" {style} points=\"{}\"/>\n", points.join(" "))
    };

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n\
         <line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{0}\" stroke=\"black\"/>\n",
        height - mb,
        width - mr
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">iteration</text>\n",
        (ml + width - mr) / 2.0,
        height - 8.0
    ));
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" \
         transform=\"rotate(-90 14 {0})\">{metric}</text>\n",
        (mt + height - mb) / 2.0
    ));
    for (x, label) in [(x_lo, x_lo), (x_hi, x_hi)] {
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{label}</text>\n",
            sx(x),
            height - mb + 14.0
        ));
    }
    for y in [y_min, y_max] {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" font-size=\"10\" text-anchor=\"end\">{y:.3}</text>\n",
            ml - 4.0,
            sy(y) + 3.0
        ));
    }
    // per-seed traces, then the mean on top
    for s in &seeds {
        let series: Vec<(f64, f64)> = iters
            .iter()
            .filter_map(|it| {
                pts.iter()
                    .find(|r| r.seed == *s && r.iteration == *it)
                    .map(|r| (*it as f64, r.value))
            })
            .collect();
        svg.push_str(&polyline(&series, "stroke=\"#aaaaaa\" stroke-width=\"1\""));
    }
    let mean: Vec<(f64, f64)> = iters
        .iter()
        .map(|it| {
            let vals: Vec<f64> = pts
                .iter()
                .filter(|r| r.iteration == *it)
                .map(|r| r.value)
                .collect();
            (*it as f64, vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect();
    svg.push_str(&polyline(&mean, "stroke=\"#d62728\" stroke-width=\"2\""));
    for (x, y) in &mean {
        svg.push_str(&format!(
            "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"#d62728\"/>\n",
            sx(*x),
            sy(*y)
        ));
    }
    svg.push_str("</svg>\n");
    std::fs::write(&a.out, svg)?;
    println!(
        "plotted {metric} for {} seeds to {}",
        seeds.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    struct Entry {
        method: String,
        setting: String,
        metric: String,
        value: f64,
        n_seeds: usize,
    }
    let mut entries = Vec::new();
    for e in std::fs::read_dir(&a.dir)
        .with_context(|| format!("reading {}", a.dir.display()))?
        .flatten()
    {
        let meta_path = e.path().join("meta.txt");
        let agg_path = e.path().join("aggregate.csv");
        if !meta_path.is_file() || !agg_path.is_file() {
            continue;
        }
        let meta = std::fs::read_to_string(&meta_path)?;
        let field = |k: &str| {
            meta.lines()
                .find_map(|l| l.strip_prefix(&format!("{k} = ")))
                .map(str::to_string)
                .ok_or_else(|| anyhow!("{} missing {k}", meta_path.display()))
        };
        let (method, task, gap) = (field("method")?, field("task")?, field("gap_level")?);
        let rows = parse_rows(&std::fs::read_to_string(&agg_path)?)?;
        let metric = pick_metric(&rows, None)?;
        let mut seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        // final evaluation per seed, then the median across seeds
        let finals: Vec<f64> = seeds
            .iter()
            .filter_map(|s| {
                rows.iter()
                    .filter(|r| r.seed == *s && r.phase == "evaluate" && r.metric == metric)
                    .max_by_key(|r| r.iteration)
                    .map(|r| r.value)
            })
            .collect();
        if finals.is_empty() {
            continue;
        }
        entries.push(Entry {
            method,
            setting: format!("{task}/{gap}"),
            metric,
            value: median(finals.clone()),
            n_seeds: finals.len(),
        });
    }
    if entries.is_empty() {
        bail!("no run directories with meta.txt and aggregate.csv under {}", a.dir.display());
    }
    entries.sort_by(|a, b| (&a.setting, &a.method).cmp(&(&b.setting, &b.method)));

    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<28} {:<24} {:<20} {:>10} {:>7}",
        "method", "task/gap", "metric", "median", "seeds"
    );
    for e in &entries {
        let _ = writeln!(
            table,
            "{:<28} {:<24} {:<20} {:>10.3} {:>7}",
            e.method, e.setting, e.metric, e.value, e.n_seeds
        );
    }
    print!("{table}");
    std::fs::write(a.dir.join("report.txt"), &table)?;
    println!("wrote {}", a.dir.join("report.txt").display());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.cmd {
        Cmd::Collect(a) => cmd_collect(a),
        Cmd::PretrainVisual(a) => cmd_pretrain_visual(a),
        Cmd::TrainPolicy(a) => cmd_train_policy(a),
        Cmd::Ground(a) => cmd_ground(a),
        Cmd::Evaluate(a) => cmd_evaluate(a),
        Cmd::RunIdapt(a) => cmd_run_idapt(a),
        Cmd::RunBaseline(a) => cmd_run_baseline(a),
        Cmd::Plot(a) => cmd_plot(a),
        Cmd::Report(a) => cmd_report(a),
    }
}
