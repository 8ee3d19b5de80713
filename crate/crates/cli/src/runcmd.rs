//! Pipeline commands: intention printing, demonstration collection,
//! training, closed-loop evaluation, and report generation.

use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use mapnav_core::decision::dataset::{
    balance_dataset, load_checkpoint, save_checkpoint, Dataset,
};
use mapnav_core::decision::net::{DecisionNet, NetConfig, NetKind};
use mapnav_core::decision::train::{tbptt_train, TrainConfig};
use mapnav_core::eval::{ablation_report, task_report};
use mapnav_core::intention::{intention_plan_for_grid_path, DEFAULT_CURVATURE_THRESHOLD};
use mapnav_core::planner::plan_grid;
use mapnav_core::sim::fixtures;
use mapnav_core::sim::observe::CameraConfig;
use mapnav_core::sim::scenario::{
    collect_demonstrations, run_episode, Controller, EpisodeOptions, ExpertController,
    NetController, PathTrackerController, Scenario,
};
use mapnav_core::sim::TrajectoryLog;
use rand::SeedableRng;

use crate::config::TrainOverrides;
use crate::Failure;

const DT: f64 = 0.1;

fn resolve_scenario(name_or_path: &str) -> Result<Scenario, Failure> {
    if let Some(s) = fixtures::builtin(name_or_path) {
        return Ok(s);
    }
    Scenario::load(Path::new(name_or_path)).map_err(|e| Failure::io(e.to_string()))
}

fn resolve_scenarios(names: &[String]) -> Result<Vec<Scenario>, Failure> {
    if names.is_empty() {
        return Err(Failure::io(
            "no scenarios given (use --scenario or a config file)",
        ));
    }
    names.iter().map(|n| resolve_scenario(n)).collect()
}

fn ensure_layout(out_dir: &Path) -> Result<(), Failure> {
    for sub in ["dataset", "checkpoints", "logs", "reports"] {
        std::fs::create_dir_all(out_dir.join(sub))
            .map_err(|e| Failure::io(format!("{}: {e}", out_dir.display())))?;
    }
    Ok(())
}

pub fn intent(scenario: &str, rdp_eps: Option<f64>) -> Result<(), Failure> {
    let scenario = resolve_scenario(scenario)?;
    let world = scenario.build_world();
    let start = world.grid.world_to_cell(scenario.start.0, scenario.start.1);
    let goal = world.grid.world_to_cell(scenario.goal.0, scenario.goal.1);
    let grid_path = plan_grid(&world.grid, start, goal).map_err(|e| Failure::io(e.to_string()))?;
    let eps = rdp_eps.unwrap_or(3.0 * world.grid.resolution);
    let plan =
        intention_plan_for_grid_path(&grid_path, &world.grid, eps, DEFAULT_CURVATURE_THRESHOLD)
            .map_err(|e| Failure::io(e.to_string()))?;
    println!(
        "scenario {}: {} control points (rdp eps {:.2} m)",
        scenario.name,
        plan.points.len(),
        eps
    );
    for (i, p) in plan.points.iter().enumerate() {
        println!(
            "{i:3}  ({:7.2}, {:7.2})  r={:.2}  {:?}",
            p.position.0, p.position.1, p.radius, p.dlm
        );
    }
    Ok(())
}

pub fn collect(
    scenarios: &[String],
    seeds: &[u64],
    side: usize,
    out_dir: &Path,
) -> Result<(), Failure> {
    let scenarios = resolve_scenarios(scenarios)?;
    ensure_layout(out_dir)?;
    let camera = CameraConfig {
        side,
        ..CameraConfig::default()
    };
    let (dataset, skipped) = collect_demonstrations(&scenarios, seeds, &camera)
        .map_err(|e| Failure::io(e.to_string()))?;
    for line in &skipped {
        eprintln!("skipped: {line}");
    }
    if dataset.is_empty() {
        return Err(Failure::io("no demonstrations collected"));
    }
    let stem = out_dir.join("dataset/demos");
    dataset.save(&stem).map_err(|e| Failure::io(e.to_string()))?;
    let counts: Vec<String> = dataset
        .mode_counts()
        .iter()
        .map(|(mode, count)| format!("{mode}:{count}"))
        .collect();
    println!(
        "dataset written to {} ({} sequences, {} records, mode counts {})",
        stem.display(),
        dataset.sequences.len(),
        dataset.records.len(),
        counts.join(" ")
    );
    Ok(())
}

pub struct TrainOpts {
    pub dataset: PathBuf,
    pub kind: String,
    pub preset: String,
    pub epochs: Option<usize>,
    pub seq_len: Option<usize>,
    pub batch_size: Option<usize>,
    pub base_lr: Option<f64>,
    pub dropout: Option<f64>,
    pub seed: Option<u64>,
    pub train_overrides: Option<TrainOverrides>,
}

fn preset_config(preset: &str) -> Result<NetConfig, Failure> {
    match preset {
        "desk" => Ok(NetConfig::desk(NetKind::Decision)),
        "tiny" => Ok(NetConfig::tiny(NetKind::Decision)),
        "full" => Ok(NetConfig::full(NetKind::Decision)),
        other => Err(Failure::io(format!(
            "unknown preset {other:?} (expected desk, tiny, or full)"
        ))),
    }
}

pub fn train(opts: &TrainOpts, out_dir: &Path) -> Result<(), Failure> {
    ensure_layout(out_dir)?;
    let dataset = Dataset::load(&opts.dataset).map_err(|e| Failure::io(e.to_string()))?;

    let mut cfg = if opts.preset == "full" {
        TrainConfig::full()
    } else {
        TrainConfig::desk()
    };
    if let Some(o) = &opts.train_overrides {
        if let Some(v) = o.seq_len {
            cfg.seq_len = v;
        }
        if let Some(v) = o.frame_stride {
            cfg.frame_stride = v;
        }
        if let Some(v) = o.k1 {
            cfg.k1 = v;
        }
        if let Some(v) = o.k2 {
            cfg.k2 = v;
        }
        if let Some(v) = o.base_lr {
            cfg.base_lr = v;
        }
        if let Some(v) = o.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = o.weight_decay {
            cfg.weight_decay = v;
        }
        if let Some(v) = o.dropout {
            cfg.dropout = v;
        }
        if let Some(v) = o.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = o.seed {
            cfg.seed = v;
        }
    }
    if let Some(v) = opts.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = opts.seq_len {
        cfg.seq_len = v;
    }
    if let Some(v) = opts.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = opts.base_lr {
        cfg.base_lr = v;
    }
    if let Some(v) = opts.dropout {
        cfg.dropout = v;
    }
    if let Some(v) = opts.seed {
        cfg.seed = v;
    }

    let mut base = preset_config(&opts.preset)?;
    base.in_channels = dataset.in_channels;
    base.input_side = dataset.side;
    base.dropout = cfg.dropout;
    let mut net = DecisionNet::build_baseline(&opts.kind, &base, cfg.seed)
        .map_err(|e| Failure::io(e.to_string()))?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37);
    let balanced = balance_dataset(&dataset, &mut rng);
    let losses = tbptt_train(&mut net, &balanced, &cfg).map_err(|e| Failure::io(e.to_string()))?;

    let ckpt = out_dir.join(format!("checkpoints/{}.ckpt", opts.kind));
    save_checkpoint(&net, &ckpt).map_err(|e| Failure::io(e.to_string()))?;
    let mut curve = String::from("iteration,loss\n");
    for (i, l) in losses.iter().enumerate() {
        curve.push_str(&format!("{i},{l:.8}\n"));
    }
    let curve_path = out_dir.join(format!("checkpoints/{}_loss.csv", opts.kind));
    std::fs::write(&curve_path, curve).map_err(|e| Failure::io(e.to_string()))?;
    println!(
        "checkpoint {} (loss {} -> {})",
        ckpt.display(),
        losses.first().map(|l| format!("{l:.5}")).unwrap_or_default(),
        losses.last().map(|l| format!("{l:.5}")).unwrap_or_default()
    );
    Ok(())
}

pub enum PolicySpec {
    Expert,
    PathTracker,
    Checkpoint(DecisionNet),
}

impl PolicySpec {
    fn parse(policy: &str) -> Result<PolicySpec, Failure> {
        match policy {
            "expert" => Ok(PolicySpec::Expert),
            "path_tracker" => Ok(PolicySpec::PathTracker),
            path => {
                let net =
                    load_checkpoint(Path::new(path)).map_err(|e| Failure::io(e.to_string()))?;
                Ok(PolicySpec::Checkpoint(net))
            }
        }
    }

    fn controller(&self) -> Box<dyn Controller> {
        match self {
            PolicySpec::Expert => Box::new(ExpertController::default()),
            PolicySpec::PathTracker => Box::new(PathTrackerController::default()),
            PolicySpec::Checkpoint(net) => Box::new(NetController::new(net.clone())),
        }
    }
}

/// Runs one episode; controller failures become a fully failed trial
/// rather than aborting the whole sweep.
fn run_one(scenario: &Scenario, spec: &PolicySpec, seed: u64, camera: &CameraConfig) -> TrajectoryLog {
    let mut controller = spec.controller();
    let opts = EpisodeOptions {
        seed,
        camera: camera.clone(),
        record_demos: false,
    };
    match run_episode(scenario, controller.as_mut(), &opts) {
        Ok(result) => result.log,
        Err(_) => TrajectoryLog {
            scenario: scenario.name.clone(),
            policy: controller.name().to_string(),
            seed,
            n: scenario.n_steps(),
            s: 0,
            interventions: 0,
            reached_goal: false,
            sim_time_s: 0.0,
            ticks: Vec::new(),
        },
    }
}

/// Episode sweep with `jobs`-way parallelism; results are merged in task
/// order (scenario-major, then seed) regardless of completion order.
pub fn run_sweep(
    scenarios: &[Scenario],
    seeds: &[u64],
    spec: &PolicySpec,
    jobs: usize,
    camera: &CameraConfig,
) -> Vec<TrajectoryLog> {
    let tasks: Vec<(usize, u64)> = scenarios
        .iter()
        .enumerate()
        .flat_map(|(i, _)| seeds.iter().map(move |&s| (i, s)))
        .collect();
    let results: Mutex<Vec<Option<TrajectoryLog>>> = Mutex::new(vec![None; tasks.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(tasks.len()).max(1) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(scenario_idx, seed)) = tasks.get(i) else {
                    break;
                };
                let log = run_one(&scenarios[scenario_idx], spec, seed, camera);
                results.lock().expect("sweep poisoned")[i] = Some(log);
            });
        }
    });
    results
        .into_inner()
        .expect("sweep poisoned")
        .into_iter()
        .map(|l| l.expect("task completed"))
        .collect()
}

fn config_hash(parts: &[String]) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    parts.hash(&mut h);
    h.finish()
}

pub fn eval(
    scenarios: &[String],
    seeds: &[u64],
    policy: &str,
    jobs: usize,
    side: usize,
    out_dir: &Path,
) -> Result<(), Failure> {
    let resolved = resolve_scenarios(scenarios)?;
    if seeds.is_empty() {
        return Err(Failure::io("no seeds given"));
    }
    ensure_layout(out_dir)?;
    let spec = PolicySpec::parse(policy)?;
    let camera = CameraConfig {
        side,
        ..CameraConfig::default()
    };
    let logs = run_sweep(&resolved, seeds, &spec, jobs, &camera);

    for log in &logs {
        let stem = format!("{}__{}__{}", log.scenario, log.policy, log.seed);
        let csv_path = out_dir.join(format!("logs/{stem}.csv"));
        let file = std::fs::File::create(&csv_path).map_err(|e| Failure::io(e.to_string()))?;
        log.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| Failure::io(e.to_string()))?;
        let json_path = out_dir.join(format!("logs/{stem}.json"));
        std::fs::write(
            &json_path,
            serde_json::to_string(log).expect("log serializes"),
        )
        .map_err(|e| Failure::io(e.to_string()))?;
    }

    let report = task_report(&logs, DT).map_err(|e| Failure::io(e.to_string()))?;
    let text = report.render_text();
    print!("{text}");
    std::fs::write(out_dir.join("reports/task_report.txt"), &text)
        .map_err(|e| Failure::io(e.to_string()))?;
    std::fs::write(out_dir.join("reports/task_report.csv"), report.render_csv())
        .map_err(|e| Failure::io(e.to_string()))?;

    let mut hash_parts: Vec<String> = scenarios.to_vec();
    hash_parts.push(policy.to_string());
    hash_parts.extend(seeds.iter().map(|s| s.to_string()));
    let summary = serde_json::json!({
        "config_hash": format!("{:016x}", config_hash(&hash_parts)),
        "policy": policy,
        "scenarios": scenarios,
        "seeds": seeds,
        "episodes": logs.iter().map(|l| l.summary_json()).collect::<Vec<_>>(),
    });
    std::fs::write(
        out_dir.join("reports/summary.json"),
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )
    .map_err(|e| Failure::io(e.to_string()))?;
    Ok(())
}

pub fn report(logs_dir: &Path, ablation: bool, out_dir: &Path) -> Result<(), Failure> {
    let mut logs = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(logs_dir)
        .map_err(|e| Failure::io(format!("{}: {e}", logs_dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    entries.sort();
    for path in &entries {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(e.to_string()))?;
        let log: TrajectoryLog = serde_json::from_str(&text)
            .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        logs.push(log);
    }
    if logs.is_empty() {
        return Err(Failure::io(format!(
            "no trajectory logs under {}",
            logs_dir.display()
        )));
    }
    ensure_layout(out_dir)?;
    if ablation {
        let report =
            ablation_report(&logs, &BTreeMap::new()).map_err(|e| Failure::io(e.to_string()))?;
        let text = report.render_text();
        print!("{text}");
        std::fs::write(out_dir.join("reports/ablation_report.txt"), &text)
            .map_err(|e| Failure::io(e.to_string()))?;
        std::fs::write(
            out_dir.join("reports/ablation_report.csv"),
            report.render_csv(),
        )
        .map_err(|e| Failure::io(e.to_string()))?;
    } else {
        let report = task_report(&logs, DT).map_err(|e| Failure::io(e.to_string()))?;
        let text = report.render_text();
        print!("{text}");
        std::fs::write(out_dir.join("reports/task_report.txt"), &text)
            .map_err(|e| Failure::io(e.to_string()))?;
        std::fs::write(out_dir.join("reports/task_report.csv"), report.render_csv())
            .map_err(|e| Failure::io(e.to_string()))?;
    }
    Ok(())
}
