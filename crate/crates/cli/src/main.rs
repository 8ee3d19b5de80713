//! `mapnav`: command-line entry points for the navigation stack — map
//! building and validation, route planning, intention generation,
//! demonstration collection, controller training, closed-loop evaluation,
//! and report generation.

mod config;
mod mapcmd;
mod runcmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::FileConfig;

/// A command failure carrying its process exit code: 2 for validation
/// failures, 1 for I/O, parse, and runtime errors.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn io(message: impl Into<String>) -> Failure {
        Failure {
            code: 1,
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Failure {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Failure {
        Failure::io(e.to_string())
    }
}

#[derive(Parser)]
#[command(name = "mapnav", version, about = "Hierarchical navigation stack")]
struct Cli {
    /// JSON file supplying defaults for scenario set, seeds, policy,
    /// training parameters, and output directory; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory root (containing dataset/, checkpoints/, logs/,
    /// reports/).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or validate a map bundle.
    Map {
        #[command(subcommand)]
        command: MapCommand,
    },
    /// Plan a route through a bundle and print the exit sequence and
    /// per-segment paths.
    Plan {
        /// Bundle file produced by `map build`.
        #[arg(long)]
        bundle: PathBuf,
        /// Start endpoint: `exit:<id>` or `<floorplan>:<x_m>:<y_m>`.
        #[arg(long)]
        start: String,
        /// Goal endpoint, same syntax as --start.
        #[arg(long)]
        goal: String,
    },
    /// Print the intention plan (control points and local moves) for a
    /// scenario's planned path.
    Intent {
        /// Built-in scenario name or path to a scenario JSON file.
        #[arg(long)]
        scenario: String,
        /// RDP simplification tolerance in metres (default 3 grid cells).
        #[arg(long)]
        rdp_eps: Option<f64>,
    },
    /// Run the scripted expert over scenarios and write a demonstration
    /// dataset.
    Collect {
        /// Built-in scenario names or scenario JSON paths.
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
        /// Episode seeds (one expert episode per scenario x seed).
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        /// Camera raster side (must match the controller input side).
        #[arg(long, default_value_t = 56)]
        side: usize,
    },
    /// Train a controller on a demonstration dataset and write a
    /// checkpoint plus the loss curve CSV.
    Train {
        /// Dataset stem (the `<stem>.bin` / `<stem>.idx` pair).
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Controller kind: decision, cnn_reactive, mf_cnn, cnn_lstm,
        /// no_multimodal_memory, no_l1_l3, no_l2_l3, no_l1_l2.
        #[arg(long)]
        kind: Option<String>,
        /// Architecture preset: desk, tiny, or full.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seq_len: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        base_lr: Option<f64>,
        #[arg(long)]
        dropout: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run seeded closed-loop episodes and write trajectory logs and
    /// metric reports.
    Eval {
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        /// `expert`, `path_tracker`, or a checkpoint path.
        #[arg(long)]
        policy: Option<String>,
        /// Episode-level parallelism; results merge in seed order.
        #[arg(long)]
        jobs: Option<usize>,
        /// Camera raster side.
        #[arg(long, default_value_t = 56)]
        side: usize,
    },
    /// Rebuild comparison tables from saved trajectory logs.
    Report {
        /// Directory of per-episode `.json` trajectory logs.
        #[arg(long)]
        logs: PathBuf,
        /// Emit the ablation table (SR / Avg.Int. per task) instead of the
        /// task table.
        #[arg(long)]
        ablation: bool,
    },
}

#[derive(Subcommand)]
enum MapCommand {
    /// Ingest floorplan rasters, exit annotations, and an optional road
    /// export; validate; write a bundle.
    Build {
        /// Map description JSON (floorplan images, exits, roads).
        #[arg(long)]
        spec: PathBuf,
        /// Bundle output path.
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Check an existing bundle and list violations.
    Validate {
        /// Bundle file to check.
        bundle: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), Failure> {
    let file_cfg = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let out_dir = cli
        .out
        .or_else(|| file_cfg.out_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    match cli.command {
        Command::Map { command } => match command {
            MapCommand::Build { spec, bundle } => mapcmd::build(&spec, &bundle),
            MapCommand::Validate { bundle } => mapcmd::validate(&bundle),
        },
        Command::Plan {
            bundle,
            start,
            goal,
        } => mapcmd::plan(&bundle, &start, &goal),
        Command::Intent { scenario, rdp_eps } => runcmd::intent(&scenario, rdp_eps),
        Command::Collect {
            scenarios,
            seeds,
            side,
        } => {
            let scenarios = file_cfg.merge_scenarios(scenarios);
            let seeds = file_cfg.merge_seeds(seeds);
            runcmd::collect(&scenarios, &seeds, side, &out_dir)
        }
        Command::Train {
            dataset,
            kind,
            preset,
            epochs,
            seq_len,
            batch_size,
            base_lr,
            dropout,
            seed,
        } => {
            let opts = runcmd::TrainOpts {
                dataset: dataset
                    .or_else(|| file_cfg.dataset.clone().map(PathBuf::from))
                    .unwrap_or_else(|| out_dir.join("dataset/demos")),
                kind: kind
                    .or_else(|| file_cfg.kind.clone())
                    .unwrap_or_else(|| "decision".to_string()),
                preset: preset
                    .or_else(|| file_cfg.preset.clone())
                    .unwrap_or_else(|| "desk".to_string()),
                epochs,
                seq_len,
                batch_size,
                base_lr,
                dropout,
                seed,
                train_overrides: file_cfg.train.clone(),
            };
            runcmd::train(&opts, &out_dir)
        }
        Command::Eval {
            scenarios,
            seeds,
            policy,
            jobs,
            side,
        } => {
            let scenarios = file_cfg.merge_scenarios(scenarios);
            let seeds = file_cfg.merge_seeds(seeds);
            let policy = policy
                .or_else(|| file_cfg.policy.clone())
                .unwrap_or_else(|| "expert".to_string());
            let jobs = jobs.or(file_cfg.jobs).unwrap_or(1).max(1);
            runcmd::eval(&scenarios, &seeds, &policy, jobs, side, &out_dir)
        }
        Command::Report { logs, ablation } => runcmd::report(&logs, ablation, &out_dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
