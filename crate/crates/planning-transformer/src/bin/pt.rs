//! Command-line workflow: dataset generation, training, evaluation, the
//! ablation harness, and SVG visualization.
//!
//! Exit codes: 0 success, 1 validation error (bad config, missing files),
//! 2 runtime failure.

use clap::{Parser, Subcommand};
use planning_transformer::data::{load_dataset, save_dataset};
use planning_transformer::envs::chain::generate_chain_dataset;
use planning_transformer::envs::maze::{generate_maze_dataset, MazeLayout};
use planning_transformer::model::{load_checkpoint, ModelParams};
use planning_transformer::pipeline::{
    evaluate, rollout, run_ablation, train, AblationAxis, AblationBudget, RolloutRecord,
    TrainOptions,
};
use planning_transformer::runcfg::RunConfig;
use planning_transformer::viz::{render_attention, render_plan_overlay};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pt",
    about = "Planning-token sequence model: data generation, training, evaluation, visualization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a trajectory dataset (JSONL).
    GenData {
        /// maze-umaze | maze-medium | maze-large | dense-chain
        #[arg(long)]
        env: String,
        #[arg(long)]
        out: PathBuf,
        /// Number of trajectories.
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Custom maze layout file (ASCII grid) overriding the built-in.
        #[arg(long)]
        layout: Option<PathBuf>,
        /// low,medium,high proportions for dense-chain data.
        #[arg(long, default_value = "0.4,0.4,0.2")]
        quality_mix: String,
    },
    /// Train one model per seed in the run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override config keys, dotted paths: --set model.alpha=1.0
        #[arg(long = "set", value_parser = parse_key_val)]
        set: Vec<(String, String)>,
    },
    /// Evaluate the final checkpoints of a training run.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_parser = parse_key_val)]
        set: Vec<(String, String)>,
        /// Additionally record this many rollouts (with attention capture)
        /// from the first seed's model, as JSON files.
        #[arg(long, default_value_t = 0)]
        records: usize,
    },
    /// Train and score one model per configuration along the design axes.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_parser = parse_key_val)]
        set: Vec<(String, String)>,
        /// Comma list: sampling,relativity,goal,actions (default: all).
        #[arg(long, default_value = "sampling,relativity,goal,actions")]
        axes: String,
    },
    /// Render a rollout record as a plan-overlay SVG.
    VizPlan {
        #[arg(long)]
        record: PathBuf,
        /// Built-in layout name or a layout file path.
        #[arg(long)]
        layout: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a rollout record's attention snapshot as an SVG heatmap.
    VizAttn {
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also dump the raw capture as JSON.
        #[arg(long)]
        dump: Option<PathBuf>,
        /// Environment step of the snapshot (default: the middle one).
        #[arg(long)]
        step: Option<usize>,
    },
}

fn parse_key_val(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected key=value, got `{s}`"))
}

enum CliError {
    Validation(String),
    Runtime(String),
}

impl CliError {
    fn validation<E: std::fmt::Display>(e: E) -> Self {
        CliError::Validation(e.to_string())
    }

    fn runtime<E: std::fmt::Display>(e: E) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_config(path: &Path, set: &[(String, String)]) -> Result<RunConfig, CliError> {
    RunConfig::from_file_with_overrides(path, set).map_err(CliError::validation)
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "{what} not found: {}",
            path.display()
        )))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData {
            env,
            out,
            n,
            seed,
            layout,
            quality_mix,
        } => {
            let ds = match env.as_str() {
                "dense-chain" => {
                    let parts: Vec<f64> = quality_mix
                        .split(',')
                        .map(|p| p.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(CliError::validation)?;
                    if parts.len() != 3 || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                        return Err(CliError::Validation(
                            "quality-mix needs three proportions summing to 1".into(),
                        ));
                    }
                    generate_chain_dataset(n, (parts[0], parts[1], parts[2]), seed)
                        .map_err(CliError::runtime)?
                }
                maze_name => {
                    let layout = match layout {
                        Some(path) => {
                            require_file(&path, "layout")?;
                            MazeLayout::load(&path).map_err(CliError::validation)?
                        }
                        None => {
                            let short = maze_name.strip_prefix("maze-").unwrap_or(maze_name);
                            MazeLayout::builtin(short).ok_or_else(|| {
                                CliError::Validation(format!("unknown environment `{env}`"))
                            })?
                        }
                    };
                    generate_maze_dataset(&layout, n, seed).map_err(CliError::runtime)?
                }
            };
            if let Some(dir) = out.parent() {
                std::fs::create_dir_all(dir).map_err(CliError::runtime)?;
            }
            save_dataset(&out, &ds).map_err(CliError::runtime)?;
            println!(
                "wrote {} trajectories ({} timesteps) to {}",
                ds.trajectories.len(),
                ds.n_timesteps(),
                out.display()
            );
            Ok(())
        }

        Command::Train { config, set } => {
            let run = load_config(&config, &set)?;
            require_file(&run.dataset, "dataset")?;
            let ds = load_dataset(&run.dataset).map_err(CliError::validation)?;
            std::fs::create_dir_all(&run.out_dir).map_err(CliError::runtime)?;
            for &seed in &run.seeds {
                let opts = TrainOptions {
                    n_updates: run.n_updates,
                    batch_size: run.batch_size,
                    learning_rate: run.learning_rate,
                    seed,
                    checkpoint_dir: Some(run.out_dir.join(format!("seed_{seed}"))),
                };
                let (_, report) = train(&ds, &run.model, &opts).map_err(CliError::runtime)?;
                let csv = run.out_dir.join(format!("seed_{seed}/train_report.csv"));
                report.write_csv(&csv).map_err(CliError::runtime)?;
                println!(
                    "seed {seed}: final loss {:.4} in {:.0}s -> {}",
                    report.final_loss(),
                    report.wall_clock_secs,
                    csv.display()
                );
            }
            Ok(())
        }

        Command::Eval {
            config,
            set,
            records,
        } => {
            let run = load_config(&config, &set)?;
            require_file(&run.dataset, "dataset")?;
            let ds = load_dataset(&run.dataset).map_err(CliError::validation)?;
            let mut models: Vec<(u64, ModelParams)> = Vec::new();
            for &seed in &run.seeds {
                let ckpt = run.out_dir.join(format!("seed_{seed}/final.ptck"));
                require_file(&ckpt, "checkpoint")?;
                let (params, _) = load_checkpoint(&ckpt).map_err(CliError::validation)?;
                models.push((seed, params));
            }
            let report = evaluate(
                &models,
                &run.model,
                &ds.stats,
                || run.make_env().expect("environment builds"),
                run.n_rollouts,
            );
            let path = run.out_dir.join("scores.json");
            std::fs::write(&path, report.to_json()).map_err(CliError::runtime)?;
            println!(
                "{}: {:.1} +/- {:.1} over {} seeds x {} rollouts -> {}",
                report.env,
                report.mean,
                report.std,
                report.seeds.len(),
                report.n_rollouts,
                path.display()
            );
            for r in 0..records {
                let env = run.make_env().map_err(CliError::validation)?;
                let rec = rollout(&models[0].1, &run.model, &ds.stats, env, 10_000 + r as u64, true);
                let path = run.out_dir.join(format!("rollout_{r}.json"));
                std::fs::write(&path, rec.to_json()).map_err(CliError::runtime)?;
                println!(
                    "rollout {r}: score {:.0} -> {}",
                    rec.normalized_score,
                    path.display()
                );
            }
            Ok(())
        }

        Command::Ablate { config, set, axes } => {
            let run = load_config(&config, &set)?;
            require_file(&run.dataset, "dataset")?;
            let ds = load_dataset(&run.dataset).map_err(CliError::validation)?;
            let axes = parse_axes(&axes)?;
            let budget = AblationBudget {
                n_updates: run.n_updates,
                batch_size: run.batch_size,
                learning_rate: run.learning_rate,
                n_rollouts: run.n_rollouts,
                seed: run.seeds.first().copied().unwrap_or(0),
            };
            let table = run_ablation(
                &ds,
                &run.model,
                || run.make_env().expect("environment builds"),
                &axes,
                &budget,
            )
            .map_err(CliError::runtime)?;
            std::fs::create_dir_all(&run.out_dir).map_err(CliError::runtime)?;
            let md = run.out_dir.join("ablation.md");
            let csv = run.out_dir.join("ablation.csv");
            std::fs::write(&md, table.to_markdown()).map_err(CliError::runtime)?;
            std::fs::write(&csv, table.to_csv()).map_err(CliError::runtime)?;
            println!("{}", table.to_markdown());
            println!("wrote {} and {}", md.display(), csv.display());
            Ok(())
        }

        Command::VizPlan {
            record,
            layout,
            out,
        } => {
            require_file(&record, "rollout record")?;
            let rec = read_record(&record)?;
            let maze = if Path::new(&layout).exists() {
                MazeLayout::load(&layout).map_err(CliError::validation)?
            } else {
                MazeLayout::builtin(layout.strip_prefix("maze-").unwrap_or(&layout))
                    .ok_or_else(|| CliError::Validation(format!("unknown layout `{layout}`")))?
            };
            let svg = render_plan_overlay(&rec, &maze).map_err(CliError::validation)?;
            std::fs::write(&out, svg).map_err(CliError::runtime)?;
            println!("wrote {}", out.display());
            Ok(())
        }

        Command::VizAttn {
            record,
            out,
            dump,
            step,
        } => {
            require_file(&record, "rollout record")?;
            let rec = read_record(&record)?;
            if rec.attention.is_empty() {
                return Err(CliError::Validation(
                    "record has no attention snapshots (re-run eval with --records)".into(),
                ));
            }
            let idx = match step {
                Some(s) => rec
                    .attention
                    .iter()
                    .position(|(at, _)| *at == s)
                    .ok_or_else(|| {
                        CliError::Validation(format!("no attention snapshot at step {s}"))
                    })?,
                None => rec.attention.len() / 2,
            };
            let (at_step, capture) = &rec.attention[idx];
            let tags = rec.layout.tags();
            let svg = render_attention(capture, &tags).map_err(CliError::validation)?;
            std::fs::write(&out, svg).map_err(CliError::runtime)?;
            println!("wrote {} (snapshot at step {at_step})", out.display());
            if let Some(dump_path) = dump {
                std::fs::write(&dump_path, capture.to_json()).map_err(CliError::runtime)?;
                println!("wrote {}", dump_path.display());
            }
            Ok(())
        }
    }
}

fn read_record(path: &Path) -> Result<RolloutRecord, CliError> {
    let text = std::fs::read_to_string(path).map_err(CliError::runtime)?;
    RolloutRecord::from_json(&text).map_err(CliError::validation)
}

fn parse_axes(s: &str) -> Result<Vec<AblationAxis>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| match p {
            "sampling" => Ok(AblationAxis::Sampling),
            "relativity" => Ok(AblationAxis::PlanRelativity),
            "goal" => Ok(AblationAxis::GoalRepresentation),
            "actions" => Ok(AblationAxis::ActionsInPlan),
            other => Err(CliError::Validation(format!(
                "unknown ablation axis `{other}` (expected sampling, relativity, goal, actions)"
            ))),
        })
        .collect()
}
