//! The headline comparison: the same model with planning tokens enabled
//! versus disabled (`n_plan_tokens = 0`, `beta = 0`), trained and evaluated
//! on one maze. The no-plan variant is a configuration, not a separate
//! implementation.
//!
//! Usage: `cargo run --example plans_vs_no_plans [-- umaze|medium|large]`

use planning_transformer::config::PtConfig;
use planning_transformer::data::load_dataset;
use planning_transformer::envs::maze::MazeLayout;
use planning_transformer::envs::{Environment, MazeWorld};
use planning_transformer::pipeline::{evaluate, train, TrainOptions};
use planning_transformer::runcfg::RunConfig;

fn main() {
    let maze = std::env::args().nth(1).unwrap_or_else(|| "umaze".into());
    let config_path = format!(
        "{}/configs/maze_{maze}.json",
        env!("CARGO_MANIFEST_DIR")
    );
    let run = RunConfig::from_file(&config_path).expect("config loads");
    let ds = load_dataset(&run.dataset)
        .expect("dataset loads (run the generate_datasets example first)");

    let variants: [(&str, PtConfig); 2] = [
        ("with plans", run.model.clone()),
        (
            "no plans",
            PtConfig {
                n_plan_tokens: 0,
                beta: 0.0,
                ..run.model.clone()
            },
        ),
    ];

    let mut scores = Vec::new();
    for (label, cfg) in &variants {
        let mut models = Vec::new();
        for &seed in &run.seeds {
            let opts = TrainOptions {
                n_updates: run.n_updates,
                batch_size: run.batch_size,
                learning_rate: run.learning_rate,
                seed,
                checkpoint_dir: None,
            };
            let (model, report) = train(&ds, cfg, &opts).expect("training runs");
            println!("{label} seed {seed}: final loss {:.4}", report.final_loss());
            models.push((seed, model));
        }
        let maze_name = maze.clone();
        let report = evaluate(
            &models,
            cfg,
            &ds.stats,
            move || {
                Box::new(MazeWorld::eval(MazeLayout::builtin(&maze_name).unwrap()))
                    as Box<dyn Environment>
            },
            run.n_rollouts,
        );
        println!(
            "{label}: {:.1} +/- {:.1} (per seed: {:?})",
            report.mean, report.std, report.per_seed
        );
        scores.push(report.mean);
    }
    println!(
        "plan advantage on {maze}: {:+.1} points",
        scores[0] - scores[1]
    );
}
