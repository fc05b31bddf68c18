//! Quick learning probe: train on umaze with and without plans, print
//! scores. A sanity tool while tuning, not a benchmark.

use planning_transformer::config::PtConfig;
use planning_transformer::envs::maze::{generate_maze_dataset, MazeLayout};
use planning_transformer::envs::{Environment, MazeWorld};
use planning_transformer::pipeline::{evaluate, train, TrainOptions};
use planning_transformer::sequence::GoalMode;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let maze = args.get(1).map(String::as_str).unwrap_or("umaze");
    let n_traj: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(600);
    let updates: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(800);
    let n_rollouts: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(30);

    let layout = MazeLayout::builtin(maze).unwrap();
    let ds = generate_maze_dataset(&layout, n_traj, 0).unwrap();
    println!(
        "dataset {maze}: {} trajectories, {} timesteps, {} scripted successes",
        ds.trajectories.len(),
        ds.n_timesteps(),
        ds.trajectories.iter().filter(|t| t.terminal).count()
    );

    let noise = match maze {
        "large" => 0.2,
        _ => 0.35,
    };
    let pt_cfg = PtConfig {
        d_model: 32,
        goal_mode: GoalMode::ProjAbsolute,
        action_noise_scale: noise,
        ..Default::default()
    };
    let base_cfg = PtConfig {
        n_plan_tokens: 0,
        beta: 0.0,
        ..pt_cfg.clone()
    };

    for (name, cfg) in [("with-plans", &pt_cfg), ("no-plans", &base_cfg)] {
        let t = Instant::now();
        let opts = TrainOptions {
            n_updates: updates,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            checkpoint_dir: None,
        };
        let (model, report) = train(&ds, cfg, &opts).unwrap();
        let first = &report.steps[0];
        let last = report.steps.last().unwrap();
        let mk = || {
            Box::new(MazeWorld::eval(MazeLayout::builtin(maze).unwrap())) as Box<dyn Environment>
        };
        let eval = evaluate(&[(0, model)], cfg, &ds.stats, mk, n_rollouts);
        println!(
            "{name}: loss {:.4} -> {:.4} | score {:.1} | train {:.0}s eval total {:.0}s",
            first.total,
            last.total,
            eval.mean,
            t.elapsed().as_secs_f64(),
            t.elapsed().as_secs_f64()
        );
    }
}
