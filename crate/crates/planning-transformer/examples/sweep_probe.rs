//! Sweep: updates x eval-noise x plans, printing eval-pair success. Tuning
//! tool for the medium maze.

use planning_transformer::config::PtConfig;
use planning_transformer::envs::maze::{generate_maze_dataset, MazeLayout, MazeWorld};
use planning_transformer::envs::Environment;
use planning_transformer::pipeline::{rollout_batch, train, TrainOptions};
use planning_transformer::sequence::GoalMode;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let maze = args.get(1).map(String::as_str).unwrap_or("medium");
    let updates: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(3000);
    let d_model: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(32);
    let n_traj: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(2500);

    let layout = MazeLayout::builtin(maze).unwrap();
    let ds = generate_maze_dataset(&layout, n_traj, 0).unwrap();

    for n_plan in [10usize, 0] {
        let cfg = PtConfig {
            d_model,
            goal_mode: GoalMode::ProjAbsolute,
            n_plan_tokens: n_plan,
            beta: if n_plan == 0 { 0.0 } else { 0.5 },
            ..Default::default()
        };
        let opts = TrainOptions {
            n_updates: updates,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            checkpoint_dir: None,
        };
        let t = std::time::Instant::now();
        let (model, report) = train(&ds, &cfg, &opts).unwrap();
        print!(
            "plans={n_plan} d={d_model} u={updates} loss={:.4} ({:.0}s):",
            report.final_loss(),
            t.elapsed().as_secs_f64()
        );
        for noise in [0.0, 0.2, 0.35] {
            let mut cfg_n = cfg.clone();
            cfg_n.action_noise_scale = noise;
            let envs: Vec<Box<dyn Environment>> = (0..25)
                .map(|_| {
                    Box::new(MazeWorld::eval(MazeLayout::builtin(maze).unwrap()))
                        as Box<dyn Environment>
                })
                .collect();
            let seeds: Vec<u64> = (0..25).collect();
            let recs = rollout_batch(&model, &cfg_n, &ds.stats, envs, &seeds, false);
            let succ = recs.iter().filter(|r| r.success).count();
            print!("  noise{noise}: {succ}/25");
        }
        println!();
    }
}
