//! Diagnostic probe: where do rollouts end up, how far do they travel, and
//! how does action noise affect success. Tuning tool.

use planning_transformer::config::PtConfig;
use planning_transformer::envs::maze::{generate_maze_dataset, MazeLayout};
use planning_transformer::envs::{Environment, MazeWorld};
use planning_transformer::pipeline::{rollout_batch, train, TrainOptions};
use planning_transformer::sequence::GoalMode;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let maze = args.get(1).map(String::as_str).unwrap_or("medium");
    let n_traj: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2500);
    let updates: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1200);

    let layout = MazeLayout::builtin(maze).unwrap();
    let ds = generate_maze_dataset(&layout, n_traj, 0).unwrap();
    let lens: Vec<usize> = ds.trajectories.iter().map(|t| t.len()).collect();
    let maxlen = lens.iter().max().unwrap();
    let meanlen = lens.iter().sum::<usize>() as f64 / lens.len() as f64;
    println!("dataset: mean traj len {meanlen:.0}, max {maxlen}");

    let cfg = PtConfig {
        d_model: 32,
        goal_mode: GoalMode::ProjAbsolute,
        action_noise_scale: 0.0,
        ..Default::default()
    };
    let opts = TrainOptions {
        n_updates: updates,
        batch_size: 32,
        learning_rate: 1e-3,
        seed: 0,
        checkpoint_dir: None,
    };
    let (model, report) = train(&ds, &cfg, &opts).unwrap();
    println!("trained: final loss {:.4}", report.final_loss());

    for noise in [0.0, 0.15, 0.35] {
        let mut cfg_n = cfg.clone();
        cfg_n.action_noise_scale = noise;
        let envs: Vec<Box<dyn Environment>> = (0..20)
            .map(|_| {
                Box::new(MazeWorld::eval(MazeLayout::builtin(maze).unwrap()))
                    as Box<dyn Environment>
            })
            .collect();
        let seeds: Vec<u64> = (0..20).collect();
        let recs = rollout_batch(&model, &cfg_n, &ds.stats, envs, &seeds, false);
        let succ = recs.iter().filter(|r| r.success).count();
        let goal = layout.cell_center(layout.goal_cell);
        let mut dists: Vec<f64> = recs
            .iter()
            .map(|r| {
                let s = r.states.last().unwrap();
                (((s[0] - goal.0).powi(2) + (s[1] - goal.1).powi(2)) as f64).sqrt()
            })
            .collect();
        dists.sort_by(f64::total_cmp);
        let travel: f64 = recs
            .iter()
            .map(|r| {
                r.states
                    .windows(2)
                    .map(|w| {
                        (((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)) as f64).sqrt()
                    })
                    .sum::<f64>()
            })
            .sum::<f64>()
            / recs.len() as f64;
        let steps: f64 =
            recs.iter().map(|r| r.actions.len() as f64).sum::<f64>() / recs.len() as f64;
        println!(
            "noise {noise}: {succ}/20 success | median final dist to goal {:.2} | mean travel {travel:.1} | mean steps {steps:.0}",
            dists[10]
        );
    }
}
