//! Prints visited cell sequences for a few eval rollouts plus success on
//! random in-distribution pairs. Tuning tool.

use planning_transformer::config::PtConfig;
use planning_transformer::envs::maze::{generate_maze_dataset, MazeLayout, MazeWorld};
use planning_transformer::envs::Environment;
use planning_transformer::pipeline::{rollout_batch, train, TrainOptions};
use planning_transformer::sequence::GoalMode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cells(states: &[Vec<f32>]) -> String {
    let mut out: Vec<(i32, i32)> = Vec::new();
    for s in states {
        let c = (s[0].floor() as i32, s[1].floor() as i32);
        if out.last() != Some(&c) {
            out.push(c);
        }
    }
    out.iter()
        .map(|(x, y)| format!("{x},{y}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let maze = args.get(1).map(String::as_str).unwrap_or("medium");
    let updates: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1200);
    let d_model: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(32);

    let layout = MazeLayout::builtin(maze).unwrap();
    let ds = generate_maze_dataset(&layout, 2500, 0).unwrap();
    let cfg = PtConfig {
        d_model,
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
    println!("final loss {:.4}", report.final_loss());

    // Eval-pair rollouts with cell traces.
    let envs: Vec<Box<dyn Environment>> = (0..3)
        .map(|_| {
            Box::new(MazeWorld::eval(MazeLayout::builtin(maze).unwrap())) as Box<dyn Environment>
        })
        .collect();
    let recs = rollout_batch(&model, &cfg, &ds.stats, envs, &[0, 1, 2], false);
    for r in &recs {
        println!(
            "eval rollout: success={} steps={} cells: {}",
            r.success,
            r.actions.len(),
            cells(&r.states)
        );
    }

    // Random in-distribution pairs.
    let free = layout.free_cells();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut pairs = Vec::new();
    let mut envs: Vec<Box<dyn Environment>> = Vec::new();
    for _ in 0..30 {
        let (s, g) = loop {
            let s = free[rng.gen_range(0..free.len())];
            let g = free[rng.gen_range(0..free.len())];
            if s != g && layout.shortest_path(s, g).is_some() {
                break (s, g);
            }
        };
        pairs.push((s, g));
        envs.push(Box::new(MazeWorld::with_cells(layout.clone(), s, g)));
    }
    let seeds: Vec<u64> = (0..30).collect();
    let recs = rollout_batch(&model, &cfg, &ds.stats, envs, &seeds, false);
    let succ = recs.iter().filter(|r| r.success).count();
    let mut by_len: Vec<(usize, bool)> = pairs
        .iter()
        .zip(&recs)
        .map(|((s, g), r)| (layout.shortest_path(*s, *g).unwrap().len(), r.success))
        .collect();
    by_len.sort();
    println!("random pairs: {succ}/30 success");
    for (l, s) in by_len {
        print!("{l}:{} ", if s { "Y" } else { "n" });
    }
    println!();
}
