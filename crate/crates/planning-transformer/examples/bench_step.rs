//! Microbenchmark: wall-clock per training update and per rollout batch at
//! candidate model sizes. Run with `cargo run --example bench_step`.

use planning_transformer::config::PtConfig;
use planning_transformer::data::{sample_batch, BatchSpec};
use planning_transformer::envs::maze::{generate_maze_dataset, MazeLayout};
use planning_transformer::envs::{Environment, MazeWorld};
use planning_transformer::model::{backward_into_params, batch_losses, forward_batch, ModelParams};
use planning_transformer::pipeline::rollout_batch;
use planning_transformer::sequence::GoalMode;
use planning_transformer::tensor::adam::AdamState;
use planning_transformer::tensor::graph::Mode;
use std::time::Instant;

fn main() {
    let layout = MazeLayout::builtin("medium").unwrap();
    let t = Instant::now();
    let ds = generate_maze_dataset(&layout, 400, 0).unwrap();
    println!(
        "dataset: 400 trajectories, {} timesteps, {:.2}s",
        ds.n_timesteps(),
        t.elapsed().as_secs_f64()
    );

    for (d_model, batch) in [(32usize, 32usize), (48, 32), (64, 32), (32, 64)] {
        let cfg = PtConfig {
            d_model,
            goal_mode: GoalMode::ProjAbsolute,
            ..Default::default()
        };
        let mut model = ModelParams::init(&cfg, 0);
        let mut adam = AdamState::new(1e-3);
        let spec = BatchSpec::new(&cfg, batch, 0);
        let warm = sample_batch(&ds, &spec);

        let t = Instant::now();
        let iters = 10;
        for i in 0..iters {
            let spec = BatchSpec::new(&cfg, batch, i);
            let seqs = sample_batch(&ds, &spec);
            let mut fw = forward_batch(&seqs, &model, &cfg, Mode::Train, i);
            let (total, _, _) = batch_losses(&mut fw, &seqs, &cfg);
            backward_into_params(&mut fw, total, &mut model);
            drop(fw);
            let mut named = model.named_tensors_mut();
            let mut refs: Vec<_> = named.iter_mut().map(|(n, t)| (n.as_str(), &mut **t)).collect();
            adam.step(&mut refs).unwrap();
            model.clear_grads();
        }
        let per_update = t.elapsed().as_secs_f64() / iters as f64;
        println!(
            "d_model={d_model} batch={batch} params={} -> {:.1} ms/update ({:.1}s per 1000)",
            model.n_parameters(),
            per_update * 1e3,
            per_update * 1000.0
        );
        let _ = warm;

        if batch == 32 {
            let envs: Vec<Box<dyn Environment>> = (0..50)
                .map(|_| {
                    Box::new(MazeWorld::eval(MazeLayout::builtin("medium").unwrap()))
                        as Box<dyn Environment>
                })
                .collect();
            let seeds: Vec<u64> = (0..50).collect();
            let t = Instant::now();
            let recs = rollout_batch(&model, &cfg, &ds.stats, envs, &seeds, false);
            let steps: usize = recs.iter().map(|r| r.actions.len()).sum();
            println!(
                "  50-rollout eval batch: {:.1}s ({} env steps)",
                t.elapsed().as_secs_f64(),
                steps
            );
        }
    }
}
