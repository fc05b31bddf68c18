//! Writes the four shipped datasets to `out/data/`: three maze stitching
//! datasets (scripted waypoint-following between random start/goal pairs)
//! and the mixed-quality dense-reward chain dataset.

use planning_transformer::data::save_dataset;
use planning_transformer::envs::chain::generate_chain_dataset;
use planning_transformer::envs::maze::{generate_maze_dataset, MazeLayout};

fn main() {
    std::fs::create_dir_all("out/data").expect("create out/data");
    for (name, n) in [("umaze", 1000), ("medium", 2500), ("large", 3000)] {
        let layout = MazeLayout::builtin(name).unwrap();
        let ds = generate_maze_dataset(&layout, n, 0).unwrap();
        let succ = ds.trajectories.iter().filter(|t| t.terminal).count();
        let path = format!("out/data/{name}.jsonl");
        save_dataset(&path, &ds).unwrap();
        println!(
            "{path}: {n} trajectories, {} timesteps, {succ} scripted successes",
            ds.n_timesteps()
        );
    }
    let ds = generate_chain_dataset(800, (0.4, 0.4, 0.2), 0).unwrap();
    save_dataset("out/data/chain.jsonl", &ds).unwrap();
    println!(
        "out/data/chain.jsonl: 800 trajectories, returns {:.1}..{:.1}",
        ds.stats.min_return, ds.stats.max_return
    );
}
