//! Loads the final checkpoints a training run produced and reports the mean
//! and standard deviation of normalized scores across seeds.
//!
//! Usage: `cargo run --example evaluate_checkpoint [-- path/to/config.json]`
//! Run `train_model` (or `pt train`) for each seed first; seeds without a
//! checkpoint are skipped with a note.

use planning_transformer::data::load_dataset;
use planning_transformer::model::load_checkpoint;
use planning_transformer::pipeline::evaluate;
use planning_transformer::runcfg::RunConfig;

fn main() {
    let config_path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| format!("{}/configs/maze_umaze.json", env!("CARGO_MANIFEST_DIR")));
    let run = RunConfig::from_file(&config_path).expect("config loads");
    let ds = load_dataset(&run.dataset).expect("dataset loads");

    let mut models = Vec::new();
    for &seed in &run.seeds {
        let path = run.out_dir.join(format!("seed_{seed}/final.ptck"));
        match load_checkpoint(&path) {
            Ok((params, _)) => models.push((seed, params)),
            Err(e) => println!("skipping seed {seed}: {e}"),
        }
    }
    assert!(!models.is_empty(), "no checkpoints found; run train_model first");

    let report = evaluate(
        &models,
        &run.model,
        &ds.stats,
        || run.make_env().unwrap(),
        run.n_rollouts,
    );
    println!(
        "{}: {:.1} +/- {:.1} ({} seeds x {} rollouts)",
        report.env,
        report.mean,
        report.std,
        report.seeds.len(),
        report.n_rollouts
    );
    let path = run.out_dir.join("scores.json");
    std::fs::write(&path, report.to_json()).unwrap();
    println!("wrote {}", path.display());
}
