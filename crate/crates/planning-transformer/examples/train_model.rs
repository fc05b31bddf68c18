//! Trains one model from a run-config file (default: the umaze config) and
//! writes checkpoints plus the per-step loss CSV.
//!
//! Usage: `cargo run --example train_model [-- path/to/config.json]`
//! Generate datasets first (`generate_datasets` example or `pt gen-data`).

use planning_transformer::data::load_dataset;
use planning_transformer::pipeline::{train, TrainOptions};
use planning_transformer::runcfg::RunConfig;

fn main() {
    let config_path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| format!("{}/configs/maze_umaze.json", env!("CARGO_MANIFEST_DIR")));
    let run = RunConfig::from_file(&config_path).expect("config loads");
    let ds = load_dataset(&run.dataset).expect("dataset loads (run generate_datasets first)");

    let seed = run.seeds[0];
    let opts = TrainOptions {
        n_updates: run.n_updates,
        batch_size: run.batch_size,
        learning_rate: run.learning_rate,
        seed,
        checkpoint_dir: Some(run.out_dir.join(format!("seed_{seed}"))),
    };
    let (model, report) = train(&ds, &run.model, &opts).expect("training runs");
    let csv = run.out_dir.join(format!("seed_{seed}/train_report.csv"));
    report.write_csv(&csv).unwrap();
    println!(
        "{} parameters, loss {:.4} -> {:.4} over {} updates in {:.0}s",
        model.n_parameters(),
        report.steps.first().unwrap().total,
        report.final_loss(),
        run.n_updates,
        report.wall_clock_secs
    );
    println!("checkpoints: {:?}", report.checkpoint_paths.last().unwrap());
    println!("loss curve: {}", csv.display());
}
