//! Runs the ablation harness over all four design axes on the small maze:
//! plan sampling method, relative vs absolute plans, goal representation,
//! and actions-in-plan. One model is trained per configuration.

use planning_transformer::data::load_dataset;
use planning_transformer::pipeline::{run_ablation, AblationAxis, AblationBudget};
use planning_transformer::runcfg::RunConfig;

fn main() {
    let config_path = format!("{}/configs/maze_umaze.json", env!("CARGO_MANIFEST_DIR"));
    let run = RunConfig::from_file(&config_path).expect("config loads");
    let ds = load_dataset(&run.dataset)
        .expect("dataset loads (run the generate_datasets example first)");

    let budget = AblationBudget {
        n_updates: run.n_updates,
        batch_size: run.batch_size,
        learning_rate: run.learning_rate,
        n_rollouts: 25,
        seed: run.seeds[0],
    };
    let table = run_ablation(
        &ds,
        &run.model,
        || run.make_env().unwrap(),
        &AblationAxis::ALL,
        &budget,
    )
    .expect("ablation runs");

    println!("{}", table.to_markdown());
    std::fs::create_dir_all(&run.out_dir).unwrap();
    let md = run.out_dir.join("ablation.md");
    let csv = run.out_dir.join("ablation.csv");
    std::fs::write(&md, table.to_markdown()).unwrap();
    std::fs::write(&csv, table.to_csv()).unwrap();
    println!("wrote {} and {}", md.display(), csv.display());
}
