//! Return conditioning on the dense-reward chain: one trained model,
//! evaluated at increasing return-to-go targets. Higher targets should
//! produce higher achieved returns.

use planning_transformer::data::load_dataset;
use planning_transformer::envs::{DenseChain, Environment};
use planning_transformer::pipeline::{evaluate, train, TrainOptions};
use planning_transformer::runcfg::RunConfig;

fn main() {
    let config_path = format!("{}/configs/chain.json", env!("CARGO_MANIFEST_DIR"));
    let run = RunConfig::from_file(&config_path).expect("config loads");
    let ds = load_dataset(&run.dataset)
        .expect("dataset loads (run the generate_datasets example first)");

    let seed = run.seeds[0];
    let opts = TrainOptions {
        n_updates: run.n_updates,
        batch_size: run.batch_size,
        learning_rate: run.learning_rate,
        seed,
        checkpoint_dir: None,
    };
    let (model, report) = train(&ds, &run.model, &opts).expect("training runs");
    println!("trained: final loss {:.4}", report.final_loss());

    let max_return = ds.stats.max_return;
    for fraction in [0.25, 0.5, 1.0] {
        let mut cfg = run.model.clone();
        cfg.target_return = fraction * max_return;
        let rep = evaluate(
            std::slice::from_ref(&(seed, model.clone())),
            &cfg,
            &ds.stats,
            || Box::new(DenseChain::new()) as Box<dyn Environment>,
            run.n_rollouts,
        );
        println!(
            "target {:.2} ({}x dataset max): normalized score {:.1}",
            cfg.target_return, fraction, rep.mean
        );
    }
}
