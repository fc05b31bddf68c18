//! Trains a small model, records one rollout with attention capture, and
//! renders both figures: the plan overlay (executed path, goal star, plans
//! with key-points) and the attention heatmap with modality column bands.

use planning_transformer::data::load_dataset;
use planning_transformer::envs::maze::MazeLayout;
use planning_transformer::envs::{Environment, MazeWorld};
use planning_transformer::pipeline::{rollout, train, TrainOptions};
use planning_transformer::runcfg::RunConfig;
use planning_transformer::viz::{render_attention, render_plan_overlay};

fn main() {
    let config_path = format!("{}/configs/maze_umaze.json", env!("CARGO_MANIFEST_DIR"));
    let run = RunConfig::from_file(&config_path).expect("config loads");
    let ds = load_dataset(&run.dataset)
        .expect("dataset loads (run the generate_datasets example first)");

    let opts = TrainOptions {
        n_updates: run.n_updates,
        batch_size: run.batch_size,
        learning_rate: run.learning_rate,
        seed: run.seeds[0],
        checkpoint_dir: None,
    };
    let (model, _) = train(&ds, &run.model, &opts).expect("training runs");

    let layout = MazeLayout::builtin("umaze").unwrap();
    let env = Box::new(MazeWorld::eval(layout.clone())) as Box<dyn Environment>;
    let rec = rollout(&model, &run.model, &ds.stats, env, 7, true);
    println!(
        "rollout: success={} steps={} plans={} attention snapshots={}",
        rec.success,
        rec.actions.len(),
        rec.plans.len(),
        rec.attention.len()
    );

    std::fs::create_dir_all(&run.out_dir).unwrap();
    let record_path = run.out_dir.join("rollout.json");
    std::fs::write(&record_path, rec.to_json()).unwrap();

    let overlay = render_plan_overlay(&rec, &layout).expect("overlay renders");
    let overlay_path = run.out_dir.join("plan_overlay.svg");
    std::fs::write(&overlay_path, overlay).unwrap();

    let (step, capture) = &rec.attention[rec.attention.len() / 2];
    let heatmap = render_attention(capture, &rec.layout.tags()).expect("heatmap renders");
    let heatmap_path = run.out_dir.join("attention.svg");
    std::fs::write(&heatmap_path, heatmap).unwrap();
    let dump_path = run.out_dir.join("attention.json");
    std::fs::write(&dump_path, capture.to_json()).unwrap();

    println!("wrote {}", record_path.display());
    println!("wrote {}", overlay_path.display());
    println!("wrote {} (snapshot at step {step})", heatmap_path.display());
    println!("wrote {}", dump_path.display());
}
