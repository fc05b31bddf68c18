//! Unified training (combined action + plan loss) and the two-stage
//! inference loop (plan generation, then action generation with periodic
//! replanning).

mod ablate;
mod evaluate;
mod rollout;
mod train;

pub use ablate::{run_ablation, AblationAxis, AblationBudget, AblationRow, AblationTable};
pub use evaluate::{evaluate, EvalReport};
pub use rollout::{
    generate_plan, plan_to_env_coords, rollout, rollout_batch, PlanRecord, RolloutRecord,
};
pub use train::{train, LossRow, TrainOptions, TrainReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("non-finite loss at update {step} (batch seed {batch_seed}); halting")]
    NonFiniteLoss { step: usize, batch_seed: u64 },
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
    #[error(transparent)]
    Checkpoint(#[from] crate::tensor::checkpoint::CheckpointError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
