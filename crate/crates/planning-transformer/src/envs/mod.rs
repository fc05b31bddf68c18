//! Desk-scale environments and scripted dataset generators: goal-conditioned
//! maze navigation with trajectory stitching, and a dense-reward chain for
//! return conditioning.

pub mod chain;
pub mod maze;

pub use chain::{generate_chain_dataset, DenseChain};
pub use maze::{generate_maze_dataset, MazeLayout, MazeWorld};

use crate::tensor::Float;
use serde::{Deserialize, Serialize};

/// How an episode turns into a normalized score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScoreKind {
    /// 100 on success, 0 otherwise.
    Success,
    /// `100 * (return - random) / (expert - random)`, clipped to
    /// `[0, 100 + margin]`; reference returns come from scripted policies.
    Return {
        random_return: f64,
        expert_return: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    /// State dimensions that define the goal space (empty for
    /// reward-conditioned environments).
    pub goal_indices: Vec<usize>,
    pub horizon: usize,
    pub action_low: Vec<Float>,
    pub action_high: Vec<Float>,
    pub score: ScoreKind,
}

impl EnvSpec {
    /// Half the action range per dimension; the unit for action noise.
    pub fn action_half_range(&self) -> Vec<Float> {
        self.action_low
            .iter()
            .zip(&self.action_high)
            .map(|(lo, hi)| (hi - lo) / 2.0)
            .collect()
    }
}

pub struct Step {
    pub state: Vec<Float>,
    pub reward: Float,
    pub done: bool,
}

/// Episodic environment. Dynamics are deterministic given the reset seed
/// and the action sequence; stepping a finished episode is a contract
/// violation.
pub trait Environment {
    fn spec(&self) -> &EnvSpec;
    fn reset(&mut self, seed: u64) -> Vec<Float>;
    fn step(&mut self, action: &[Float]) -> Step;
    /// True once the episode reached its success condition (always false
    /// for purely reward-conditioned environments).
    fn succeeded(&self) -> bool;
    /// Goal position in state coordinates, when the task has one.
    fn goal(&self) -> Option<Vec<Float>>;
}

/// Outcome summary used for scoring.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeResult {
    pub total_return: f64,
    pub success: bool,
}

const SCORE_MARGIN: f64 = 10.0;

/// Normalized score in `[0, 100 + margin]`: success-based tasks score
/// 100 * success, return-based tasks rescale so random ~ 0 and expert ~ 100.
pub fn normalized_score(spec: &EnvSpec, episode: EpisodeResult) -> f64 {
    match &spec.score {
        ScoreKind::Success => {
            if episode.success {
                100.0
            } else {
                0.0
            }
        }
        ScoreKind::Return {
            random_return,
            expert_return,
        } => {
            let span = expert_return - random_return;
            let s = 100.0 * (episode.total_return - random_return) / span;
            s.clamp(0.0, 100.0 + SCORE_MARGIN)
        }
    }
}
