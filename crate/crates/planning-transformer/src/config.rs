//! Model, plan, and goal hyperparameters shared across the crate.

use crate::plan::{PlanFeatureSpec, SamplingMethod};
use crate::sequence::GoalMode;
use crate::tensor::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
#[error("invalid config: {0}")]
pub struct ConfigError(pub String);

/// Everything the model and both pipelines need to agree on.
///
/// Defaults follow the reference configuration (3 layers, 2 heads, 10
/// planning tokens, replanning every 10 steps, equal loss weights); smaller
/// per-environment overrides live in the shipped config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PtConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub dropout_attn: Float,
    pub dropout_resid: Float,
    pub dropout_embd: Float,
    /// Timesteps of (return-to-go, state, action) memory, `K`.
    pub context_len: usize,
    /// Planning tokens per plan, `n`. May be 0 only for the no-plan
    /// baseline, which also requires `beta == 0`.
    pub n_plan_tokens: usize,
    /// Environment steps between plan regenerations at inference.
    pub replan_interval: usize,
    pub use_timestep_embedding: bool,
    pub max_timesteps: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    /// State dimensions that form the goal space; empty disables
    /// goal-conditioning (and forces [`GoalMode::NoGoal`]).
    pub goal_indices: Vec<usize>,
    pub goal_mode: GoalMode,
    pub plan: PlanFeatureSpec,
    pub sampling: SamplingMethod,
    /// Plans are anchor-relative by default; absolute is an ablation arm.
    pub relative_plans: bool,
    /// Action-loss weight.
    pub alpha: Float,
    /// Plan-loss weight.
    pub beta: Float,
    /// Initial return-to-go target at evaluation, in raw return units.
    pub target_return: f64,
    /// Exploration noise as a fraction of half the action range, in [0, 1].
    pub action_noise_scale: f64,
    /// Cap on how late in a trajectory training windows may start, as a
    /// fraction of T-1.
    pub max_trajectory_ratio: f64,
}

impl Default for PtConfig {
    fn default() -> Self {
        Self {
            n_layers: 3,
            n_heads: 2,
            d_model: 128,
            dropout_attn: 0.15,
            dropout_resid: 0.15,
            dropout_embd: 0.0,
            context_len: 10,
            n_plan_tokens: 10,
            replan_interval: 10,
            use_timestep_embedding: false,
            max_timesteps: 1024,
            state_dim: 2,
            action_dim: 2,
            goal_indices: vec![0, 1],
            goal_mode: GoalMode::ProjAbsolute,
            plan: PlanFeatureSpec::states_only(vec![0, 1]),
            sampling: SamplingMethod::FixedDistance,
            relative_plans: true,
            alpha: 0.5,
            beta: 0.5,
            target_return: 1.0,
            action_noise_scale: 0.0,
            max_trajectory_ratio: 0.5,
        }
    }
}

impl PtConfig {
    pub fn goal_dim(&self) -> usize {
        self.goal_indices.len()
    }

    /// Raw feature width of the single goal token, 0 when unconditioned.
    pub fn goal_token_dim(&self) -> usize {
        match self.goal_mode {
            GoalMode::NoGoal => 0,
            GoalMode::Absolute | GoalMode::Relative => self.goal_dim(),
            GoalMode::ProjAbsolute | GoalMode::ProjRelative => 2 * self.goal_dim(),
        }
    }

    pub fn n_goal_tokens(&self) -> usize {
        usize::from(self.goal_mode != GoalMode::NoGoal)
    }

    pub fn plan_feature_dim(&self) -> usize {
        self.plan.feature_dim(self.action_dim)
    }

    /// Maximum sequence length: goal tokens + n plan slots + 3 tokens per
    /// context timestep.
    pub fn seq_capacity(&self) -> usize {
        self.n_goal_tokens() + self.n_plan_tokens + 3 * self.context_len
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError(m));
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return err(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.n_layers == 0 {
            return err("n_layers must be >= 1".into());
        }
        if self.context_len == 0 {
            return err("context_len must be >= 1".into());
        }
        if self.replan_interval == 0 {
            return err("replan_interval must be >= 1".into());
        }
        if self.replan_interval > self.context_len {
            return err(format!(
                "replan_interval {} must not exceed context_len {} or history is lost between replans",
                self.replan_interval, self.context_len
            ));
        }
        if self.n_plan_tokens == 0 && self.beta != 0.0 {
            return err("n_plan_tokens = 0 (no-plan baseline) requires beta = 0".into());
        }
        if self.alpha < 0.0 || self.beta < 0.0 || self.alpha + self.beta <= 0.0 {
            return err(format!(
                "loss weights must satisfy alpha >= 0, beta >= 0, alpha + beta > 0 (got {}, {})",
                self.alpha, self.beta
            ));
        }
        self.plan
            .validate(self.state_dim)
            .map_err(ConfigError)?;
        match self.goal_mode {
            GoalMode::NoGoal => {
                if !self.goal_indices.is_empty() {
                    return err("goal_mode no_goal requires empty goal_indices".into());
                }
            }
            _ => {
                if self.goal_indices.is_empty() {
                    return err(format!(
                        "goal_mode {:?} requires non-empty goal_indices",
                        self.goal_mode
                    ));
                }
                if !self.goal_indices.windows(2).all(|w| w[0] < w[1]) {
                    return err("goal_indices must be strictly increasing".into());
                }
                if *self.goal_indices.last().unwrap() >= self.state_dim {
                    return err(format!(
                        "goal index {} out of range for state_dim {}",
                        self.goal_indices.last().unwrap(),
                        self.state_dim
                    ));
                }
            }
        }
        if self.use_timestep_embedding && self.max_timesteps == 0 {
            return err("timestep embedding requires max_timesteps >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.action_noise_scale) {
            return err(format!(
                "action_noise_scale {} must lie in [0, 1]",
                self.action_noise_scale
            ));
        }
        if !(0.0..=1.0).contains(&self.max_trajectory_ratio) {
            return err(format!(
                "max_trajectory_ratio {} must lie in [0, 1]",
                self.max_trajectory_ratio
            ));
        }
        Ok(())
    }
}
