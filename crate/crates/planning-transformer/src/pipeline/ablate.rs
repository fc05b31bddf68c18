//! Ablation harness over the four design axes: plan sampling method,
//! relative vs absolute plans, goal representation, and actions-in-plan.
//! Each configuration trains one model (everything else held at the base
//! config) and is evaluated on the same environment.

use super::evaluate::{evaluate, EvalReport};
use super::train::{train, TrainOptions};
use super::PipelineError;
use crate::config::PtConfig;
use crate::data::Dataset;
use crate::envs::Environment;
use crate::plan::SamplingMethod;
use crate::sequence::GoalMode;
use crate::tensor::Float;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    Sampling,
    PlanRelativity,
    GoalRepresentation,
    ActionsInPlan,
}

impl AblationAxis {
    pub const ALL: [AblationAxis; 4] = [
        AblationAxis::Sampling,
        AblationAxis::PlanRelativity,
        AblationAxis::GoalRepresentation,
        AblationAxis::ActionsInPlan,
    ];

    pub fn label(self) -> &'static str {
        match self {
            AblationAxis::Sampling => "Plan Sampling Method",
            AblationAxis::PlanRelativity => "Plan Use Relative States",
            AblationAxis::GoalRepresentation => "Goal Representation",
            AblationAxis::ActionsInPlan => "Use Actions in Plan",
        }
    }

    /// Configurations along this axis, with display labels.
    fn variants(self, base: &PtConfig) -> Vec<(String, PtConfig)> {
        match self {
            AblationAxis::Sampling => SamplingMethod::ALL
                .iter()
                .map(|&m| {
                    let cfg = PtConfig {
                        sampling: m,
                        ..base.clone()
                    };
                    (m.to_string(), cfg)
                })
                .collect(),
            AblationAxis::PlanRelativity => [true, false]
                .iter()
                .map(|&rel| {
                    let cfg = PtConfig {
                        relative_plans: rel,
                        ..base.clone()
                    };
                    (
                        if rel { "relative" } else { "absolute" }.to_string(),
                        cfg,
                    )
                })
                .collect(),
            AblationAxis::GoalRepresentation => GoalMode::CONDITIONED
                .iter()
                .map(|&mode| {
                    let cfg = PtConfig {
                        goal_mode: mode,
                        ..base.clone()
                    };
                    (mode.to_string(), cfg)
                })
                .collect(),
            AblationAxis::ActionsInPlan => [true, false]
                .iter()
                .map(|&inc| {
                    let mut cfg = base.clone();
                    cfg.plan.include_actions = inc;
                    (inc.to_string(), cfg)
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AblationRow {
    pub axis: String,
    pub value: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone)]
pub struct AblationTable {
    pub env: String,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn to_markdown(&self) -> String {
        let mut out = format!("| {} | Value | Score |\n|---|---|---|\n", self.env);
        let mut last_axis = String::new();
        for r in &self.rows {
            let axis = if r.axis == last_axis { "" } else { &r.axis };
            out.push_str(&format!(
                "| {} | {} | {:.1} ± {:.1} |\n",
                axis, r.value, r.mean, r.std
            ));
            last_axis.clone_from(&r.axis);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("axis,value,mean,std\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.axis, r.value, r.mean, r.std));
        }
        out
    }

    pub fn row(&self, axis: AblationAxis, value: &str) -> Option<&AblationRow> {
        self.rows
            .iter()
            .find(|r| r.axis == axis.label() && r.value == value)
    }
}

#[derive(Debug, Clone)]
pub struct AblationBudget {
    pub n_updates: usize,
    pub batch_size: usize,
    pub learning_rate: Float,
    pub n_rollouts: usize,
    pub seed: u64,
}

/// Trains and scores one model per configuration along the requested axes.
/// Empty `axes` degenerates to a single run of the base configuration.
pub fn run_ablation<F>(
    dataset: &Dataset,
    base_cfg: &PtConfig,
    mut make_env: F,
    axes: &[AblationAxis],
    budget: &AblationBudget,
) -> Result<AblationTable, PipelineError>
where
    F: FnMut() -> Box<dyn Environment>,
{
    let mut configs: Vec<(String, String, PtConfig)> = Vec::new();
    if axes.is_empty() {
        configs.push(("default".into(), "default".into(), base_cfg.clone()));
    } else {
        for axis in axes {
            for (value, cfg) in axis.variants(base_cfg) {
                configs.push((axis.label().to_string(), value, cfg));
            }
        }
    }

    let mut rows = Vec::with_capacity(configs.len());
    let mut env_name = String::new();
    for (axis, value, cfg) in configs {
        log::info!("ablation: {axis} = {value}");
        let opts = TrainOptions {
            n_updates: budget.n_updates,
            batch_size: budget.batch_size,
            learning_rate: budget.learning_rate,
            seed: budget.seed,
            checkpoint_dir: None,
        };
        let (model, _) = train(dataset, &cfg, &opts)?;
        let report: EvalReport = evaluate(
            &[(budget.seed, model)],
            &cfg,
            &dataset.stats,
            &mut make_env,
            budget.n_rollouts,
        );
        env_name.clone_from(&report.env);
        rows.push(AblationRow {
            axis,
            value,
            mean: report.mean,
            std: report.std,
        });
    }
    Ok(AblationTable {
        env: env_name,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_cardinalities() {
        let base = PtConfig::default();
        assert_eq!(AblationAxis::Sampling.variants(&base).len(), 4);
        assert_eq!(AblationAxis::PlanRelativity.variants(&base).len(), 2);
        assert_eq!(AblationAxis::GoalRepresentation.variants(&base).len(), 4);
        assert_eq!(AblationAxis::ActionsInPlan.variants(&base).len(), 2);
    }

    #[test]
    fn actions_in_plan_variant_changes_feature_dim() {
        let base = PtConfig::default();
        let variants = AblationAxis::ActionsInPlan.variants(&base);
        let with: &PtConfig = &variants[0].1;
        let without: &PtConfig = &variants[1].1;
        assert_eq!(
            with.plan_feature_dim(),
            without.plan_feature_dim() + base.action_dim
        );
    }
}
