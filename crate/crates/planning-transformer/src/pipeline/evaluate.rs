//! Scoring across training seeds: per seed, the mean normalized score over
//! a batch of rollouts; across seeds, mean and standard deviation.

use super::rollout::rollout_batch;
use crate::config::PtConfig;
use crate::data::DatasetStats;
use crate::envs::Environment;
use crate::model::ModelParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub env: String,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub n_rollouts: usize,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("eval report serializes")
    }
}

/// Population standard deviation via Welford's online update.
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &v) in values.iter().enumerate() {
        let n = (i + 1) as f64;
        let delta = v - mean;
        mean += delta / n;
        m2 += delta * (v - mean);
    }
    (mean, (m2 / values.len() as f64).sqrt())
}

/// Evaluates one trained model per training seed with `n_rollouts` episodes
/// each; rollout seeds derive from `(training seed, rollout index)`.
pub fn evaluate<F>(
    models: &[(u64, ModelParams)],
    cfg: &PtConfig,
    stats: &DatasetStats,
    mut make_env: F,
    n_rollouts: usize,
) -> EvalReport
where
    F: FnMut() -> Box<dyn Environment>,
{
    assert!(!models.is_empty(), "no models to evaluate");
    let mut per_seed = Vec::with_capacity(models.len());
    let mut seeds = Vec::with_capacity(models.len());
    let mut env_name = String::new();
    for (train_seed, model) in models {
        let envs: Vec<Box<dyn Environment>> = (0..n_rollouts).map(|_| make_env()).collect();
        env_name = envs[0].spec().name.clone();
        let rollout_seeds: Vec<u64> = (0..n_rollouts)
            .map(|r| train_seed.wrapping_mul(0x1000_0000_1b3).wrapping_add(r as u64))
            .collect();
        let records = rollout_batch(model, cfg, stats, envs, &rollout_seeds, false);
        let mean_score =
            records.iter().map(|r| r.normalized_score).sum::<f64>() / n_rollouts as f64;
        per_seed.push(mean_score);
        seeds.push(*train_seed);
    }
    let (mean, std) = mean_and_std(&per_seed);
    EvalReport {
        env: env_name,
        seeds,
        per_seed,
        mean,
        std,
        n_rollouts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn welford_matches_two_pass_formula() {
        let xs = [82.0, 79.5, 91.25, 64.0, 70.125, 88.8125];
        let (mean, std) = mean_and_std(&xs);
        let m2: f64 = xs.iter().sum::<f64>() / xs.len() as f64;
        let var: f64 = xs.iter().map(|x| (x - m2) * (x - m2)).sum::<f64>() / xs.len() as f64;
        assert!((mean - m2).abs() < 1e-9);
        assert!((std - var.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn constant_scores_give_zero_std() {
        let (mean, std) = mean_and_std(&[100.0, 100.0, 100.0]);
        assert_eq!(mean, 100.0);
        assert_eq!(std, 0.0);
    }
}
