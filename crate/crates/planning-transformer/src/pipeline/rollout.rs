//! Two-stage inference: generate a plan by querying the planning head once
//! per slot, then act from the action head, regenerating the plan every
//! `replan_interval` steps with the current state as the new anchor (the
//! recent-triple window resets at each replan so the plan anchor is always
//! the window's first state).
//!
//! Rollouts run as a batch of independent environments stepped in lockstep;
//! per-sample results are identical to running each environment alone, so a
//! single rollout is just a batch of one.

use crate::config::PtConfig;
use crate::data::DatasetStats;
use crate::envs::{normalized_score, Environment, EpisodeResult};
use crate::model::{forward_batch, AttentionCapture, ModelParams};
use crate::plan::{Plan, PlanFeatureSpec};
use crate::sequence::{build_goal_tokens, build_inference_sequence, InferenceHistory, Layout};
use crate::tensor::graph::Mode;
use crate::tensor::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanRecord {
    pub step: usize,
    /// Stored in absolute environment coordinates for visualization.
    pub plan: Plan,
}

/// One evaluation episode: visited states, executed actions, rewards, every
/// generated plan, and attention snapshots taken at each replan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub env_name: String,
    pub seed: u64,
    /// Visited states including the final one (`len = steps + 1`).
    pub states: Vec<Vec<Float>>,
    pub actions: Vec<Vec<Float>>,
    pub rewards: Vec<Float>,
    pub plans: Vec<PlanRecord>,
    pub attention: Vec<(usize, AttentionCapture)>,
    pub normalized_score: f64,
    pub success: bool,
    pub plan_spec: PlanFeatureSpec,
    /// Token layout of the sequences this rollout was driven by, so
    /// captures can be labeled without the original config.
    pub layout: Layout,
}

impl RolloutRecord {
    pub fn total_return(&self) -> f64 {
        self.rewards.iter().map(|&r| r as f64).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("rollout record serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Converts relative plan rows (normalized space) into an absolute plan in
/// raw environment coordinates: state features are de-anchored and
/// de-normalized, the return-to-go column is rescaled, actions pass through.
pub fn plan_to_env_coords(
    rows: &[Vec<Float>],
    anchor_norm: &[Float],
    stats: &DatasetStats,
    spec: &PlanFeatureSpec,
    relative: bool,
) -> Plan {
    let std = stats.std_at(&spec.state_indices);
    let mean = stats.mean_at(&spec.state_indices);
    let tokens: Vec<Vec<Float>> = rows
        .iter()
        .map(|row| {
            let mut out = row.clone();
            for (col, &si) in spec.state_indices.iter().enumerate() {
                let norm = if relative { row[col] + anchor_norm[si] } else { row[col] };
                out[col] = norm * std[col] + mean[col];
            }
            if spec.include_rtg {
                let last = out.len() - 1;
                out[last] = row[row.len() - 1] * stats.return_scale as Float;
            }
            out
        })
        .collect();
    let n = tokens.len();
    Plan {
        tokens,
        source_indices: (0..n).collect(),
        anchor_state: stats.denormalize_state(anchor_norm),
        is_relative: false,
    }
}

struct EnvState {
    raw_state: Vec<Float>,
    norm_state: Vec<Float>,
    rtg: Float,
    window: InferenceHistory,
    goal_token: Option<Vec<Float>>,
    goal_norm: Option<Vec<Float>>,
    plan_rows: Vec<Vec<Float>>,
    rng: ChaCha8Rng,
    active: bool,
}

/// Rolls out a batch of environments in lockstep. Results per environment
/// are independent of the batch composition.
pub fn rollout_batch(
    model: &ModelParams,
    cfg: &PtConfig,
    stats: &DatasetStats,
    mut envs: Vec<Box<dyn Environment>>,
    seeds: &[u64],
    capture_attention: bool,
) -> Vec<RolloutRecord> {
    assert!(!envs.is_empty(), "no environments to roll out");
    assert_eq!(envs.len(), seeds.len(), "one seed per environment");
    let spec = envs[0].spec().clone();
    assert_eq!(spec.state_dim, cfg.state_dim, "env/config state dim skew");
    assert_eq!(spec.action_dim, cfg.action_dim, "env/config action dim skew");
    let layout = Layout::of(cfg);
    let scale = stats.return_scale as Float;
    let half_range = spec.action_half_range();
    let noise = (cfg.action_noise_scale > 0.0).then(|| Normal::new(0.0, 1.0).unwrap());

    let mut records: Vec<RolloutRecord> = Vec::with_capacity(envs.len());
    let mut st: Vec<EnvState> = Vec::with_capacity(envs.len());
    for (i, env) in envs.iter_mut().enumerate() {
        let raw = env.reset(seeds[i]);
        let norm = stats.normalize_state(&raw);
        let goal_norm = env.goal().map(|g| stats.normalize_goal(&g, &spec.goal_indices));
        assert_eq!(
            goal_norm.is_some(),
            cfg.n_goal_tokens() == 1,
            "goal-conditioned config needs an environment goal"
        );
        records.push(RolloutRecord {
            env_name: spec.name.clone(),
            seed: seeds[i],
            states: vec![raw.clone()],
            actions: vec![],
            rewards: vec![],
            plans: vec![],
            attention: vec![],
            normalized_score: 0.0,
            success: false,
            plan_spec: cfg.plan.clone(),
            layout,
        });
        st.push(EnvState {
            raw_state: raw,
            norm_state: norm,
            rtg: cfg.target_return as Float / scale,
            window: InferenceHistory {
                t0: 0,
                rtg: vec![],
                states: vec![],
                actions: vec![],
            },
            goal_token: None,
            goal_norm,
            plan_rows: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seeds[i] ^ NOISE_STREAM),
            active: true,
        });
    }

    for t in 0..spec.horizon {
        let act: Vec<usize> = (0..st.len()).filter(|&i| st[i].active).collect();
        if act.is_empty() {
            break;
        }

        if t % cfg.replan_interval == 0 {
            // Reset the recent-triple window so the plan anchor is the
            // window's first state, then fill the plan slot by slot.
            for &i in &act {
                let s = &mut st[i];
                s.window = InferenceHistory {
                    t0: t,
                    rtg: vec![s.rtg],
                    states: vec![s.norm_state.clone()],
                    actions: vec![],
                };
                s.goal_token = s.goal_norm.as_ref().map(|g| {
                    build_goal_tokens(cfg.goal_mode, &s.norm_state, g, &cfg.goal_indices)
                        .expect("goal mode is conditioned")
                });
                s.plan_rows.clear();
            }
            if cfg.n_plan_tokens > 0 {
                for slot in 0..cfg.n_plan_tokens {
                    let seqs: Vec<_> = act
                        .iter()
                        .map(|&i| {
                            build_inference_sequence(
                                &st[i].window,
                                &st[i].plan_rows,
                                st[i].goal_token.clone(),
                                cfg,
                            )
                        })
                        .collect();
                    let fw = forward_batch(&seqs, model, cfg, Mode::Eval, 0);
                    for (b, &i) in act.iter().enumerate() {
                        let row = fw.plan_row(b, layout.plan_target_pos(slot)).to_vec();
                        st[i].plan_rows.push(row);
                    }
                }
                for &i in &act {
                    let plan = plan_to_env_coords(
                        &st[i].plan_rows,
                        &st[i].window.states[0],
                        stats,
                        &cfg.plan,
                        cfg.relative_plans,
                    );
                    records[i].plans.push(PlanRecord { step: t, plan });
                }
            }
        }

        let seqs: Vec<_> = act
            .iter()
            .map(|&i| {
                build_inference_sequence(
                    &st[i].window,
                    &st[i].plan_rows,
                    st[i].goal_token.clone(),
                    cfg,
                )
            })
            .collect();
        let fw = forward_batch(&seqs, model, cfg, Mode::Eval, 0);
        if capture_attention && t % cfg.replan_interval == 0 {
            for (b, &i) in act.iter().enumerate() {
                records[i].attention.push((t, fw.capture_attention(b)));
            }
        }

        for (b, &i) in act.iter().enumerate() {
            let cur = st[i].window.states.len() - 1;
            let mut action = fw.action_row(b, layout.state_pos(cur)).to_vec();
            if let Some(noise) = &noise {
                for (d, a) in action.iter_mut().enumerate() {
                    let sigma = cfg.action_noise_scale as Float * half_range[d];
                    *a += sigma * noise.sample(&mut st[i].rng) as Float;
                }
            }
            for (d, a) in action.iter_mut().enumerate() {
                *a = a.clamp(spec.action_low[d], spec.action_high[d]);
            }

            let step = envs[i].step(&action);
            let s = &mut st[i];
            s.rtg -= step.reward / scale;
            s.raw_state = step.state.clone();
            s.norm_state = stats.normalize_state(&step.state);
            s.window.actions.push(action.clone());
            s.window.states.push(s.norm_state.clone());
            s.window.rtg.push(s.rtg);

            let rec = &mut records[i];
            rec.actions.push(action);
            rec.rewards.push(step.reward);
            rec.states.push(step.state);
            if step.done {
                s.active = false;
                rec.success = envs[i].succeeded();
                rec.normalized_score = normalized_score(
                    envs[i].spec(),
                    EpisodeResult {
                        total_return: rec.total_return(),
                        success: rec.success,
                    },
                );
            }
        }
    }

    // Episodes that hit the loop bound without a done flag score as-is.
    for (i, rec) in records.iter_mut().enumerate() {
        if st[i].active {
            rec.success = envs[i].succeeded();
            rec.normalized_score = normalized_score(
                envs[i].spec(),
                EpisodeResult {
                    total_return: rec.total_return(),
                    success: rec.success,
                },
            );
        }
    }
    records
}

// Keeps the action-noise stream independent of the environment seed.
const NOISE_STREAM: u64 = 0x5eed_0fa0;

/// Single-episode rollout; a batch of one.
pub fn rollout(
    model: &ModelParams,
    cfg: &PtConfig,
    stats: &DatasetStats,
    env: Box<dyn Environment>,
    seed: u64,
    capture_attention: bool,
) -> RolloutRecord {
    rollout_batch(model, cfg, stats, vec![env], &[seed], capture_attention)
        .pop()
        .unwrap()
}

/// Generates one plan (relative, normalized space) by querying the planning
/// head `n` times: iteration `i` reads the output at the i-th plan-target
/// position and writes it into slot `i`.
pub fn generate_plan(
    model: &ModelParams,
    cfg: &PtConfig,
    s0_norm: &[Float],
    rtg0: Float,
    goal_token: Option<Vec<Float>>,
) -> Plan {
    let layout = Layout::of(cfg);
    let window = InferenceHistory {
        t0: 0,
        rtg: vec![rtg0],
        states: vec![s0_norm.to_vec()],
        actions: vec![],
    };
    let mut rows: Vec<Vec<Float>> = Vec::with_capacity(cfg.n_plan_tokens);
    for slot in 0..cfg.n_plan_tokens {
        let seq = build_inference_sequence(&window, &rows, goal_token.clone(), cfg);
        let fw = forward_batch(std::slice::from_ref(&seq), model, cfg, Mode::Eval, 0);
        rows.push(fw.plan_row(0, layout.plan_target_pos(slot)).to_vec());
    }
    Plan {
        tokens: rows,
        source_indices: (0..cfg.n_plan_tokens).collect(),
        anchor_state: s0_norm.to_vec(),
        is_relative: cfg.relative_plans,
    }
}
