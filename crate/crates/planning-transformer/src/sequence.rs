//! Token sequence assembly.
//!
//! Both training and inference sequences share one layout:
//!
//! ```text
//! [goal]  r_0 s_0  p_0 .. p_{n-1}  a_0  r_1 s_1 a_1 ... r_{K-1} s_{K-1} a_{K-1}
//! ```
//!
//! The plan slots sit between the first state and the first action; every
//! later timestep contributes a plain (return-to-go, state, action) triple.
//! Sequences are always laid out at full capacity; timesteps beyond the
//! available window are zero-featured padding tokens that carry no attention
//! weight and no prediction targets. Keeping the training and inference
//! constructors on the same layout function is the main guard against
//! train/test skew.

use crate::config::PtConfig;
use crate::plan::Plan;
use crate::tensor::Float;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Goal,
    Rtg,
    State,
    Plan,
    Action,
}

impl Modality {
    /// Row index into the modality-type embedding table.
    pub fn type_index(self) -> usize {
        match self {
            Modality::Goal => 0,
            Modality::Rtg => 1,
            Modality::State => 2,
            Modality::Plan => 3,
            Modality::Action => 4,
        }
    }

    pub const COUNT: usize = 5;
}

/// How the goal token is encoded, if at all. `proj(s0)` is the first state
/// restricted to the goal indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalMode {
    /// Goal-conditioning disabled (0-length goal vector, no token).
    NoGoal,
    /// Token is the goal itself.
    Absolute,
    /// Token is `g - proj(s0)`.
    Relative,
    /// Token is `concat(proj(s0), g)`.
    ProjAbsolute,
    /// Token is `concat(proj(s0), g - proj(s0))`.
    ProjRelative,
}

impl GoalMode {
    pub const CONDITIONED: [GoalMode; 4] = [
        GoalMode::Absolute,
        GoalMode::Relative,
        GoalMode::ProjAbsolute,
        GoalMode::ProjRelative,
    ];
}

impl std::fmt::Display for GoalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            GoalMode::NoGoal => "no_goal",
            GoalMode::Absolute => "absolute",
            GoalMode::Relative => "relative",
            GoalMode::ProjAbsolute => "proj_absolute",
            GoalMode::ProjRelative => "proj_relative",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub modality: Modality,
    pub features: Vec<Float>,
    /// Absolute trajectory timestep, used by the optional timestep
    /// embedding. Goal and plan tokens share the window's first timestep.
    pub timestep: usize,
    /// Padding tokens are masked out of attention and carry no targets.
    pub pad: bool,
}

/// Position arithmetic for one (goal count, plan count, context) choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub n_goal_tokens: usize,
    pub n_plan_tokens: usize,
    pub context_len: usize,
}

impl Layout {
    pub fn of(cfg: &PtConfig) -> Self {
        Self {
            n_goal_tokens: cfg.n_goal_tokens(),
            n_plan_tokens: cfg.n_plan_tokens,
            context_len: cfg.context_len,
        }
    }

    pub fn len(&self) -> usize {
        self.n_goal_tokens + self.n_plan_tokens + 3 * self.context_len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rtg_pos(&self, t: usize) -> usize {
        if t == 0 {
            self.n_goal_tokens
        } else {
            self.n_goal_tokens + self.n_plan_tokens + 3 * t
        }
    }

    pub fn state_pos(&self, t: usize) -> usize {
        self.rtg_pos(t) + 1
    }

    pub fn action_pos(&self, t: usize) -> usize {
        if t == 0 {
            self.n_goal_tokens + 2 + self.n_plan_tokens
        } else {
            self.rtg_pos(t) + 2
        }
    }

    pub fn plan_slot_pos(&self, i: usize) -> usize {
        debug_assert!(i < self.n_plan_tokens);
        self.n_goal_tokens + 2 + i
    }

    /// Position whose planning-head output predicts plan row `i`: the first
    /// state predicts row 0, slot i-1 predicts row i.
    pub fn plan_target_pos(&self, i: usize) -> usize {
        if i == 0 {
            self.state_pos(0)
        } else {
            self.plan_slot_pos(i - 1)
        }
    }

    /// Modality tag per position.
    pub fn tags(&self) -> Vec<Modality> {
        let mut tags = Vec::with_capacity(self.len());
        for _ in 0..self.n_goal_tokens {
            tags.push(Modality::Goal);
        }
        tags.push(Modality::Rtg);
        tags.push(Modality::State);
        for _ in 0..self.n_plan_tokens {
            tags.push(Modality::Plan);
        }
        tags.push(Modality::Action);
        for _ in 1..self.context_len {
            tags.push(Modality::Rtg);
            tags.push(Modality::State);
            tags.push(Modality::Action);
        }
        tags
    }
}

/// The interleaved, modality-tagged model input plus per-position targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub layout: Layout,
    pub tokens: Vec<Token>,
    /// Per position: the action the action head should predict there.
    pub action_targets: Vec<Option<Vec<Float>>>,
    /// Per position: the plan row the planning head should predict there.
    pub plan_targets: Vec<Option<Vec<Float>>>,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tags(&self) -> Vec<Modality> {
        self.tokens.iter().map(|t| t.modality).collect()
    }

    pub fn pad_mask(&self) -> Vec<bool> {
        self.tokens.iter().map(|t| t.pad).collect()
    }

    /// True when pad tokens form a (possibly empty) suffix.
    pub fn padding_is_suffix(&self) -> bool {
        let first_pad = self.tokens.iter().position(|t| t.pad);
        match first_pad {
            None => true,
            Some(p) => self.tokens[p..].iter().all(|t| t.pad),
        }
    }

    pub fn n_action_targets(&self) -> usize {
        self.action_targets.iter().flatten().count()
    }

    pub fn n_plan_targets(&self) -> usize {
        self.plan_targets.iter().flatten().count()
    }
}

/// Encodes the goal token for a window starting at `s0`, or `None` when
/// goal-conditioning is disabled.
pub fn build_goal_tokens(
    mode: GoalMode,
    s0: &[Float],
    goal: &[Float],
    goal_indices: &[usize],
) -> Option<Vec<Float>> {
    if mode == GoalMode::NoGoal {
        return None;
    }
    assert_eq!(
        goal.len(),
        goal_indices.len(),
        "goal vector has {} dims, expected {}",
        goal.len(),
        goal_indices.len()
    );
    let proj: Vec<Float> = goal_indices.iter().map(|&i| s0[i]).collect();
    let relative: Vec<Float> = goal.iter().zip(&proj).map(|(g, p)| g - p).collect();
    Some(match mode {
        GoalMode::NoGoal => unreachable!(),
        GoalMode::Absolute => goal.to_vec(),
        GoalMode::Relative => relative,
        GoalMode::ProjAbsolute => proj.iter().chain(goal).copied().collect(),
        GoalMode::ProjRelative => proj.iter().chain(&relative).copied().collect(),
    })
}

/// One training window: `w <= K` consecutive timesteps starting at `t0`,
/// already normalized/scaled by the caller.
#[derive(Debug, Clone)]
pub struct TrainingWindow {
    pub t0: usize,
    /// Scaled returns-to-go, one per window timestep.
    pub rtg: Vec<Float>,
    pub states: Vec<Vec<Float>>,
    pub actions: Vec<Vec<Float>>,
}

/// Rollout history since the last replan: the current timestep has a
/// return-to-go and state but no action yet.
#[derive(Debug, Clone)]
pub struct InferenceHistory {
    pub t0: usize,
    /// One per timestep including the current one (length j+1).
    pub rtg: Vec<Float>,
    /// One per timestep including the current one (length j+1).
    pub states: Vec<Vec<Float>>,
    /// Completed actions only (length j).
    pub actions: Vec<Vec<Float>>,
}

fn zero_token(modality: Modality, dim: usize, timestep: usize) -> Token {
    Token {
        modality,
        features: vec![0.0; dim],
        timestep,
        pad: true,
    }
}

fn real_token(modality: Modality, features: Vec<Float>, timestep: usize) -> Token {
    Token {
        modality,
        features,
        timestep,
        pad: false,
    }
}

fn cap_timestep(cfg: &PtConfig, t: usize) -> usize {
    t.min(cfg.max_timesteps.saturating_sub(1))
}

/// Lays out goal, plan-slot, and triple tokens at full capacity.
///
/// `steps[t]` supplies `(rtg, state, action)` for in-window timesteps; a
/// `None` action means the slot exists but is masked (the not-yet-taken
/// action of the current inference step). Timesteps beyond `steps.len()`
/// become padding.
#[allow(clippy::type_complexity)]
fn assemble(
    cfg: &PtConfig,
    t0: usize,
    goal: Option<Vec<Float>>,
    plan_rows: &[Vec<Float>],
    steps: &[(Float, &[Float], Option<&[Float]>)],
) -> Vec<Token> {
    let layout = Layout::of(cfg);
    assert_eq!(goal.is_some(), cfg.n_goal_tokens() == 1, "goal/config skew");
    assert!(!steps.is_empty(), "empty window");
    assert!(steps.len() <= cfg.context_len, "window exceeds context_len");
    assert_eq!(plan_rows.len(), cfg.n_plan_tokens, "plan rows vs n_plan_tokens");

    let plan_dim = cfg.plan_feature_dim();
    let ts0 = cap_timestep(cfg, t0);
    let mut tokens = Vec::with_capacity(layout.len());
    if let Some(g) = goal {
        assert_eq!(g.len(), cfg.goal_token_dim(), "goal token width");
        tokens.push(real_token(Modality::Goal, g, ts0));
    }
    for t in 0..cfg.context_len {
        if t == 0 {
            let (r, s, a) = &steps[0];
            tokens.push(real_token(Modality::Rtg, vec![*r], ts0));
            tokens.push(real_token(Modality::State, s.to_vec(), ts0));
            for row in plan_rows {
                assert_eq!(row.len(), plan_dim, "plan feature width");
                tokens.push(real_token(Modality::Plan, row.clone(), ts0));
            }
            match a {
                Some(a) => tokens.push(real_token(Modality::Action, a.to_vec(), ts0)),
                None => tokens.push(zero_token(Modality::Action, cfg.action_dim, ts0)),
            }
        } else if t < steps.len() {
            let ts = cap_timestep(cfg, t0 + t);
            let (r, s, a) = &steps[t];
            tokens.push(real_token(Modality::Rtg, vec![*r], ts));
            tokens.push(real_token(Modality::State, s.to_vec(), ts));
            match a {
                Some(a) => tokens.push(real_token(Modality::Action, a.to_vec(), ts)),
                None => tokens.push(zero_token(Modality::Action, cfg.action_dim, ts)),
            }
        } else {
            let ts = cap_timestep(cfg, t0 + t);
            tokens.push(zero_token(Modality::Rtg, 1, ts));
            tokens.push(zero_token(Modality::State, cfg.state_dim, ts));
            tokens.push(zero_token(Modality::Action, cfg.action_dim, ts));
        }
    }
    debug_assert_eq!(tokens.len(), layout.len());
    tokens
}

/// Builds the training sequence for one window with its freshly sampled
/// plan and prediction targets attached.
pub fn build_training_sequence(
    window: &TrainingWindow,
    plan: &Plan,
    goal: Option<Vec<Float>>,
    cfg: &PtConfig,
) -> TokenSequence {
    let w = window.states.len();
    assert!(w >= 1, "empty window");
    assert_eq!(window.rtg.len(), w, "window rtg length");
    assert_eq!(window.actions.len(), w, "window action length");
    assert_eq!(plan.len(), cfg.n_plan_tokens, "plan length vs config");
    if cfg.n_plan_tokens > 0 {
        assert_eq!(
            plan.is_relative, cfg.relative_plans,
            "plan relativity does not match config"
        );
    }

    let steps: Vec<(Float, &[Float], Option<&[Float]>)> = (0..w)
        .map(|t| {
            (
                window.rtg[t],
                window.states[t].as_slice(),
                Some(window.actions[t].as_slice()),
            )
        })
        .collect();
    let tokens = assemble(cfg, window.t0, goal, &plan.tokens, &steps);
    let layout = Layout::of(cfg);

    let mut action_targets: Vec<Option<Vec<Float>>> = vec![None; layout.len()];
    for (t, action) in window.actions.iter().enumerate() {
        action_targets[layout.state_pos(t)] = Some(action.clone());
    }
    let mut plan_targets: Vec<Option<Vec<Float>>> = vec![None; layout.len()];
    for i in 0..cfg.n_plan_tokens {
        plan_targets[layout.plan_target_pos(i)] = Some(plan.tokens[i].clone());
    }

    TokenSequence {
        layout,
        tokens,
        action_targets,
        plan_targets,
    }
}

/// Builds the inference sequence: recent history plus a plan whose slots
/// `0..filled_plan_rows.len()` are filled and the rest are zero. The current
/// timestep's action slot exists but is masked; no targets are attached.
pub fn build_inference_sequence(
    history: &InferenceHistory,
    filled_plan_rows: &[Vec<Float>],
    goal: Option<Vec<Float>>,
    cfg: &PtConfig,
) -> TokenSequence {
    let cur = history.states.len();
    assert!(cur >= 1, "history must include the current timestep");
    assert_eq!(history.rtg.len(), cur, "history rtg length");
    assert_eq!(history.actions.len(), cur - 1, "history action count");
    assert!(cur <= cfg.context_len, "history exceeds context_len");
    assert!(filled_plan_rows.len() <= cfg.n_plan_tokens, "too many plan rows");

    let plan_dim = cfg.plan_feature_dim();
    let mut plan_rows: Vec<Vec<Float>> = filled_plan_rows.to_vec();
    plan_rows.resize(cfg.n_plan_tokens, vec![0.0; plan_dim]);

    let steps: Vec<(Float, &[Float], Option<&[Float]>)> = (0..cur)
        .map(|t| {
            let action = history.actions.get(t).map(Vec::as_slice);
            (history.rtg[t], history.states[t].as_slice(), action)
        })
        .collect();
    let tokens = assemble(cfg, history.t0, goal, &plan_rows, &steps);
    let layout = Layout::of(cfg);
    TokenSequence {
        layout,
        tokens,
        action_targets: vec![None; layout.len()],
        plan_targets: vec![None; layout.len()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_cfg(context_len: usize, n_plan: usize, goal_mode: GoalMode) -> PtConfig {
        PtConfig {
            context_len,
            n_plan_tokens: n_plan,
            replan_interval: 1,
            goal_mode,
            goal_indices: if goal_mode == GoalMode::NoGoal {
                vec![]
            } else {
                vec![0, 1]
            },
            beta: if n_plan == 0 { 0.0 } else { 0.5 },
            ..Default::default()
        }
    }

    fn toy_plan(n: usize, dim: usize) -> Plan {
        Plan {
            tokens: (0..n).map(|i| vec![i as Float; dim]).collect(),
            source_indices: (0..n).collect(),
            anchor_state: vec![0.0, 0.0],
            is_relative: true,
        }
    }

    fn toy_window(cfg: &PtConfig, w: usize) -> TrainingWindow {
        TrainingWindow {
            t0: 0,
            rtg: vec![1.0; w],
            states: (0..w).map(|t| vec![t as Float, 0.0]).collect(),
            actions: (0..w).map(|t| vec![0.1 * t as Float; cfg.action_dim]).collect(),
        }
    }

    #[test]
    fn smallest_case_layout() {
        let cfg = toy_cfg(1, 1, GoalMode::NoGoal);
        let plan = toy_plan(1, cfg.plan_feature_dim());
        let seq = build_training_sequence(&toy_window(&cfg, 1), &plan, None, &cfg);
        assert_eq!(seq.len(), 4);
        assert_eq!(
            seq.tags(),
            vec![Modality::Rtg, Modality::State, Modality::Plan, Modality::Action]
        );
    }

    #[test]
    fn length_formula_with_goal() {
        let cfg = toy_cfg(2, 10, GoalMode::ProjAbsolute);
        let plan = toy_plan(10, cfg.plan_feature_dim());
        let goal = Some(vec![0.0; cfg.goal_token_dim()]);
        let seq = build_training_sequence(&toy_window(&cfg, 2), &plan, goal, &cfg);
        assert_eq!(seq.len(), 1 + 10 + 6);
    }

    #[test]
    fn no_goal_starts_at_rtg() {
        let cfg = toy_cfg(3, 2, GoalMode::NoGoal);
        let plan = toy_plan(2, cfg.plan_feature_dim());
        let seq = build_training_sequence(&toy_window(&cfg, 3), &plan, None, &cfg);
        assert_eq!(seq.tokens[0].modality, Modality::Rtg);
    }

    #[test]
    fn goal_token_modes() {
        let s0 = [0.1, 0.2, 0.5];
        let g = [3.0, 4.0];
        let gi = [0usize, 1];
        assert_eq!(
            build_goal_tokens(GoalMode::ProjAbsolute, &s0, &g, &gi).unwrap(),
            vec![0.1, 0.2, 3.0, 4.0]
        );
        assert_eq!(
            build_goal_tokens(GoalMode::Absolute, &s0, &g, &gi).unwrap(),
            vec![3.0, 4.0]
        );
        let rel = build_goal_tokens(GoalMode::Relative, &s0, &[0.1, 0.2], &gi).unwrap();
        assert!(rel.iter().all(|v| v.abs() < 1e-7));
        assert!(build_goal_tokens(GoalMode::NoGoal, &s0, &[], &[]).is_none());
    }

    #[test]
    fn padded_tail_has_pad_flags_and_no_targets() {
        let cfg = toy_cfg(4, 2, GoalMode::NoGoal);
        let plan = toy_plan(2, cfg.plan_feature_dim());
        let seq = build_training_sequence(&toy_window(&cfg, 2), &plan, None, &cfg);
        assert!(seq.padding_is_suffix());
        let first_pad = seq.tokens.iter().position(|t| t.pad).unwrap();
        for (p, tok) in seq.tokens.iter().enumerate().skip(first_pad) {
            assert!(tok.pad);
            assert!(seq.action_targets[p].is_none());
            assert!(seq.plan_targets[p].is_none());
            assert!(tok.features.iter().all(|&v| v == 0.0));
        }
        assert_eq!(seq.n_action_targets(), 2);
    }

    #[test]
    fn plan_target_count_is_n() {
        for n in [1usize, 3, 10] {
            let cfg = toy_cfg(2, n, GoalMode::NoGoal);
            let plan = toy_plan(n, cfg.plan_feature_dim());
            let seq = build_training_sequence(&toy_window(&cfg, 2), &plan, None, &cfg);
            assert_eq!(seq.n_plan_targets(), n);
            // First state predicts row 0; the last plan slot predicts nothing.
            assert!(seq.plan_targets[seq.layout.state_pos(0)].is_some());
            assert!(seq.plan_targets[seq.layout.plan_slot_pos(n - 1)].is_none());
        }
    }

    #[test]
    fn inference_layout_matches_training_layout() {
        let cfg = toy_cfg(5, 4, GoalMode::ProjAbsolute);
        let plan = toy_plan(4, cfg.plan_feature_dim());
        let goal = Some(vec![0.0; cfg.goal_token_dim()]);
        let train = build_training_sequence(&toy_window(&cfg, 3), &plan, goal.clone(), &cfg);

        let hist = InferenceHistory {
            t0: 0,
            rtg: vec![1.0, 0.9, 0.8],
            states: vec![vec![0.0, 0.0], vec![0.1, 0.0], vec![0.2, 0.0]],
            actions: vec![vec![0.1, 0.0], vec![0.1, 0.0]],
        };
        let inf = build_inference_sequence(&hist, &plan.tokens, goal, &cfg);
        assert_eq!(train.tags(), inf.tags());
        assert_eq!(train.len(), inf.len());
        // The current (not yet taken) action slot is masked at inference.
        assert!(inf.tokens[inf.layout.action_pos(2)].pad);
        assert!(!train.tokens[train.layout.action_pos(2)].pad);
        assert!(inf.padding_is_suffix());
    }

    #[test]
    fn fresh_episode_has_zero_plan_slots() {
        let cfg = toy_cfg(3, 4, GoalMode::NoGoal);
        let hist = InferenceHistory {
            t0: 0,
            rtg: vec![1.0],
            states: vec![vec![0.5, 0.5]],
            actions: vec![],
        };
        let seq = build_inference_sequence(&hist, &[], None, &cfg);
        for i in 0..4 {
            let tok = &seq.tokens[seq.layout.plan_slot_pos(i)];
            assert_eq!(tok.modality, Modality::Plan);
            assert!(!tok.pad, "plan slots are attended even when zero");
            assert!(tok.features.iter().all(|&v| v == 0.0));
        }
        assert!(!seq.tokens[seq.layout.rtg_pos(0)].pad);
        assert!(!seq.tokens[seq.layout.state_pos(0)].pad);
        assert!(seq.tokens[seq.layout.action_pos(0)].pad);
    }

    #[test]
    #[should_panic(expected = "empty window")]
    fn empty_window_is_a_contract_violation() {
        let cfg = toy_cfg(2, 1, GoalMode::NoGoal);
        let plan = toy_plan(1, cfg.plan_feature_dim());
        let window = TrainingWindow {
            t0: 0,
            rtg: vec![],
            states: vec![],
            actions: vec![],
        };
        build_training_sequence(&window, &plan, None, &cfg);
    }

    #[test]
    fn baseline_without_plans_reduces_to_triples() {
        let mut cfg = toy_cfg(2, 0, GoalMode::ProjAbsolute);
        cfg.beta = 0.0;
        let plan = Plan {
            tokens: vec![],
            source_indices: vec![],
            anchor_state: vec![],
            is_relative: true,
        };
        let goal = Some(vec![0.0; cfg.goal_token_dim()]);
        let seq = build_training_sequence(&toy_window(&cfg, 2), &plan, goal, &cfg);
        assert_eq!(
            seq.tags(),
            vec![
                Modality::Goal,
                Modality::Rtg,
                Modality::State,
                Modality::Action,
                Modality::Rtg,
                Modality::State,
                Modality::Action
            ]
        );
        assert_eq!(seq.n_plan_targets(), 0);
    }
}
