//! Plan construction: selecting sparse future timesteps from a trajectory,
//! assembling their features into planning tokens, and switching between
//! absolute and anchor-relative coordinates.

use crate::tensor::Float;
use serde::{Deserialize, Serialize};

/// Which features each planning token carries.
///
/// A token row is `[state[state_indices...], action?, rtg?]` in that order,
/// so `feature_dim = |state_indices| + action_dim? + 1?`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanFeatureSpec {
    /// Strictly increasing subset of state dimensions (may be all of them).
    pub state_indices: Vec<usize>,
    pub include_actions: bool,
    pub include_rtg: bool,
}

impl PlanFeatureSpec {
    pub fn states_only(state_indices: Vec<usize>) -> Self {
        Self {
            state_indices,
            include_actions: false,
            include_rtg: false,
        }
    }

    pub fn feature_dim(&self, action_dim: usize) -> usize {
        self.state_indices.len()
            + if self.include_actions { action_dim } else { 0 }
            + usize::from(self.include_rtg)
    }

    pub fn validate(&self, state_dim: usize) -> Result<(), String> {
        if self.state_indices.is_empty() {
            return Err("plan state_indices must be non-empty".into());
        }
        if !self.state_indices.windows(2).all(|w| w[0] < w[1]) {
            return Err("plan state_indices must be strictly increasing".into());
        }
        if *self.state_indices.last().unwrap() >= state_dim {
            return Err(format!(
                "plan state index {} out of range for state_dim {}",
                self.state_indices.last().unwrap(),
                state_dim
            ));
        }
        Ok(())
    }
}

/// How the future timesteps of a plan are spread over the trajectory tail.
///
/// Fixed spacing samples at equal gaps of timesteps or travelled distance;
/// logarithmic spacing is dense early and sparse late.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMethod {
    FixedTime,
    FixedDistance,
    LogTime,
    LogDistance,
}

impl SamplingMethod {
    pub const ALL: [SamplingMethod; 4] = [
        SamplingMethod::FixedTime,
        SamplingMethod::FixedDistance,
        SamplingMethod::LogTime,
        SamplingMethod::LogDistance,
    ];

    pub fn is_distance_based(self) -> bool {
        matches!(self, SamplingMethod::FixedDistance | SamplingMethod::LogDistance)
    }

    /// Target fraction of the horizon (or of total arc length) for token
    /// k of n, k in 1..=n. Fixed: k/n. Log: (2^k - 1)/(2^n - 1).
    pub fn fraction(self, k: usize, n: usize) -> f64 {
        match self {
            SamplingMethod::FixedTime | SamplingMethod::FixedDistance => k as f64 / n as f64,
            SamplingMethod::LogTime | SamplingMethod::LogDistance => {
                ((2f64).powi(k as i32) - 1.0) / ((2f64).powi(n as i32) - 1.0)
            }
        }
    }
}

impl std::fmt::Display for SamplingMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SamplingMethod::FixedTime => "fixed_time",
            SamplingMethod::FixedDistance => "fixed_distance",
            SamplingMethod::LogTime => "log_time",
            SamplingMethod::LogDistance => "log_distance",
        };
        f.write_str(s)
    }
}

/// An ordered sequence of planning tokens sampled from one trajectory tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    /// `n x feature_dim`, row-major.
    pub tokens: Vec<Vec<Float>>,
    /// Trajectory timesteps each token was sampled from (non-decreasing,
    /// last one is the trajectory's final index).
    pub source_indices: Vec<usize>,
    /// Full state vector the plan is (or will be made) relative to.
    pub anchor_state: Vec<Float>,
    pub is_relative: bool,
}

impl Plan {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Feature rows used for distance-based sampling: the plan's state-feature
/// subset at every timestep from the anchor onward.
fn plan_state_features(states: &[Vec<Float>], spec: &PlanFeatureSpec, t: usize) -> Vec<Float> {
    spec.state_indices.iter().map(|&i| states[t][i]).collect()
}

/// Selects the `n` future timesteps a plan is built from.
///
/// Indices lie in `(t0, T-1]`, are non-decreasing, and the last one is
/// always `T-1` so the plan terminates at the trajectory's final state.
/// Time-based methods place token k at `t0 + round(f_k * H)` with
/// `H = T-1-t0`; distance-based methods walk cumulative arc length over the
/// plan's state features and pick the first timestep reaching `f_k` of the
/// total. When `t0` is already the final step there is no future to sample
/// and all `n` indices degenerate to `T-1`.
pub fn sample_plan_indices(
    states: &[Vec<Float>],
    t0: usize,
    n: usize,
    method: SamplingMethod,
    spec: &PlanFeatureSpec,
) -> Vec<usize> {
    let t_len = states.len();
    assert!(t_len >= 1, "empty trajectory");
    assert!(t0 < t_len, "t0 {t0} out of range for length {t_len}");
    assert!(n >= 1, "plan needs at least one token");
    let last = t_len - 1;
    if t0 == last {
        return vec![last; n];
    }
    let horizon = (last - t0) as f64;
    let mut out = Vec::with_capacity(n);
    match method {
        SamplingMethod::FixedTime | SamplingMethod::LogTime => {
            for k in 1..=n {
                let idx = if k == n {
                    last
                } else {
                    let raw = t0 + (method.fraction(k, n) * horizon).round() as usize;
                    raw.clamp(t0 + 1, last)
                };
                out.push(idx);
            }
        }
        SamplingMethod::FixedDistance | SamplingMethod::LogDistance => {
            // Cumulative arc length from the anchor, c[t0] = 0.
            let mut cum = vec![0.0f64; t_len - t0];
            let mut acc = 0.0;
            let mut prev = plan_state_features(states, spec, t0);
            for (off, c) in cum.iter_mut().enumerate().skip(1) {
                let cur = plan_state_features(states, spec, t0 + off);
                let d: f64 = prev
                    .iter()
                    .zip(&cur)
                    .map(|(a, b)| {
                        let d = (*a - *b) as f64;
                        d * d
                    })
                    .sum::<f64>()
                    .sqrt();
                acc += d;
                *c = acc;
                prev = cur;
            }
            let total = cum[t_len - t0 - 1];
            for k in 1..=n {
                let idx = if k == n {
                    last
                } else {
                    let target = method.fraction(k, n) * total;
                    let mut t = t0 + 1;
                    while t < last && cum[t - t0] < target {
                        t += 1;
                    }
                    t
                };
                out.push(idx);
            }
        }
    }
    out
}

/// Assembles an absolute plan: row k is the configured feature slice of the
/// trajectory at `indices[k]`.
pub fn extract_plan(
    states: &[Vec<Float>],
    actions: &[Vec<Float>],
    rtg: &[Float],
    indices: &[usize],
    spec: &PlanFeatureSpec,
) -> Plan {
    let mut tokens = Vec::with_capacity(indices.len());
    for &idx in indices {
        let mut row = plan_state_features(states, spec, idx);
        if spec.include_actions {
            row.extend_from_slice(&actions[idx]);
        }
        if spec.include_rtg {
            row.push(rtg[idx]);
        }
        tokens.push(row);
    }
    Plan {
        tokens,
        source_indices: indices.to_vec(),
        anchor_state: Vec::new(),
        is_relative: false,
    }
}

/// Subtracts the anchor from the state-feature portion of every token;
/// action and return-to-go portions stay absolute. Exact inverse of
/// [`make_absolute`].
pub fn make_relative(mut plan: Plan, anchor: &[Float], spec: &PlanFeatureSpec) -> Plan {
    assert!(
        !plan.is_relative,
        "make_relative applied to an already-relative plan"
    );
    for row in &mut plan.tokens {
        for (col, &si) in spec.state_indices.iter().enumerate() {
            row[col] -= anchor[si];
        }
    }
    plan.anchor_state = anchor.to_vec();
    plan.is_relative = true;
    plan
}

/// Restores absolute coordinates by adding the anchor back.
pub fn make_absolute(mut plan: Plan, anchor: &[Float], spec: &PlanFeatureSpec) -> Plan {
    assert!(
        plan.is_relative,
        "make_absolute applied to an already-absolute plan"
    );
    for row in &mut plan.tokens {
        for (col, &si) in spec.state_indices.iter().enumerate() {
            row[col] += anchor[si];
        }
    }
    plan.anchor_state = anchor.to_vec();
    plan.is_relative = false;
    plan
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_states(t_len: usize) -> Vec<Vec<Float>> {
        // Constant-speed straight line in 2-D.
        (0..t_len).map(|t| vec![t as Float, 0.0]).collect()
    }

    fn spec2() -> PlanFeatureSpec {
        PlanFeatureSpec::states_only(vec![0, 1])
    }

    #[test]
    fn fixed_time_worked_example() {
        let states = line_states(11);
        let idx = sample_plan_indices(&states, 0, 5, SamplingMethod::FixedTime, &spec2());
        assert_eq!(idx, vec![2, 4, 6, 8, 10]);
    }

    #[test]
    fn log_time_worked_example() {
        let states = line_states(8);
        let idx = sample_plan_indices(&states, 0, 3, SamplingMethod::LogTime, &spec2());
        assert_eq!(idx, vec![1, 3, 7]);
    }

    #[test]
    fn fixed_distance_matches_fixed_time_on_uniform_speed() {
        // Horizon divisible by n so both land on exact timesteps.
        let states = line_states(11);
        let a = sample_plan_indices(&states, 0, 5, SamplingMethod::FixedTime, &spec2());
        let b = sample_plan_indices(&states, 0, 5, SamplingMethod::FixedDistance, &spec2());
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_t0_at_end_yields_all_last() {
        let states = line_states(6);
        for m in SamplingMethod::ALL {
            let idx = sample_plan_indices(&states, 5, 4, m, &spec2());
            assert_eq!(idx, vec![5; 4]);
        }
    }

    #[test]
    fn final_index_is_always_last() {
        let states = line_states(23);
        for m in SamplingMethod::ALL {
            for t0 in [0, 5, 21, 22] {
                let idx = sample_plan_indices(&states, t0, 7, m, &spec2());
                assert_eq!(*idx.last().unwrap(), 22, "{m} t0={t0}");
                assert!(idx.windows(2).all(|w| w[0] <= w[1]), "{m} t0={t0}");
            }
        }
    }

    #[test]
    fn stationary_trajectory_distance_sampling_is_defined() {
        let states: Vec<Vec<Float>> = (0..9).map(|_| vec![1.0, 2.0]).collect();
        let idx = sample_plan_indices(&states, 0, 3, SamplingMethod::FixedDistance, &spec2());
        assert_eq!(*idx.last().unwrap(), 8);
        assert!(idx.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn extract_states_only_copies_snapshots() {
        let states = line_states(5);
        let actions: Vec<Vec<Float>> = (0..5).map(|t| vec![t as Float * 0.1]).collect();
        let rtg: Vec<Float> = vec![0.0; 5];
        let plan = extract_plan(&states, &actions, &rtg, &[1, 3, 4], &spec2());
        assert_eq!(plan.tokens[0], vec![1.0, 0.0]);
        assert_eq!(plan.tokens[1], vec![3.0, 0.0]);
        assert_eq!(plan.tokens[2], vec![4.0, 0.0]);
        assert!(!plan.is_relative);
    }

    #[test]
    fn extract_with_rtg_zero_rewards_gives_zero_column() {
        let states = line_states(4);
        let actions: Vec<Vec<Float>> = (0..4).map(|_| vec![0.5]).collect();
        let rtg = vec![0.0; 4];
        let spec = PlanFeatureSpec {
            state_indices: vec![0],
            include_actions: false,
            include_rtg: true,
        };
        let plan = extract_plan(&states, &actions, &rtg, &[1, 3], &spec);
        for row in &plan.tokens {
            assert_eq!(*row.last().unwrap(), 0.0);
        }
    }

    #[test]
    fn extract_with_actions_matches_hand_assembly() {
        let states = vec![vec![0.0, 0.0], vec![1.0, 2.0], vec![3.0, 4.0]];
        let actions = vec![vec![0.1, -0.1], vec![0.2, -0.2], vec![0.3, -0.3]];
        let rtg = vec![3.0, 2.0, 1.0];
        let spec = PlanFeatureSpec {
            state_indices: vec![0, 1],
            include_actions: true,
            include_rtg: true,
        };
        let plan = extract_plan(&states, &actions, &rtg, &[1, 2], &spec);
        assert_eq!(plan.tokens[0], vec![1.0, 2.0, 0.2, -0.2, 2.0]);
        assert_eq!(plan.tokens[1], vec![3.0, 4.0, 0.3, -0.3, 1.0]);
    }

    #[test]
    fn relative_zero_anchor_is_identity() {
        let states = line_states(4);
        let actions: Vec<Vec<Float>> = (0..4).map(|_| vec![0.0]).collect();
        let plan = extract_plan(&states, &actions, &[0.0; 4], &[1, 3], &spec2());
        let before = plan.tokens.clone();
        let rel = make_relative(plan, &[0.0, 0.0], &spec2());
        assert_eq!(rel.tokens, before);
        assert!(rel.is_relative);
    }

    #[test]
    fn relative_subtracts_anchor_on_state_portion_only() {
        let states = vec![vec![3.0, 4.0], vec![5.0, 6.0]];
        let actions = vec![vec![9.0], vec![9.0]];
        let spec = PlanFeatureSpec {
            state_indices: vec![0, 1],
            include_actions: true,
            include_rtg: false,
        };
        let plan = extract_plan(&states, &actions, &[0.0, 0.0], &[0, 1], &spec);
        let rel = make_relative(plan, &[1.0, 1.0], &spec);
        assert_eq!(rel.tokens[0], vec![2.0, 3.0, 9.0]);
        assert_eq!(rel.tokens[1], vec![4.0, 5.0, 9.0]);
    }

    #[test]
    fn relative_absolute_round_trip_is_exact() {
        // Anchor and states whose differences are exactly representable, so
        // the round trip is bitwise (floats cannot promise that for values
        // whose difference must round; see the ulp property below).
        let states = vec![vec![0.25, -1.5], vec![2.0, 3.75], vec![-0.125, 8.0]];
        let actions = vec![vec![0.0], vec![0.0], vec![0.0]];
        let plan = extract_plan(&states, &actions, &[0.0; 3], &[1, 2], &spec2());
        let anchor = [0.5, -0.75];
        let round = make_absolute(make_relative(plan.clone(), &anchor, &spec2()), &anchor, &spec2());
        assert_eq!(round.tokens, plan.tokens);
    }

    #[test]
    fn relative_absolute_round_trip_within_one_ulp_everywhere() {
        let states = vec![vec![0.37, -1.93], vec![2.41, 3.99], vec![-0.11, 7.77]];
        let actions = vec![vec![0.0], vec![0.0], vec![0.0]];
        let plan = extract_plan(&states, &actions, &[0.0; 3], &[1, 2], &spec2());
        let anchor = [0.3, -0.7];
        let round =
            make_absolute(make_relative(plan.clone(), &anchor, &spec2()), &anchor, &spec2());
        for (a, b) in round.tokens.iter().flatten().zip(plan.tokens.iter().flatten()) {
            let ulp = Float::EPSILON * b.abs().max(1.0);
            assert!((a - b).abs() <= ulp, "{a} vs {b}");
        }
    }

    #[test]
    #[should_panic(expected = "already-relative")]
    fn double_relative_is_a_contract_violation() {
        let states = line_states(3);
        let actions: Vec<Vec<Float>> = (0..3).map(|_| vec![0.0]).collect();
        let plan = extract_plan(&states, &actions, &[0.0; 3], &[1, 2], &spec2());
        let rel = make_relative(plan, &[0.0, 0.0], &spec2());
        let _ = make_relative(rel, &[0.0, 0.0], &spec2());
    }

    #[test]
    fn log_time_gaps_are_non_decreasing_with_rounding_slack() {
        let states = line_states(64);
        let idx = sample_plan_indices(&states, 0, 6, SamplingMethod::LogTime, &spec2());
        for w in idx.windows(3) {
            let g1 = w[1] as i64 - w[0] as i64;
            let g2 = w[2] as i64 - w[1] as i64;
            assert!(g2 >= g1 - 1, "gaps {g1} then {g2} in {idx:?}");
        }
    }
}
