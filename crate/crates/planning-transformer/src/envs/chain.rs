//! Dense-reward velocity control: reward each step equals distance
//! travelled, so the episode return is total displacement. The return
//! target at evaluation controls how fast the learned policy should go.

use super::{EnvSpec, Environment, ScoreKind, Step};
use crate::data::{compute_rtg, DataError, Dataset, Trajectory};
use crate::tensor::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const CHAIN_DT: Float = 0.1;
pub const CHAIN_V_MAX: Float = 1.0;
pub const CHAIN_HORIZON: usize = 100;
/// Matches the roughly-maximum episode return (horizon * dt * v_max).
pub const CHAIN_RETURN_SCALE: f64 = 10.0;

pub struct DenseChain {
    spec: EnvSpec,
    pos: Float,
    vel: Float,
    steps: usize,
    done: bool,
}

impl DenseChain {
    pub fn new() -> Self {
        let (random_return, expert_return) = reference_returns();
        let spec = EnvSpec {
            name: "dense-chain".into(),
            state_dim: 2,
            action_dim: 1,
            goal_indices: vec![],
            horizon: CHAIN_HORIZON,
            action_low: vec![-1.0],
            action_high: vec![1.0],
            score: ScoreKind::Return {
                random_return,
                expert_return,
            },
        };
        Self {
            spec,
            pos: 0.0,
            vel: 0.0,
            steps: 0,
            done: true,
        }
    }

    fn state(&self) -> Vec<Float> {
        vec![self.pos, self.vel]
    }
}

impl Default for DenseChain {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for DenseChain {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<Float> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.pos = rng.gen_range(-0.05..0.05) as Float;
        self.vel = rng.gen_range(-0.05..0.05) as Float;
        self.steps = 0;
        self.done = false;
        self.state()
    }

    fn step(&mut self, action: &[Float]) -> Step {
        assert!(!self.done, "step after episode end");
        let a = action[0].clamp(-1.0, 1.0);
        self.vel = (self.vel + a * CHAIN_DT).clamp(-CHAIN_V_MAX, CHAIN_V_MAX);
        self.pos += self.vel * CHAIN_DT;
        self.steps += 1;
        if self.steps >= self.spec.horizon {
            self.done = true;
        }
        Step {
            state: self.state(),
            reward: self.vel * CHAIN_DT,
            done: self.done,
        }
    }

    fn succeeded(&self) -> bool {
        false
    }

    fn goal(&self) -> Option<Vec<Float>> {
        None
    }
}

/// Reference returns for score normalization, computed once from scripted
/// policies: full throttle for the expert, uniform actions for random.
fn reference_returns() -> (f64, f64) {
    let run = |mut policy: Box<dyn FnMut(&mut ChaCha8Rng) -> Float>| -> f64 {
        let mut pos = 0.0 as Float;
        let mut vel = 0.0 as Float;
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
        let mut total = 0.0f64;
        for _ in 0..CHAIN_HORIZON {
            let a = policy(&mut rng).clamp(-1.0, 1.0);
            vel = (vel + a * CHAIN_DT).clamp(-CHAIN_V_MAX, CHAIN_V_MAX);
            pos += vel * CHAIN_DT;
            total += (vel * CHAIN_DT) as f64;
        }
        let _ = pos;
        total
    };
    let random = run(Box::new(|rng| rng.gen_range(-1.0..1.0) as Float));
    let expert = run(Box::new(|_| 1.0));
    (random, expert)
}

/// Velocity bands as fractions of `v_max`, low to high.
const BANDS: [(f64, f64); 3] = [(0.15, 0.35), (0.45, 0.70), (0.80, 1.00)];

/// Scripted controllers track a per-episode target velocity drawn from one
/// of three quality bands; `quality_mix` gives the band proportions.
pub fn generate_chain_dataset(
    n_trajectories: usize,
    quality_mix: (f64, f64, f64),
    seed: u64,
) -> Result<Dataset, DataError> {
    let (lo, mid, hi) = quality_mix;
    assert!(
        (lo + mid + hi - 1.0).abs() < 1e-9,
        "quality_mix must sum to 1"
    );
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.15).unwrap();
    let mut trajectories = Vec::with_capacity(n_trajectories);
    for traj_idx in 0..n_trajectories {
        let draw: f64 = master.gen();
        let band = if draw < lo {
            BANDS[0]
        } else if draw < lo + mid {
            BANDS[1]
        } else {
            BANDS[2]
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (traj_idx as u64).wrapping_mul(0x51ed));
        let v_target =
            (band.0 + (band.1 - band.0) * rng.gen::<f64>()) as Float * CHAIN_V_MAX;
        let mut env = DenseChain::new();
        let mut state = env.reset(rng.gen());
        let mut states = Vec::new();
        let mut actions = Vec::new();
        let mut rewards = Vec::new();
        loop {
            let a = (4.0 * (v_target - state[1]) + noise.sample(&mut rng) as Float)
                .clamp(-1.0, 1.0);
            states.extend_from_slice(&state);
            actions.push(a);
            let step = env.step(&[a]);
            rewards.push(step.reward);
            state = step.state;
            if step.done {
                break;
            }
        }
        let rtg = compute_rtg(&rewards);
        trajectories.push(Trajectory {
            states,
            actions,
            rewards,
            rtg,
            terminal: false,
        });
    }
    Dataset::from_trajectories("dense-chain", 2, 1, CHAIN_RETURN_SCALE, trajectories)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{normalized_score, EpisodeResult};

    #[test]
    fn rewards_equal_velocity_times_dt() {
        let mut env = DenseChain::new();
        env.reset(1);
        for _ in 0..10 {
            let step = env.step(&[0.7]);
            assert!((step.reward - step.state[1] * CHAIN_DT).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_full_throttle_matches_closed_form() {
        // v saturates after v_max / (a * dt) steps; position integrates v.
        let mut env = DenseChain::new();
        let s = env.reset(42);
        let mut v = s[1];
        let mut expect = 0.0f64;
        let mut total = 0.0f64;
        for _ in 0..CHAIN_HORIZON {
            v = (v + CHAIN_DT).min(CHAIN_V_MAX);
            expect += (v * CHAIN_DT) as f64;
            total += env.step(&[1.0]).reward as f64;
        }
        assert!((total - expect).abs() < 1e-4, "{total} vs {expect}");
    }

    #[test]
    fn expert_policy_scores_about_100() {
        let env = DenseChain::new();
        let ScoreKind::Return { expert_return, .. } = env.spec().score else {
            panic!("chain is return-scored");
        };
        let s = normalized_score(
            env.spec(),
            EpisodeResult {
                total_return: expert_return,
                success: false,
            },
        );
        assert!((s - 100.0).abs() < 1e-9);
    }

    #[test]
    fn random_policy_scores_about_zero() {
        let env = DenseChain::new();
        let ScoreKind::Return { random_return, .. } = env.spec().score else {
            panic!("chain is return-scored");
        };
        let s = normalized_score(
            env.spec(),
            EpisodeResult {
                total_return: random_return,
                success: false,
            },
        );
        assert!(s.abs() < 1e-9);
    }

    #[test]
    fn return_histogram_spans_bands() {
        let ds = generate_chain_dataset(60, (0.34, 0.33, 0.33), 9).unwrap();
        let returns: Vec<f64> = ds.trajectories.iter().map(Trajectory::total_return).collect();
        let max = returns.iter().cloned().fold(f64::MIN, f64::max);
        let min = returns.iter().cloned().fold(f64::MAX, f64::min);
        assert!(max / min >= 3.0, "return spread too narrow: {min}..{max}");
    }

    #[test]
    fn degenerate_mix_stays_in_low_band() {
        let ds = generate_chain_dataset(30, (1.0, 0.0, 0.0), 10).unwrap();
        for t in &ds.trajectories {
            let r = t.total_return();
            // Low band: v in [0.15, 0.35] sustained for ~10s with ramp-up.
            assert!(r < 4.0, "return {r} escaped the low band");
        }
    }
}
