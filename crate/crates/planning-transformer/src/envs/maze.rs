//! Point-mass maze navigation with sparse goal rewards.
//!
//! The agent is a point in a grid world; actions are velocities clipped to
//! the unit box and integrated with `dt = 0.1`. Collision resolution is
//! axis-separated: the x move is applied first and cancelled if it lands in
//! a wall, then the y move. Reaching within `eps = 0.5` cells of the goal
//! pays reward 1 and ends the episode.

use super::{EnvSpec, Environment, ScoreKind, Step};
use crate::data::{compute_rtg, DataError, Dataset, Trajectory};
use crate::tensor::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::VecDeque;
use std::path::Path;

pub const MAZE_DT: Float = 0.1;
pub const MAZE_A_MAX: Float = 1.0;
pub const MAZE_GOAL_EPS: Float = 0.5;

const UMAZE: &str = include_str!("../../assets/layouts/umaze.txt");
const MEDIUM: &str = include_str!("../../assets/layouts/medium.txt");
const LARGE: &str = include_str!("../../assets/layouts/large.txt");

#[derive(Debug, thiserror::Error)]
pub enum LayoutError {
    #[error("io error reading layout: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad layout: {0}")]
    Bad(String),
}

/// Occupancy grid parsed from ASCII ('#' wall, '.' free, 'S' evaluation
/// start, 'G' evaluation goal). Row 0 is the top line; cell (col, row) spans
/// `[col, col+1) x [row, row+1)` in state space.
#[derive(Debug, Clone)]
pub struct MazeLayout {
    pub name: String,
    /// `walls[row][col]`, true = wall.
    pub walls: Vec<Vec<bool>>,
    pub start_cell: (usize, usize),
    pub goal_cell: (usize, usize),
}

impl MazeLayout {
    pub fn parse(name: &str, text: &str) -> Result<Self, LayoutError> {
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if rows.is_empty() {
            return Err(LayoutError::Bad("empty layout".into()));
        }
        let width = rows[0].chars().count();
        let mut walls = Vec::with_capacity(rows.len());
        let mut start = None;
        let mut goal = None;
        for (r, line) in rows.iter().enumerate() {
            if line.chars().count() != width {
                return Err(LayoutError::Bad(format!("ragged row {r}")));
            }
            let mut wrow = Vec::with_capacity(width);
            for (c, ch) in line.chars().enumerate() {
                match ch {
                    '#' => wrow.push(true),
                    '.' => wrow.push(false),
                    'S' => {
                        start = Some((c, r));
                        wrow.push(false);
                    }
                    'G' => {
                        goal = Some((c, r));
                        wrow.push(false);
                    }
                    other => return Err(LayoutError::Bad(format!("bad char {other:?} at row {r}"))),
                }
            }
            walls.push(wrow);
        }
        let start_cell = start.ok_or_else(|| LayoutError::Bad("no start cell 'S'".into()))?;
        let goal_cell = goal.ok_or_else(|| LayoutError::Bad("no goal cell 'G'".into()))?;
        Ok(Self {
            name: name.to_string(),
            walls,
            start_cell,
            goal_cell,
        })
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, LayoutError> {
        let text = std::fs::read_to_string(&path)?;
        let name = path
            .as_ref()
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "maze".into());
        Self::parse(&name, &text)
    }

    /// Built-in difficulty ladder: "umaze" (5x5), "medium" (8x8),
    /// "large" (12x12).
    pub fn builtin(name: &str) -> Option<Self> {
        let text = match name {
            "umaze" => UMAZE,
            "medium" => MEDIUM,
            "large" => LARGE,
            _ => return None,
        };
        Some(Self::parse(name, text).expect("built-in layouts parse"))
    }

    pub fn width(&self) -> usize {
        self.walls[0].len()
    }

    pub fn height(&self) -> usize {
        self.walls.len()
    }

    pub fn is_wall_cell(&self, col: i64, row: i64) -> bool {
        if col < 0 || row < 0 || col as usize >= self.width() || row as usize >= self.height() {
            return true;
        }
        self.walls[row as usize][col as usize]
    }

    pub fn is_wall_at(&self, x: Float, y: Float) -> bool {
        self.is_wall_cell(x.floor() as i64, y.floor() as i64)
    }

    pub fn cell_center(&self, cell: (usize, usize)) -> (Float, Float) {
        (cell.0 as Float + 0.5, cell.1 as Float + 0.5)
    }

    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (r, row) in self.walls.iter().enumerate() {
            for (c, &w) in row.iter().enumerate() {
                if !w {
                    out.push((c, r));
                }
            }
        }
        out
    }

    /// 4-connected shortest cell path, inclusive of both endpoints.
    pub fn shortest_path(
        &self,
        from: (usize, usize),
        to: (usize, usize),
    ) -> Option<Vec<(usize, usize)>> {
        let mut parent: Vec<Vec<Option<(usize, usize)>>> =
            vec![vec![None; self.width()]; self.height()];
        let mut seen = vec![vec![false; self.width()]; self.height()];
        let mut q = VecDeque::new();
        seen[from.1][from.0] = true;
        q.push_back(from);
        while let Some((c, r)) = q.pop_front() {
            if (c, r) == to {
                let mut path = vec![(c, r)];
                let mut cur = (c, r);
                while let Some(p) = parent[cur.1][cur.0] {
                    path.push(p);
                    cur = p;
                }
                path.reverse();
                return Some(path);
            }
            let neighbors = [
                (c.wrapping_sub(1), r),
                (c + 1, r),
                (c, r.wrapping_sub(1)),
                (c, r + 1),
            ];
            for (nc, nr) in neighbors {
                if nc < self.width() && nr < self.height() && !self.walls[nr][nc] && !seen[nr][nc] {
                    seen[nr][nc] = true;
                    parent[nr][nc] = Some((c, r));
                    q.push_back((nc, nr));
                }
            }
        }
        None
    }
}

pub struct MazeWorld {
    layout: MazeLayout,
    spec: EnvSpec,
    start_cell: (usize, usize),
    goal_pos: (Float, Float),
    pos: (Float, Float),
    steps: usize,
    done: bool,
    success: bool,
}

fn maze_horizon(layout: &MazeLayout) -> usize {
    // Difficulty ladder: 150 for the 5x5, 400 for the 12x12.
    match layout.width().max(layout.height()) {
        0..=6 => 150,
        7..=9 => 300,
        _ => 400,
    }
}

impl MazeWorld {
    /// Evaluation configuration: the layout's marked start and goal cells.
    pub fn eval(layout: MazeLayout) -> Self {
        let (s, g) = (layout.start_cell, layout.goal_cell);
        Self::with_cells(layout, s, g)
    }

    /// Custom start/goal pair (used by the dataset generator).
    pub fn with_cells(layout: MazeLayout, start: (usize, usize), goal: (usize, usize)) -> Self {
        assert!(!layout.walls[start.1][start.0], "start cell is a wall");
        assert!(!layout.walls[goal.1][goal.0], "goal cell is a wall");
        let spec = EnvSpec {
            name: format!("maze-{}", layout.name),
            state_dim: 2,
            action_dim: 2,
            goal_indices: vec![0, 1],
            horizon: maze_horizon(&layout),
            action_low: vec![-MAZE_A_MAX, -MAZE_A_MAX],
            action_high: vec![MAZE_A_MAX, MAZE_A_MAX],
            score: ScoreKind::Success,
        };
        let goal_pos = layout.cell_center(goal);
        Self {
            layout,
            spec,
            start_cell: start,
            goal_pos,
            pos: (0.0, 0.0),
            steps: 0,
            done: true,
            success: false,
        }
    }

    pub fn layout(&self) -> &MazeLayout {
        &self.layout
    }

    fn state(&self) -> Vec<Float> {
        vec![self.pos.0, self.pos.1]
    }
}

impl Environment for MazeWorld {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<Float> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (cx, cy) = self.layout.cell_center(self.start_cell);
        // Small in-cell jitter keeps rollouts diverse but deterministic.
        self.pos = (
            cx + rng.gen_range(-0.2..0.2) as Float,
            cy + rng.gen_range(-0.2..0.2) as Float,
        );
        self.steps = 0;
        self.done = false;
        self.success = false;
        self.state()
    }

    fn step(&mut self, action: &[Float]) -> Step {
        assert!(!self.done, "step after episode end");
        let ax = action[0].clamp(-MAZE_A_MAX, MAZE_A_MAX);
        let ay = action[1].clamp(-MAZE_A_MAX, MAZE_A_MAX);
        // Axis-separated collision: move x, cancel if blocked, then y.
        let nx = self.pos.0 + ax * MAZE_DT;
        if !self.layout.is_wall_at(nx, self.pos.1) {
            self.pos.0 = nx;
        }
        let ny = self.pos.1 + ay * MAZE_DT;
        if !self.layout.is_wall_at(self.pos.0, ny) {
            self.pos.1 = ny;
        }
        self.steps += 1;

        let dx = self.pos.0 - self.goal_pos.0;
        let dy = self.pos.1 - self.goal_pos.1;
        let at_goal = (dx * dx + dy * dy).sqrt() <= MAZE_GOAL_EPS;
        let reward = if at_goal { 1.0 } else { 0.0 };
        if at_goal {
            self.done = true;
            self.success = true;
        } else if self.steps >= self.spec.horizon {
            self.done = true;
        }
        Step {
            state: self.state(),
            reward,
            done: self.done,
        }
    }

    fn succeeded(&self) -> bool {
        self.success
    }

    fn goal(&self) -> Option<Vec<Float>> {
        Some(vec![self.goal_pos.0, self.goal_pos.1])
    }
}

/// Scripted noisy waypoint-following over grid shortest paths between
/// random start/goal pairs. Individual trajectories rarely connect the
/// evaluation pair directly, which is what forces trajectory stitching.
pub fn generate_maze_dataset(
    layout: &MazeLayout,
    n_trajectories: usize,
    seed: u64,
) -> Result<Dataset, DataError> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.35).unwrap();
    let free = layout.free_cells();
    let mut trajectories = Vec::with_capacity(n_trajectories);

    for traj_idx in 0..n_trajectories {
        // Resample until the pair is distinct and solvable.
        let (start, goal, path) = loop {
            let s = free[master.gen_range(0..free.len())];
            let g = free[master.gen_range(0..free.len())];
            if s == g {
                continue;
            }
            if let Some(p) = layout.shortest_path(s, g) {
                break (s, g, p);
            }
        };
        let mut env = MazeWorld::with_cells(layout.clone(), start, goal);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (traj_idx as u64).wrapping_mul(0x9e37));
        let mut state = env.reset(rng.gen());

        let mut states = Vec::new();
        let mut actions = Vec::new();
        let mut rewards = Vec::new();
        let mut wp = 1.min(path.len() - 1);
        loop {
            // Advance the waypoint once we are close to it.
            loop {
                let (tx, ty) = layout.cell_center(path[wp]);
                let d = ((state[0] - tx).powi(2) + (state[1] - ty).powi(2)).sqrt();
                if d < 0.3 && wp + 1 < path.len() {
                    wp += 1;
                } else {
                    break;
                }
            }
            let (tx, ty) = layout.cell_center(path[wp]);
            let ax = (4.0 * (tx - state[0]) + noise.sample(&mut rng) as Float)
                .clamp(-MAZE_A_MAX, MAZE_A_MAX);
            let ay = (4.0 * (ty - state[1]) + noise.sample(&mut rng) as Float)
                .clamp(-MAZE_A_MAX, MAZE_A_MAX);
            states.extend_from_slice(&state);
            actions.push(ax);
            actions.push(ay);
            let step = env.step(&[ax, ay]);
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
            terminal: env.succeeded(),
        });
    }
    Dataset::from_trajectories(&format!("maze-{}", layout.name), 2, 2, 1.0, trajectories)
}
