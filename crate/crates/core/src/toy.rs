//! Small deterministic two-objective gridworld with a value-iteration oracle,
//! used to check that the learners converge to weight-conditioned optima.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::eql::WeightVector;
use crate::momdp::{EnvStep, Environment};
use crate::{seed, Error, Result};

/// Up, down, left, right.
const MOVES: [(i64, i64); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];

#[derive(Debug, Clone)]
pub struct TreasureGrid {
    pub size: usize,
    /// Terminal cells and the reward vector collected on entering them.
    pub treasures: Vec<((usize, usize), [f64; 2])>,
    pub max_steps: u32,
    pos: (usize, usize),
    steps: u32,
    rng: ChaCha8Rng,
}

impl Default for TreasureGrid {
    fn default() -> Self {
        TreasureGrid::new(
            5,
            vec![((4, 0), [1.0, 0.0]), ((0, 4), [0.0, 1.0]), ((4, 4), [0.62, 0.62])],
            30,
        )
        .expect("valid default grid")
    }
}

impl TreasureGrid {
    pub fn new(size: usize, treasures: Vec<((usize, usize), [f64; 2])>, max_steps: u32) -> Result<Self> {
        if size < 2 || treasures.is_empty() || treasures.len() >= size * size {
            return Err(Error::Config("grid needs size >= 2 and 1..size^2 treasures".into()));
        }
        if treasures.iter().any(|((x, y), _)| *x >= size || *y >= size) {
            return Err(Error::Config("treasure outside the grid".into()));
        }
        Ok(TreasureGrid {
            size,
            treasures,
            max_steps,
            pos: (0, 0),
            steps: 0,
            rng: seed::rng(0),
        })
    }

    pub fn n_states(&self) -> usize {
        self.size * self.size
    }

    pub fn index(&self, (x, y): (usize, usize)) -> usize {
        y * self.size + x
    }

    pub fn cell(&self, s: usize) -> (usize, usize) {
        (s % self.size, s / self.size)
    }

    pub fn treasure_at(&self, c: (usize, usize)) -> Option<[f64; 2]> {
        self.treasures.iter().find(|(p, _)| *p == c).map(|(_, r)| *r)
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.treasure_at(self.cell(s)).is_some()
    }

    /// Non-terminal states in index order.
    pub fn start_states(&self) -> Vec<usize> {
        (0..self.n_states()).filter(|&s| !self.is_terminal(s)).collect()
    }

    /// Deterministic successor and reward of taking `a` in `s`.
    pub fn transition(&self, s: usize, a: usize) -> (usize, [f64; 2]) {
        let (x, y) = self.cell(s);
        let (dx, dy) = MOVES[a];
        let nx = (x as i64 + dx).clamp(0, self.size as i64 - 1) as usize;
        let ny = (y as i64 + dy).clamp(0, self.size as i64 - 1) as usize;
        let next = self.index((nx, ny));
        (next, self.treasure_at((nx, ny)).unwrap_or([0.0, 0.0]))
    }

    pub fn one_hot(&self, s: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states()];
        v[s] = 1.0;
        v
    }

    /// Optimal scalarized state values under `w`, by value iteration.
    pub fn value_iteration(&self, w: &WeightVector, gamma: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states()];
        loop {
            let mut delta: f64 = 0.0;
            for s in self.start_states() {
                let best = (0..MOVES.len())
                    .map(|a| self.q_scalar(&v, s, a, w, gamma))
                    .fold(f64::NEG_INFINITY, f64::max);
                delta = delta.max((best - v[s]).abs());
                v[s] = best;
            }
            if delta < 1e-13 {
                return v;
            }
        }
    }

    pub fn q_scalar(&self, v: &[f64], s: usize, a: usize, w: &WeightVector, gamma: f64) -> f64 {
        let (next, r) = self.transition(s, a);
        let cont = if self.is_terminal(next) { 0.0 } else { gamma * v[next] };
        w.dot(&r) + cont
    }

    /// Actions within `tol` of the best scalarized value in `s`.
    pub fn optimal_actions(&self, v: &[f64], s: usize, w: &WeightVector, gamma: f64, tol: f64) -> Vec<usize> {
        let q: Vec<f64> = (0..MOVES.len()).map(|a| self.q_scalar(v, s, a, w, gamma)).collect();
        let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (0..MOVES.len()).filter(|&a| q[a] >= best - tol).collect()
    }
}

impl Environment for TreasureGrid {
    fn state_dim(&self) -> usize {
        self.n_states()
    }

    fn action_count(&self) -> usize {
        MOVES.len()
    }

    /// Starts from a uniformly drawn non-terminal cell.
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        self.rng = seed::rng(seed);
        let starts = self.start_states();
        let s = starts[self.rng.random_range(0..starts.len())];
        self.pos = self.cell(s);
        self.steps = 0;
        Ok(self.one_hot(s))
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        if action >= MOVES.len() {
            return Err(Error::Contract(format!("action {action} outside 0..4")));
        }
        let (next, reward) = self.transition(self.index(self.pos), action);
        self.pos = self.cell(next);
        self.steps += 1;
        Ok(EnvStep {
            state: self.one_hot(next),
            reward,
            done: self.is_terminal(next) || self.steps >= self.max_steps,
        })
    }
}
