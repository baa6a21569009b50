//! Envelope Q-learning.
//!
//! One network conditioned on a preference weight predicts a value vector per
//! action. Targets bootstrap through the envelope: the best scalarized value
//! over actions and a set of candidate weights.

mod replay;
mod train;

pub use replay::{PrioritizedReplay, ReplaySample};
pub(crate) use train::{curve_row, episode_seed, policy_rng, GRAD_CHUNK};
pub use train::{
    train, AgentConfig, CurveRow, EqlAgent, EpisodeObserver, NoObserver, Schedule, UpdateStats,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::Mlp;
use crate::par::{self, Execution};
use crate::{Error, Result};

pub const OBJECTIVES: usize = 2;

/// Point on the 2-simplex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(pub [f64; OBJECTIVES]);

impl WeightVector {
    pub fn new(w0: f64, w1: f64) -> Result<Self> {
        let ok = w0 >= 0.0 && w1 >= 0.0 && ((w0 + w1) - 1.0).abs() < 1e-12;
        if !ok {
            return Err(Error::Domain(format!("({w0}, {w1}) is not a simplex weight")));
        }
        Ok(WeightVector([w0, w1]))
    }

    /// `(u, 1 - u)` for `u` in [0, 1].
    pub fn from_u(u: f64) -> Self {
        let u = u.clamp(0.0, 1.0);
        WeightVector([u, 1.0 - u])
    }

    pub fn equal() -> Self {
        WeightVector([0.5, 0.5])
    }

    pub fn dot(&self, v: &[f64; OBJECTIVES]) -> f64 {
        self.0[0] * v[0] + self.0[1] * v[1]
    }
}

pub fn sample_weight(rng: &mut impl Rng) -> WeightVector {
    WeightVector::from_u(rng.random::<f64>())
}

/// Stored experience. The preference weight is not part of it.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: [f64; OBJECTIVES],
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

pub fn network_input(state: &[f64], w: &WeightVector) -> Vec<f64> {
    let mut x = Vec::with_capacity(state.len() + OBJECTIVES);
    x.extend_from_slice(state);
    x.extend_from_slice(&w.0);
    x
}

fn reshape(out: &[f64]) -> Vec<[f64; OBJECTIVES]> {
    out.chunks_exact(OBJECTIVES).map(|c| [c[0], c[1]]).collect()
}

/// Value matrix with one row per action.
pub fn q_values(net: &Mlp, state: &[f64], w: &WeightVector) -> Result<Vec<[f64; OBJECTIVES]>> {
    if net.output_size() % OBJECTIVES != 0 {
        return Err(Error::Contract(format!(
            "network output {} is not a multiple of {OBJECTIVES}",
            net.output_size()
        )));
    }
    Ok(reshape(&net.forward(&network_input(state, w))?))
}

/// Index of the first maximum.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub fn greedy_action(q: &[[f64; OBJECTIVES]], w: &WeightVector) -> usize {
    argmax(q.iter().map(|row| w.dot(row)))
}

/// Epsilon-greedy on the scalarized values.
pub fn select_action(
    net: &Mlp,
    state: &[f64],
    w: &WeightVector,
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<usize> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Domain(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    let n_actions = net.output_size() / OBJECTIVES;
    if rng.random::<f64>() < epsilon {
        return Ok(rng.random_range(0..n_actions));
    }
    Ok(greedy_action(&q_values(net, state, w)?, w))
}

/// Envelope targets. Transition `i` with training weight `weights[i]`
/// bootstraps from the best `(action, weight)` pair over its own weight
/// followed by `extra`, scored by `weights[i]`. Ties keep the earlier
/// candidate and then the lower action.
pub fn envelope_target(
    batch: &[&Transition],
    weights: &[WeightVector],
    extra: &[WeightVector],
    target_net: &Mlp,
    gamma: f64,
    exec: Execution,
) -> Result<Vec<[f64; OBJECTIVES]>> {
    if batch.is_empty() || batch.len() != weights.len() {
        return Err(Error::Contract(format!(
            "envelope target needs a non-empty batch with one weight per transition ({} vs {})",
            batch.len(),
            weights.len()
        )));
    }
    let targets = par::map_indexed(exec, batch.len(), |i| {
        let t = batch[i];
        let w = &weights[i];
        if t.terminal {
            return Ok(t.reward);
        }
        let n_cand = 1 + extra.len();
        let mut inputs = Vec::with_capacity(n_cand * target_net.input_size());
        for cand in std::iter::once(w).chain(extra) {
            inputs.extend_from_slice(&t.next_state);
            inputs.extend_from_slice(&cand.0);
        }
        let out = target_net.forward_batch(&inputs, n_cand)?;
        let mut best_score = f64::NEG_INFINITY;
        let mut best = [0.0; OBJECTIVES];
        for row in out.chunks_exact(OBJECTIVES) {
            let row = [row[0], row[1]];
            let s = w.dot(&row);
            if s > best_score {
                best_score = s;
                best = row;
            }
        }
        Ok([t.reward[0] + gamma * best[0], t.reward[1] + gamma * best[1]])
    });
    targets.into_iter().collect()
}

/// Homotopy loss value and its gradient with respect to each prediction.
///
/// `L = 1/N sum_i iw_i [(1 - lambda) |y_i - q_i|^2 + lambda (w_i . (y_i - q_i))^2]`
pub fn homotopy_loss(
    predicted: &[[f64; OBJECTIVES]],
    target: &[[f64; OBJECTIVES]],
    weights: &[WeightVector],
    importance: &[f64],
    lambda: f64,
) -> Result<(f64, Vec<[f64; OBJECTIVES]>)> {
    let n = predicted.len();
    if n == 0 || target.len() != n || weights.len() != n || importance.len() != n {
        return Err(Error::Contract("homotopy loss inputs differ in length or are empty".into()));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Domain(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(n);
    for i in 0..n {
        let e = [target[i][0] - predicted[i][0], target[i][1] - predicted[i][1]];
        let u = weights[i].dot(&e);
        let iw = importance[i];
        loss += iw * ((1.0 - lambda) * (e[0] * e[0] + e[1] * e[1]) + lambda * u * u);
        let k = 2.0 * iw / n as f64;
        grads.push([
            -k * ((1.0 - lambda) * e[0] + lambda * u * weights[i].0[0]),
            -k * ((1.0 - lambda) * e[1] + lambda * u * weights[i].0[1]),
        ]);
    }
    Ok((loss / n as f64, grads))
}
