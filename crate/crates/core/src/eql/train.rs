use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    envelope_target, homotopy_loss, network_input, sample_weight, select_action, PrioritizedReplay,
    Transition, WeightVector, OBJECTIVES,
};
use crate::momdp::Environment;
use crate::nn::{Adam, Mlp, UpdateStatus};
use crate::par::{self, Execution};
use crate::seed::{self, stream};
use crate::{Error, Result};

/// Gradients are accumulated over fixed chunks of this many samples and the
/// chunk sums are added in order, so parallel and sequential runs agree.
pub(crate) const GRAD_CHUNK: usize = 8;

/// Hyperparameters shared by the Q-learning agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub replay_capacity: usize,
    pub warmup: usize,
    pub batch_size: usize,
    pub target_sync: u64,
    pub alpha: f64,
    pub beta_start: f64,
    pub priority_eps: f64,
    pub lr: f64,
    pub clip_norm: f64,
    /// Fresh candidate weights per update (envelope only).
    pub weight_samples: usize,
    pub hidden: Vec<usize>,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of episodes over which epsilon decays.
    pub eps_decay_frac: f64,
    /// Fraction of episodes over which lambda ramps from 0 to 1.
    pub lambda_frac: f64,
    /// Preference used when the trained agent is evaluated.
    pub eval_weight: [f64; OBJECTIVES],
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.99,
            replay_capacity: 20_000,
            warmup: 500,
            batch_size: 64,
            target_sync: 200,
            alpha: 0.6,
            beta_start: 0.4,
            priority_eps: 1e-3,
            lr: 1e-3,
            clip_norm: 10.0,
            weight_samples: 16,
            hidden: vec![128, 128],
            eps_start: 1.0,
            eps_end: 0.05,
            eps_decay_frac: 0.5,
            lambda_frac: 0.6,
            eval_weight: [0.5, 0.5],
        }
    }
}

fn in_unit(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
    }
    Ok(())
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        in_unit("gamma", self.gamma)?;
        in_unit("alpha", self.alpha)?;
        in_unit("beta_start", self.beta_start)?;
        in_unit("eps_start", self.eps_start)?;
        in_unit("eps_end", self.eps_end)?;
        in_unit("eps_decay_frac", self.eps_decay_frac)?;
        in_unit("lambda_frac", self.lambda_frac)?;
        if self.eps_end > self.eps_start {
            return Err(Error::Config("eps_end must not exceed eps_start".into()));
        }
        if self.replay_capacity == 0 || self.batch_size == 0 {
            return Err(Error::Config("replay_capacity and batch_size must be >= 1".into()));
        }
        if self.batch_size > self.replay_capacity {
            return Err(Error::Config("batch_size exceeds replay_capacity".into()));
        }
        if self.target_sync == 0 {
            return Err(Error::Config("target_sync must be >= 1".into()));
        }
        if !(self.priority_eps > 0.0) || !(self.lr > 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::Config("priority_eps, lr and clip_norm must be > 0".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("hidden layers must be non-empty and >= 1 wide".into()));
        }
        WeightVector::new(self.eval_weight[0], self.eval_weight[1])
            .map_err(|e| Error::Config(format!("eval_weight: {e}")))?;
        Ok(())
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            eps_start: self.eps_start,
            eps_end: self.eps_end,
            eps_decay_frac: self.eps_decay_frac,
            lambda_frac: self.lambda_frac,
            beta_start: self.beta_start,
        }
    }
}

/// Linear schedules driven by the fraction of training episodes completed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_frac: f64,
    pub lambda_frac: f64,
    pub beta_start: f64,
}

fn ramp(frac: f64, span: f64) -> f64 {
    if span <= 0.0 {
        1.0
    } else {
        (frac / span).clamp(0.0, 1.0)
    }
}

impl Schedule {
    pub fn epsilon(&self, frac: f64) -> f64 {
        self.eps_start + (self.eps_end - self.eps_start) * ramp(frac, self.eps_decay_frac)
    }

    pub fn lambda(&self, frac: f64) -> f64 {
        ramp(frac, self.lambda_frac)
    }

    pub fn beta(&self, frac: f64) -> f64 {
        self.beta_start + (1.0 - self.beta_start) * ramp(frac, 1.0)
    }
}

/// One learning-curve row per training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub episode: usize,
    pub algo: String,
    pub mean_ttc: Option<f64>,
    pub final_rc: Option<f64>,
    pub r1: Option<bool>,
    pub r2: Option<bool>,
    pub epsilon: f64,
    pub lambda: f64,
    pub return_0: f64,
    pub return_1: f64,
}

/// Hooks around each training episode, used for tracing.
pub trait EpisodeObserver<E> {
    fn before_episode(&mut self, _env: &mut E, _episode: usize) -> Result<()> {
        Ok(())
    }
    fn after_episode(&mut self, _env: &mut E, _row: &CurveRow) -> Result<()> {
        Ok(())
    }
}

pub struct NoObserver;

impl<E> EpisodeObserver<E> for NoObserver {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub loss: f64,
    pub status: UpdateStatus,
}

#[derive(Debug, Clone)]
pub struct EqlAgent {
    pub config: AgentConfig,
    pub online: Mlp,
    pub target: Mlp,
    pub optimizer: Adam,
    pub replay: PrioritizedReplay<Transition>,
    pub updates: u64,
    pub exec: Execution,
    state_dim: usize,
    n_actions: usize,
}

impl EqlAgent {
    pub fn new(state_dim: usize, n_actions: usize, config: AgentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut sizes = vec![state_dim + OBJECTIVES];
        sizes.extend(&config.hidden);
        sizes.push(n_actions * OBJECTIVES);
        let online = Mlp::new(&sizes, seed::derive(seed, stream::NETWORK, 0))?;
        Self::with_network(online, config)
    }

    /// Wraps an existing network (for instance one loaded from a checkpoint).
    pub fn with_network(online: Mlp, config: AgentConfig) -> Result<Self> {
        config.validate()?;
        let out = online.output_size();
        if out % OBJECTIVES != 0 || online.input_size() <= OBJECTIVES {
            return Err(Error::Contract(format!(
                "network shape {:?} does not fit a {OBJECTIVES}-objective agent",
                online.sizes()
            )));
        }
        Ok(EqlAgent {
            state_dim: online.input_size() - OBJECTIVES,
            n_actions: out / OBJECTIVES,
            target: online.clone(),
            optimizer: Adam::new(online.param_count(), config.lr, config.clip_norm),
            replay: PrioritizedReplay::new(config.replay_capacity, config.alpha, config.priority_eps)?,
            online,
            config,
            updates: 0,
            exec: Execution::default(),
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn act(&self, state: &[f64], w: &WeightVector, epsilon: f64, rng: &mut impl Rng) -> Result<usize> {
        select_action(&self.online, state, w, epsilon, rng)
    }

    pub fn eval_weight(&self) -> WeightVector {
        WeightVector(self.config.eval_weight)
    }

    pub fn sync_target(&mut self) {
        self.target.copy_from(&self.online);
    }

    /// One prioritized minibatch step on the homotopy loss.
    pub fn update(&mut self, lambda: f64, beta: f64, rng: &mut impl Rng) -> Result<UpdateStats> {
        let cfg = &self.config;
        let sample = self.replay.sample(cfg.batch_size, beta, rng)?;
        let n = sample.items.len();
        let weights: Vec<WeightVector> = (0..n).map(|_| sample_weight(rng)).collect();
        let extra: Vec<WeightVector> = (0..cfg.weight_samples).map(|_| sample_weight(rng)).collect();
        let targets = envelope_target(&sample.items, &weights, &extra, &self.target, cfg.gamma, self.exec)?;

        let online = &self.online;
        let items = &sample.items;
        let acts = par::map_indexed(self.exec, n, |i| {
            online.forward_cached(&network_input(&items[i].state, &weights[i]))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let predicted: Vec<[f64; OBJECTIVES]> = (0..n)
            .map(|i| {
                let a = items[i].action;
                let out = acts[i].output();
                [out[OBJECTIVES * a], out[OBJECTIVES * a + 1]]
            })
            .collect();
        let (loss, seeds) = homotopy_loss(&predicted, &targets, &weights, &sample.weights, lambda)?;

        let order: Vec<usize> = (0..n).collect();
        let n_params = online.param_count();
        let out_size = online.output_size();
        let partial = par::map_chunks(self.exec, &order, GRAD_CHUNK, |chunk| {
            let mut grads = vec![0.0; n_params];
            let mut seed_vec = vec![0.0; out_size];
            for &i in chunk {
                let a = items[i].action;
                seed_vec[OBJECTIVES * a] = seeds[i][0];
                seed_vec[OBJECTIVES * a + 1] = seeds[i][1];
                online.backward_into(&acts[i], &seed_vec, &mut grads)?;
                seed_vec[OBJECTIVES * a] = 0.0;
                seed_vec[OBJECTIVES * a + 1] = 0.0;
            }
            Ok(grads)
        });
        let mut grads = vec![0.0; n_params];
        for part in partial {
            let part: Vec<f64> = part?;
            grads.iter_mut().zip(&part).for_each(|(g, p)| *g += p);
        }
        let td: Vec<f64> = predicted
            .iter()
            .zip(&targets)
            .map(|(q, y)| (y[0] - q[0]).abs().max((y[1] - q[1]).abs()))
            .collect();
        let indices = sample.indices.clone();

        let status = self.optimizer.apply(&mut self.online, &mut grads)?;
        self.replay.update_priorities(&indices, &td)?;
        self.updates += 1;
        if self.updates % self.config.target_sync == 0 {
            self.sync_target();
        }
        Ok(UpdateStats { loss, status })
    }
}

pub(crate) fn curve_row<E: Environment>(env: &E, episode: usize, algo: &str, eps: f64, lambda: f64, ret: [f64; 2]) -> CurveRow {
    let rec = env.record();
    CurveRow {
        episode,
        algo: algo.into(),
        mean_ttc: rec.as_ref().map(|r| r.mean_ttc),
        final_rc: rec.as_ref().map(|r| r.final_rc),
        r1: rec.as_ref().map(|r| r.r1),
        r2: rec.as_ref().map(|r| r.r2),
        epsilon: eps,
        lambda,
        return_0: ret[0],
        return_1: ret[1],
    }
}

pub(crate) fn policy_rng(seed: u64) -> ChaCha8Rng {
    seed::rng(seed::derive(seed, stream::POLICY, 0))
}

pub(crate) fn episode_seed(seed: u64, episode: usize) -> u64 {
    seed::derive(seed, stream::EPISODE, episode as u64)
}

/// Trains `agent` for `episodes` episodes. A fresh preference weight is drawn
/// at every time step, and one gradient update follows every environment step
/// once the buffer holds `warmup` transitions.
pub fn train<E: Environment, O: EpisodeObserver<E>>(
    agent: &mut EqlAgent,
    env: &mut E,
    episodes: usize,
    seed: u64,
    observer: &mut O,
) -> Result<Vec<CurveRow>> {
    if env.state_dim() != agent.state_dim() || env.action_count() != agent.n_actions() {
        return Err(Error::Contract("agent and environment shapes differ".into()));
    }
    let schedule = agent.config.schedule();
    let mut rng = policy_rng(seed);
    let mut curve = Vec::with_capacity(episodes);
    let warmup = agent.config.warmup.max(agent.config.batch_size);
    for ep in 0..episodes {
        let frac = ep as f64 / episodes as f64;
        let (eps, lambda, beta) = (schedule.epsilon(frac), schedule.lambda(frac), schedule.beta(frac));
        observer.before_episode(env, ep)?;
        let mut state = env.reset(episode_seed(seed, ep))?;
        let mut ret = [0.0; 2];
        loop {
            let w = sample_weight(&mut rng);
            let action = agent.act(&state, &w, eps, &mut rng)?;
            let step = env.step(action)?;
            ret[0] += step.reward[0];
            ret[1] += step.reward[1];
            agent.replay.push(Transition {
                state: std::mem::take(&mut state),
                action,
                reward: step.reward,
                next_state: step.state.clone(),
                terminal: step.done,
            });
            if agent.replay.len() >= warmup {
                agent.update(lambda, beta, &mut rng)?;
            }
            state = step.state;
            if step.done {
                break;
            }
        }
        let row = curve_row(env, ep, "eql", eps, lambda, ret);
        observer.after_episode(env, &row)?;
        curve.push(row);
    }
    Ok(curve)
}

