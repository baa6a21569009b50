//! Comparison strategies: uniform random spawning (RS) and deep Q-learning on
//! the equal-weight scalarized reward (SORLW).

use rand::Rng;

use crate::eql::{
    argmax, curve_row, episode_seed, policy_rng, AgentConfig, CurveRow, EpisodeObserver,
    PrioritizedReplay, UpdateStats, GRAD_CHUNK, OBJECTIVES,
};
use crate::momdp::{Environment, ACTION_COUNT};
use crate::nn::{Adam, Mlp};
use crate::par::{self, Execution};
use crate::seed::{self, stream};
use crate::{Error, Result};

pub fn rs_policy(rng: &mut impl Rng) -> usize {
    rng.random_range(0..ACTION_COUNT)
}

/// Equal-weight scalarization.
pub fn scalarize(r: &[f64; OBJECTIVES]) -> f64 {
    (r[0] + r[1]) / 2.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarTransition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// `r + gamma * max_a Q_target(s', a)`, or `r` for terminal transitions.
pub fn dqn_target(t: &ScalarTransition, target_net: &Mlp, gamma: f64) -> Result<f64> {
    if t.terminal {
        return Ok(t.reward);
    }
    let q = target_net.forward(&t.next_state)?;
    Ok(t.reward + gamma * q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

#[derive(Debug, Clone)]
pub struct SorlwAgent {
    pub config: AgentConfig,
    pub online: Mlp,
    pub target: Mlp,
    pub optimizer: Adam,
    pub replay: PrioritizedReplay<ScalarTransition>,
    pub updates: u64,
    pub exec: Execution,
}

impl SorlwAgent {
    pub fn new(state_dim: usize, n_actions: usize, config: AgentConfig, seed: u64) -> Result<Self> {
        let mut sizes = vec![state_dim];
        sizes.extend(&config.hidden);
        sizes.push(n_actions);
        let online = Mlp::new(&sizes, seed::derive(seed, stream::NETWORK, 0))?;
        Self::with_network(online, config)
    }

    pub fn with_network(online: Mlp, config: AgentConfig) -> Result<Self> {
        config.validate()?;
        Ok(SorlwAgent {
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
        self.online.input_size()
    }

    pub fn n_actions(&self) -> usize {
        self.online.output_size()
    }

    pub fn greedy(&self, state: &[f64]) -> Result<usize> {
        Ok(argmax(self.online.forward(state)?))
    }

    pub fn act(&self, state: &[f64], epsilon: f64, rng: &mut impl Rng) -> Result<usize> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Domain(format!("epsilon must lie in [0, 1], got {epsilon}")));
        }
        if rng.random::<f64>() < epsilon {
            return Ok(rng.random_range(0..self.n_actions()));
        }
        self.greedy(state)
    }

    pub fn sync_target(&mut self) {
        self.target.copy_from(&self.online);
    }

    /// One prioritized minibatch step on the importance-weighted squared TD error.
    pub fn update(&mut self, beta: f64, rng: &mut impl Rng) -> Result<UpdateStats> {
        let cfg = &self.config;
        let sample = self.replay.sample(cfg.batch_size, beta, rng)?;
        let n = sample.items.len();
        let items = &sample.items;
        let target_net = &self.target;
        let targets = par::map_indexed(self.exec, n, |i| dqn_target(items[i], target_net, cfg.gamma))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let online = &self.online;
        let acts = par::map_indexed(self.exec, n, |i| online.forward_cached(&items[i].state))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let mut loss = 0.0;
        let mut seeds = Vec::with_capacity(n);
        let mut td = Vec::with_capacity(n);
        for i in 0..n {
            let e = targets[i] - acts[i].output()[items[i].action];
            loss += sample.weights[i] * e * e;
            seeds.push(-2.0 * sample.weights[i] * e / n as f64);
            td.push(e.abs());
        }
        loss /= n as f64;
        let order: Vec<usize> = (0..n).collect();
        let n_params = online.param_count();
        let out_size = online.output_size();
        let partial = par::map_chunks(self.exec, &order, GRAD_CHUNK, |chunk| {
            let mut grads = vec![0.0; n_params];
            let mut seed_vec = vec![0.0; out_size];
            for &i in chunk {
                seed_vec[items[i].action] = seeds[i];
                online.backward_into(&acts[i], &seed_vec, &mut grads)?;
                seed_vec[items[i].action] = 0.0;
            }
            Ok(grads)
        });
        let mut grads = vec![0.0; n_params];
        for part in partial {
            let part: Vec<f64> = part?;
            grads.iter_mut().zip(&part).for_each(|(g, p)| *g += p);
        }
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

/// Deep Q-learning with the same episode loop, schedules and replay as the
/// envelope agent; the reward is scalarized before it is stored.
pub fn sorlw_train<E: Environment, O: EpisodeObserver<E>>(
    agent: &mut SorlwAgent,
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
        let (eps, beta) = (schedule.epsilon(frac), schedule.beta(frac));
        observer.before_episode(env, ep)?;
        let mut state = env.reset(episode_seed(seed, ep))?;
        let mut ret = [0.0; 2];
        loop {
            let action = agent.act(&state, eps, &mut rng)?;
            let step = env.step(action)?;
            ret[0] += step.reward[0];
            ret[1] += step.reward[1];
            agent.replay.push(ScalarTransition {
                state: std::mem::take(&mut state),
                action,
                reward: scalarize(&step.reward),
                next_state: step.state.clone(),
                terminal: step.done,
            });
            if agent.replay.len() >= warmup {
                agent.update(beta, &mut rng)?;
            }
            state = step.state;
            if step.done {
                break;
            }
        }
        let row = curve_row(env, ep, "sorlw", eps, 0.0, ret);
        observer.after_episode(env, &row)?;
        curve.push(row);
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalarize_examples() {
        assert_eq!(scalarize(&[0.4, 0.6]), 0.5);
        assert_eq!(scalarize(&[0.0, 0.0]), 0.0);
        assert_eq!(scalarize(&[1.0, 1.0]), 1.0);
    }

    #[test]
    fn terminal_target_is_reward() {
        let net = Mlp::new(&[3, 4, 2], 1).unwrap();
        let t = ScalarTransition {
            state: vec![0.0; 3],
            action: 1,
            reward: 0.7,
            next_state: vec![1.0; 3],
            terminal: true,
        };
        assert_eq!(dqn_target(&t, &net, 0.99).unwrap(), 0.7);
    }
}
