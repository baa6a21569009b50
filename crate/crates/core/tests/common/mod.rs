//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use critigen_core::baselines::{sorlw_train, SorlwAgent};
use critigen_core::eql::{
    self, q_values, AgentConfig, EqlAgent, NoObserver, Transition, WeightVector,
};
use critigen_core::momdp::Environment;
use critigen_core::nn::Mlp;
use critigen_core::toy::TreasureGrid;

/// Largest relative error between backprop and central differences of
/// `out_grad . forward(x)`, relative to `max(|analytic|, |numeric|, 1e-6)`.
pub fn fd_max_rel_error(net: &Mlp, input: &[f64], out_grad: &[f64], h: f64) -> f64 {
    let analytic = net.backward(input, out_grad).unwrap();
    let f = |n: &Mlp| -> f64 {
        n.forward(input)
            .unwrap()
            .iter()
            .zip(out_grad)
            .map(|(y, g)| y * g)
            .sum()
    };
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..net.param_count() {
        let p0 = probe.params()[i];
        probe.params_mut()[i] = p0 + h;
        let up = f(&probe);
        probe.params_mut()[i] = p0 - h;
        let down = f(&probe);
        probe.params_mut()[i] = p0;
        let numeric = (up - down) / (2.0 * h);
        let scale = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / scale);
    }
    worst
}

/// Envelope target by exhaustive enumeration of every (weight, action)
/// pair, one single-sample forward pass per candidate weight.
pub fn envelope_brute_force(
    t: &Transition,
    w: &WeightVector,
    extra: &[WeightVector],
    net: &Mlp,
    gamma: f64,
) -> [f64; 2] {
    if t.terminal {
        return t.reward;
    }
    let mut best = (f64::NEG_INFINITY, [0.0; 2]);
    for cand in std::iter::once(w).chain(extra) {
        for row in q_values(net, &t.next_state, cand).unwrap() {
            let score = w.0[0] * row[0] + w.0[1] * row[1];
            if score > best.0 {
                best = (score, row);
            }
        }
    }
    [t.reward[0] + gamma * best.1[0], t.reward[1] + gamma * best.1[1]]
}

pub const TOY_GAMMA: f64 = 0.9;
pub const TOY_EPISODES: usize = 1500;

pub fn toy_config() -> AgentConfig {
    AgentConfig {
        gamma: TOY_GAMMA,
        hidden: vec![64, 64],
        warmup: 200,
        replay_capacity: 5000,
        target_sync: 100,
        ..AgentConfig::default()
    }
}

pub fn weight_grid() -> Vec<WeightVector> {
    (0..=10).map(|k| WeightVector::from_u(k as f64 / 10.0)).collect()
}

/// (matches, pairs) of a trained EQL agent's greedy actions against value
/// iteration over the 11-point weight grid and every start state.
pub fn eql_toy_match(seed: u64, episodes: usize) -> (usize, usize) {
    let mut g = TreasureGrid::default();
    let mut agent = EqlAgent::new(g.state_dim(), g.action_count(), toy_config(), seed).unwrap();
    eql::train(&mut agent, &mut g, episodes, seed, &mut NoObserver).unwrap();
    let (mut hit, mut n) = (0, 0);
    for w in weight_grid() {
        let v = g.value_iteration(&w, TOY_GAMMA);
        for s in g.start_states() {
            let q = q_values(&agent.online, &g.one_hot(s), &w).unwrap();
            let a = eql::greedy_action(&q, &w);
            if g.optimal_actions(&v, s, &w, TOY_GAMMA, 1e-9).contains(&a) {
                hit += 1;
            }
            n += 1;
        }
    }
    (hit, n)
}

/// (matches, states) of a trained SORLW agent against the equal-weight
/// value-iteration policy.
pub fn sorlw_toy_match(seed: u64, episodes: usize) -> (usize, usize) {
    let mut g = TreasureGrid::default();
    let mut agent = SorlwAgent::new(g.state_dim(), g.action_count(), toy_config(), seed).unwrap();
    sorlw_train(&mut agent, &mut g, episodes, seed, &mut NoObserver).unwrap();
    let w = WeightVector::equal();
    let v = g.value_iteration(&w, TOY_GAMMA);
    let (mut hit, mut n) = (0, 0);
    for s in g.start_states() {
        let a = agent.greedy(&g.one_hot(s)).unwrap();
        if g.optimal_actions(&v, s, &w, TOY_GAMMA, 1e-9).contains(&a) {
            hit += 1;
        }
        n += 1;
    }
    (hit, n)
}

pub const ROADS: usize = 6;

/// Reference violation counts out of 100 evaluation episodes per road,
/// as (RS, SORLW, EQL).
pub const V_R1: [(u64, u64, u64); ROADS] = [(3, 0, 25), (4, 0, 15), (6, 0, 2), (5, 0, 34), (0, 0, 0), (1, 0, 1)];
pub const V_R2: [(u64, u64, u64); ROADS] = [(33, 24, 66), (20, 2, 18), (24, 54, 75), (30, 99, 82), (4, 0, 0), (30, 22, 55)];
pub const V_R1_R2: [(u64, u64, u64); ROADS] = [(1, 0, 17), (4, 0, 15), (6, 0, 2), (5, 0, 33), (0, 0, 0), (1, 0, 1)];

/// Reference odds ratios for EQL against RS, `None` where not applicable.
pub const OR_VS_RS: [(&str, [Option<f64>; ROADS]); 3] = [
    ("v_r1", [Some(10.778), Some(4.235), Some(0.320), Some(9.788), None, Some(1.000)]),
    ("v_r2", [Some(3.941), Some(0.878), Some(9.500), Some(10.630), Some(0.000), Some(2.852)]),
    ("v_r1_r2", [Some(20.277), Some(4.235), Some(0.320), Some(9.358), None, Some(1.000)]),
];

/// Reference significance labels for EQL against RS.
pub const P_VS_RS: [(&str, [&str; ROADS]); 3] = [
    ("v_r1", ["<0.01", "<0.05", ">=0.05", "<0.01", ">=0.05", ">=0.05"]),
    ("v_r2", ["<0.01", ">=0.05", "<0.01", "<0.01", ">=0.05", "<0.01"]),
    ("v_r1_r2", ["<0.01", "<0.05", ">=0.05", "<0.01", ">=0.05", ">=0.05"]),
];

/// Reference V_R2 comparison of EQL against SORLW.
pub const OR_R2_VS_SORLW: [Option<f64>; ROADS] =
    [Some(6.147), Some(10.756), Some(2.556), Some(0.046), None, Some(4.333)];
pub const P_R2_VS_SORLW: [&str; ROADS] = ["<0.01", "<0.01", "<0.01", "<0.01", ">=0.05", "<0.01"];

pub fn counts(metric: &str) -> [(u64, u64, u64); ROADS] {
    match metric {
        "v_r1" => V_R1,
        "v_r2" => V_R2,
        "v_r1_r2" => V_R1_R2,
        _ => panic!("unknown metric {metric}"),
    }
}
