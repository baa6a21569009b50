//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line; exits non-zero if any fails.

mod common;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use critigen_core::eql::{envelope_target, sample_weight, Transition, WeightVector};
use critigen_core::harness::{self, evaluate, train_agent, Algorithm, Policy, RunConfig};
use critigen_core::momdp::{
    action_catalog, aggregate_reward, encode_state, DrivingEnv, EpisodeShape, Environment,
    ACTION_COUNT, STATE_DIM, VEHICLE_ACTIONS,
};
use critigen_core::nn::Mlp;
use critigen_core::objectives::{reward_rc, reward_ttc, ObjectiveSample};
use critigen_core::par::Execution;
use critigen_core::sim::{load_road, SimParams, SpawnSpec, WorldState};
use critigen_core::stats::{fisher_exact_two_sided, odds_ratio, ContingencyTable, Metric, OddsRatio, Significance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Finite odds ratio to three decimals, or the mismatch.
fn or_matches(t: &ContingencyTable, want: Option<f64>) -> Result<(), String> {
    match (odds_ratio(t), want) {
        (OddsRatio::Finite(v), Some(w)) if (v - w).abs() <= 1e-3 => Ok(()),
        (OddsRatio::NotApplicable, None) => Ok(()),
        (got, want) => Err(format!("{t:?}: got {got}, want {want:?}")),
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    for (metric, ors) in common::OR_VS_RS {
        let flags = common::P_VS_RS.iter().find(|(m, _)| *m == metric).unwrap().1;
        for (road, &(rs, _, eql)) in common::counts(metric).iter().enumerate() {
            let t = ContingencyTable::from_counts(eql, 100, rs, 100).map_err(|e| e.to_string())?;
            or_matches(&t, ors[road]).map_err(|e| format!("{metric} road {}: {e}", road + 1))?;
            let p = fisher_exact_two_sided(&t).map_err(|e| e.to_string())?;
            check(Significance::of(p).label() == flags[road], || {
                format!("{metric} road {}: p = {p} but reference flag {}", road + 1, flags[road])
            })?;
            checked += 1;
        }
    }
    for (road, &(_, sorlw, eql)) in common::V_R2.iter().enumerate() {
        let t = ContingencyTable::from_counts(eql, 100, sorlw, 100).map_err(|e| e.to_string())?;
        or_matches(&t, common::OR_R2_VS_SORLW[road]).map_err(|e| format!("v_r2 vs sorlw road {}: {e}", road + 1))?;
        let p = fisher_exact_two_sided(&t).map_err(|e| e.to_string())?;
        check(Significance::of(p).label() == common::P_R2_VS_SORLW[road], || {
            format!("v_r2 vs sorlw road {}: p = {p}", road + 1)
        })?;
        checked += 1;
    }
    let elapsed = start.elapsed().as_secs_f64();
    check(elapsed < 1.0, || format!("took {elapsed:.3} s"))?;
    Ok(format!("{checked} ratios and flags reproduced in {:.1} ms", elapsed * 1e3))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let nets = 25;
    for _ in 0..nets {
        let layers = rng.random_range(2..=4);
        let sizes: Vec<usize> = (0..layers).map(|_| rng.random_range(1..=24)).collect();
        let mut net = Mlp::new(&sizes, rng.random()).map_err(|e| e.to_string())?;
        for p in net.params_mut() {
            *p += rng.random_range(-0.1..0.1);
        }
        let x: Vec<f64> = (0..sizes[0]).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..*sizes.last().unwrap()).map(|_| rng.random_range(-1.0..1.0)).collect();
        worst = worst.max(common::fd_max_rel_error(&net, &x, &g, 1e-5));
    }
    check(worst < 1e-4, || format!("max relative error {worst:e}"))?;
    Ok(format!("{nets} networks, max relative error {worst:.2e}"))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let instances = 120;
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let state_dim = rng.random_range(1..=4);
        let n_actions = rng.random_range(1..=5);
        let hidden = rng.random_range(1..=6);
        let net = Mlp::new(&[state_dim + 2, hidden, 2 * n_actions], rng.random()).map_err(|e| e.to_string())?;
        let batch: Vec<Transition> = (0..rng.random_range(1..=8))
            .map(|_| {
                let terminal = rng.random_bool(0.2);
                Transition {
                    state: (0..state_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    action: rng.random_range(0..n_actions),
                    reward: [rng.random(), rng.random()],
                    next_state: (0..state_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    terminal,
                }
            })
            .collect();
        let ws: Vec<WeightVector> = batch.iter().map(|_| sample_weight(&mut rng)).collect();
        let extra: Vec<WeightVector> = (0..rng.random_range(0..=6)).map(|_| sample_weight(&mut rng)).collect();
        let refs: Vec<&Transition> = batch.iter().collect();
        for exec in [Execution::Sequential, Execution::default()] {
            let y = envelope_target(&refs, &ws, &extra, &net, 0.95, exec).map_err(|e| e.to_string())?;
            for (i, t) in batch.iter().enumerate() {
                let o = common::envelope_brute_force(t, &ws[i], &extra, &net, 0.95);
                worst = worst.max((y[i][0] - o[0]).abs()).max((y[i][1] - o[1]).abs());
            }
        }
    }
    check(worst <= 1e-10, || format!("max deviation {worst:e}"))?;
    Ok(format!("{instances} instances, max deviation {worst:.1e}"))
}

fn criterion_4() -> Outcome {
    let (eh, en) = common::eql_toy_match(1, common::TOY_EPISODES);
    let (sh, sn) = common::sorlw_toy_match(1, common::TOY_EPISODES);
    let detail = format!("EQL {eh}/{en} (state, weight) pairs, SORLW {sh}/{sn} states");
    check(eh * 10 >= en * 9 && sh * 10 >= sn * 9, || detail.clone())?;
    Ok(detail)
}

fn criterion_5() -> Outcome {
    let e = |r: critigen_core::Result<f64>| r.map_err(|e| e.to_string());
    check(e(reward_ttc(0.0, true))? == 1.0, || "collision must give reward_ttc 1".into())?;
    check(e(reward_ttc(7.5, true))? == 1.0, || "collision overrides TTC".into())?;
    check(e(reward_rc(0.0))? == 0.0, || "rc 0 must give reward_rc 0".into())?;
    let s = ObjectiveSample { ttc: 3.7, rc: 42.0, collided: false, tick_index: 0 };
    let r = s.rewards().map_err(|e| e.to_string())?;
    let agg = aggregate_reward(&[s]).map_err(|e| e.to_string())?;
    check(agg.0 == [r.reward_ttc, r.reward_rc], || format!("aggregation of one instant changed it: {agg:?}"))?;
    let cat = action_catalog();
    let vehicles = cat.iter().filter(|a| matches!(a.spawn, SpawnSpec::Vehicle { .. })).count();
    let peds = cat.iter().filter(|a| matches!(a.spawn, SpawnSpec::Pedestrian { .. })).count();
    check(
        (vehicles, peds, cat.len(), VEHICLE_ACTIONS, ACTION_COUNT) == (24, 12, 36, 24, 36),
        || format!("catalog sizes {vehicles}/{peds}/{}", cat.len()),
    )?;
    let (road, route) = load_road(1).map_err(|e| e.to_string())?;
    let w = WorldState::new(road.into(), route.into(), SimParams::default(), 0);
    let st = encode_state(&w).map_err(|e| e.to_string())?;
    check(STATE_DIM == 15 && st.0.len() == 15, || format!("state length {}", st.0.len()))?;
    let mut env = DrivingEnv::new(1, SimParams::default(), EpisodeShape::default(), None).map_err(|e| e.to_string())?;
    check(env.reset(0).map_err(|e| e.to_string())?.len() == 15, || "reset state length".into())?;
    Ok("reward, aggregation, catalog and state examples hold exactly".into())
}

fn snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if p.file_name().unwrap() != harness::io::RUN_META_FILE {
                out.push((p.strip_prefix(root).unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out.sort();
    out
}

fn criterion_6() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = 0;
    let mut traces = Vec::new();
    for algo in [Algorithm::Eql, Algorithm::Sorlw, Algorithm::Rs] {
        let mut cfg = RunConfig {
            algorithm: algo,
            road: 2,
            seed: 17,
            train_episodes: 20,
            eval_episodes: 8,
            trace_every: 5,
            ..RunConfig::default()
        };
        cfg.agent.warmup = 32;
        cfg.agent.batch_size = 32;
        cfg.agent.target_sync = 20;
        cfg.agent.hidden = vec![32, 32];
        let mut snaps = Vec::new();
        for run in 0..2 {
            let dir = tmp.path().join(format!("{}_{run}", algo.name()));
            let report = harness::cmd_train(&cfg, &dir.join("train")).map_err(|e| e.to_string())?;
            harness::cmd_eval(&cfg, &dir.join("eval"), report.checkpoint.as_deref()).map_err(|e| e.to_string())?;
            snaps.push(snapshot(&dir));
            if run == 0 {
                for sub in ["train", "eval"] {
                    for e in fs::read_dir(dir.join(sub).join(harness::TRACE_DIR)).map_err(|e| e.to_string())? {
                        traces.push(e.map_err(|e| e.to_string())?.path());
                    }
                }
            }
        }
        check(snaps[0] == snaps[1], || format!("{} artifacts differ between identical runs", algo.name()))?;
        // the sequential build must write the same bytes as the parallel one
        let seq_dir = tmp.path().join(format!("{}_seq", algo.name()));
        let seq = RunConfig { parallel: false, ..cfg.clone() };
        let report = harness::cmd_train(&seq, &seq_dir.join("train")).map_err(|e| e.to_string())?;
        harness::cmd_eval(&seq, &seq_dir.join("eval"), report.checkpoint.as_deref()).map_err(|e| e.to_string())?;
        let strip = |s: Vec<(String, Vec<u8>)>| -> Vec<_> {
            s.into_iter().filter(|(n, _)| !n.ends_with(harness::io::MANIFEST_FILE)).collect()
        };
        check(strip(snapshot(&seq_dir)) == strip(snaps[0].clone()), || {
            format!("{} sequential and parallel artifacts differ", algo.name())
        })?;
        files += snaps[0].len();
    }
    for t in &traces {
        harness::cmd_replay(t).map_err(|e| format!("{}: {e}", t.display()))?;
    }
    Ok(format!("{files} artifacts byte-identical across reruns, {} traces replay-verified", traces.len()))
}

fn criterion_7() -> Outcome {
    let seeds = 1..=5u64;
    let metric = Metric::VR1R2;
    let count = |cfg: &RunConfig, policy: Policy<'_>| -> Result<u64, String> {
        let recs = evaluate(cfg, policy, false).map_err(|e| e.to_string())?;
        Ok(recs.iter().filter(|(r, _)| metric.violated(r)).count() as u64)
    };
    let (mut eql_beats_rs, mut sorlw_not_above) = (0, 0);
    let mut rows = Vec::new();
    for seed in seeds.clone() {
        let base = RunConfig { road: 1, seed, ..RunConfig::default() };
        let mut per = [0u64; 3];
        for (k, algo) in [Algorithm::Eql, Algorithm::Sorlw].into_iter().enumerate() {
            let cfg = RunConfig { algorithm: algo, ..base.clone() };
            let (_, trained) = train_agent(&cfg).map_err(|e| e.to_string())?;
            per[k] = count(&cfg, trained.as_ref().unwrap().policy())?;
        }
        per[2] = count(&RunConfig { algorithm: Algorithm::Rs, ..base.clone() }, Policy::Rs)?;
        eql_beats_rs += (per[0] > per[2]) as usize;
        sorlw_not_above += (per[1] <= per[0]) as usize;
        rows.push(format!("seed {seed}: eql {} sorlw {} rs {}", per[0], per[1], per[2]));
    }
    let n = seeds.count();
    let detail = format!(
        "V_R1_R2 on road 1 [{}]; EQL > RS on {eql_beats_rs}/{n} seeds, SORLW <= EQL on {sorlw_not_above}/{n} seeds",
        rows.join("; ")
    );
    check(eql_beats_rs * 2 > n && sorlw_not_above * 2 > n, || detail.clone())?;
    Ok(detail)
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("statistics reproduction", criterion_1),
        ("gradient correctness", criterion_2),
        ("envelope target oracle", criterion_3),
        ("toy convergence", criterion_4),
        ("reward and objective examples", criterion_5),
        ("determinism and replay", criterion_6),
        ("directional driving experiment", criterion_7),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = format!("criterion {}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|p| id.contains(p.as_str()) || name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let out = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match out {
            Ok(detail) => println!("PASS {id} ({name}, {secs:.1} s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id} ({name}, {secs:.1} s): {detail}");
            }
        }
    }
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
