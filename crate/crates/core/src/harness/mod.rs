//! Run orchestration: configuration, training and evaluation runs, the
//! statistics comparison and trace replay, all writing deterministic
//! artifacts to an output directory.

pub mod config;
pub mod io;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use config::{Algorithm, RunConfig};
use io::{relative, write_atomic, write_csv, write_json, write_lines, Clock, Manifest, MANIFEST_FILE};

use crate::baselines::{rs_policy, sorlw_train, SorlwAgent};
use crate::eql::{self, select_action, AgentConfig, CurveRow, EpisodeObserver, EqlAgent, WeightVector};
use crate::momdp::{run_episode, DrivingEnv, EpisodeRecord, TraceLine, ACTION_COUNT, STATE_DIM};
use crate::nn::Mlp;
use crate::par::{self, Execution};
use crate::seed::{self, stream};
use crate::sim::SimParams;
use crate::stats::{self, Comparison, Metric, MetricsSummary};
use crate::{Error, Result};

pub const CURVE_FILE: &str = "curve.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const EPISODES_FILE: &str = "episodes.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const TRACE_DIR: &str = "traces";

/// Sidecar describing the agent stored in a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub algorithm: Algorithm,
    pub road: u8,
    pub seed: u64,
    pub episodes: usize,
    pub updates: u64,
    pub skipped_updates: u64,
    pub sizes: Vec<usize>,
    pub agent: AgentConfig,
}

pub fn checkpoint_meta_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("json")
}

#[derive(Debug, Clone)]
pub enum Trained {
    Eql(EqlAgent),
    Sorlw(SorlwAgent),
}

impl Trained {
    pub fn network(&self) -> &Mlp {
        match self {
            Trained::Eql(a) => &a.online,
            Trained::Sorlw(a) => &a.online,
        }
    }

    pub fn policy(&self) -> Policy<'_> {
        match self {
            Trained::Eql(a) => Policy::Eql {
                net: &a.online,
                weight: a.eval_weight(),
                epsilon: a.config.eps_end,
            },
            Trained::Sorlw(a) => Policy::Sorlw {
                net: &a.online,
                epsilon: a.config.eps_end,
            },
        }
    }
}

/// Frozen behaviour used for evaluation episodes.
#[derive(Debug, Clone, Copy)]
pub enum Policy<'a> {
    Eql {
        net: &'a Mlp,
        weight: WeightVector,
        epsilon: f64,
    },
    Sorlw {
        net: &'a Mlp,
        epsilon: f64,
    },
    Rs,
}

fn exec_of(cfg: &RunConfig) -> Execution {
    if cfg.parallel {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

pub fn make_env(cfg: &RunConfig) -> Result<DrivingEnv> {
    let mut env = DrivingEnv::new(cfg.road, cfg.sim_params(), cfg.shape(), cfg.budget)?;
    env.algo = cfg.algorithm.name().into();
    Ok(env)
}

/// Writes a training trace every `every` episodes.
struct TraceWriter {
    dir: PathBuf,
    every: usize,
    written: Vec<PathBuf>,
}

impl EpisodeObserver<DrivingEnv> for TraceWriter {
    fn before_episode(&mut self, env: &mut DrivingEnv, episode: usize) -> Result<()> {
        env.episode = episode as u64;
        env.tracing = self.every > 0 && episode % self.every == 0;
        Ok(())
    }

    fn after_episode(&mut self, env: &mut DrivingEnv, row: &CurveRow) -> Result<()> {
        if env.tracing {
            let path = self.dir.join(format!("train_ep{:05}.jsonl", row.episode));
            write_lines(&path, &env.trace_lines()?)?;
            self.written.push(path);
        }
        Ok(())
    }
}

struct EpisodeTagger;

impl EpisodeObserver<DrivingEnv> for EpisodeTagger {
    fn before_episode(&mut self, env: &mut DrivingEnv, episode: usize) -> Result<()> {
        env.episode = episode as u64;
        Ok(())
    }
}

fn train_with<O: EpisodeObserver<DrivingEnv>>(
    cfg: &RunConfig,
    observer: &mut O,
) -> Result<(Vec<CurveRow>, Option<Trained>)> {
    cfg.validate()?;
    let mut env = make_env(cfg)?;
    let exec = exec_of(cfg);
    let agent_seed = seed::derive(cfg.seed, stream::AGENT, 0);
    match cfg.algorithm {
        Algorithm::Eql => {
            let mut agent = EqlAgent::new(STATE_DIM, ACTION_COUNT, cfg.agent.clone(), agent_seed)?;
            agent.exec = exec;
            let curve = eql::train(&mut agent, &mut env, cfg.train_episodes, cfg.seed, observer)?;
            Ok((curve, Some(Trained::Eql(agent))))
        }
        Algorithm::Sorlw => {
            let mut agent = SorlwAgent::new(STATE_DIM, ACTION_COUNT, cfg.agent.clone(), agent_seed)?;
            agent.exec = exec;
            let curve = sorlw_train(&mut agent, &mut env, cfg.train_episodes, cfg.seed, observer)?;
            Ok((curve, Some(Trained::Sorlw(agent))))
        }
        Algorithm::Rs => {
            // nothing to learn; the curve records what random spawning achieves
            let mut rng = seed::rng(seed::derive(cfg.seed, stream::POLICY, 0));
            let mut curve = Vec::with_capacity(cfg.train_episodes);
            for ep in 0..cfg.train_episodes {
                observer.before_episode(&mut env, ep)?;
                let rec = run_episode(&mut env, seed::derive(cfg.seed, stream::EPISODE, ep as u64), |_, _| {
                    Ok(rs_policy(&mut rng))
                })?;
                let row = CurveRow {
                    episode: ep,
                    algo: "rs".into(),
                    mean_ttc: Some(rec.mean_ttc),
                    final_rc: Some(rec.final_rc),
                    r1: Some(rec.r1),
                    r2: Some(rec.r2),
                    epsilon: 1.0,
                    lambda: 0.0,
                    return_0: f64::NAN,
                    return_1: f64::NAN,
                };
                observer.after_episode(&mut env, &row)?;
                curve.push(row);
            }
            Ok((curve, None))
        }
    }
}

/// Trains in memory without writing anything.
pub fn train_agent(cfg: &RunConfig) -> Result<(Vec<CurveRow>, Option<Trained>)> {
    train_with(cfg, &mut EpisodeTagger)
}

fn greedy_scalar(net: &Mlp, state: &[f64]) -> Result<usize> {
    Ok(eql::argmax(net.forward(state)?))
}

/// Runs `cfg.eval_episodes` frozen-policy episodes. Episode `i` uses world
/// seed `derive(seed, EVAL, i)`, so results do not depend on scheduling.
pub fn evaluate(cfg: &RunConfig, policy: Policy<'_>, tracing: bool) -> Result<Vec<(EpisodeRecord, Vec<String>)>> {
    cfg.validate()?;
    let proto = make_env(cfg)?;
    let results = par::map_indexed(exec_of(cfg), cfg.eval_episodes, |i| {
        let mut env = proto.clone();
        env.episode = i as u64;
        env.tracing = tracing;
        let world_seed = seed::derive(cfg.seed, stream::EVAL, i as u64);
        let mut rng = seed::rng(seed::derive(world_seed, stream::POLICY, 0));
        let rec = run_episode(&mut env, world_seed, |state, _| match policy {
            Policy::Eql { net, weight, epsilon } => select_action(net, state.as_slice(), &weight, epsilon, &mut rng),
            Policy::Sorlw { net, epsilon } => {
                use rand::Rng;
                if rng.random::<f64>() < epsilon {
                    Ok(rng.random_range(0..ACTION_COUNT))
                } else {
                    greedy_scalar(net, state.as_slice())
                }
            }
            Policy::Rs => Ok(rs_policy(&mut rng)),
        })?;
        let lines = if tracing { env.trace_lines()? } else { Vec::new() };
        Ok((rec, lines))
    });
    results.into_iter().collect()
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub curve: Vec<CurveRow>,
    pub checkpoint: Option<PathBuf>,
    pub traces: Vec<PathBuf>,
}

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<TrainReport> {
    cfg.validate()?;
    let clock = Clock::start();
    io::ensure_dir(out)?;
    let mut tracer = TraceWriter {
        dir: out.join(TRACE_DIR),
        every: cfg.trace_every,
        written: Vec::new(),
    };
    let (curve, trained) = train_with(cfg, &mut tracer)?;
    let mut artifacts = vec![CURVE_FILE.to_string()];
    write_csv(&out.join(CURVE_FILE), &curve)?;
    let checkpoint = match &trained {
        Some(t) => {
            let path = out.join(CHECKPOINT_FILE);
            let (updates, skipped) = match t {
                Trained::Eql(a) => (a.updates, a.optimizer.skipped()),
                Trained::Sorlw(a) => (a.updates, a.optimizer.skipped()),
            };
            write_atomic(&path, &t.network().to_bytes(updates))?;
            let meta = CheckpointMeta {
                algorithm: cfg.algorithm,
                road: cfg.road,
                seed: cfg.seed,
                episodes: cfg.train_episodes,
                updates,
                skipped_updates: skipped,
                sizes: t.network().sizes().to_vec(),
                agent: cfg.agent.clone(),
            };
            let meta_path = checkpoint_meta_path(&path);
            write_json(&meta_path, &meta)?;
            artifacts.push(CHECKPOINT_FILE.into());
            artifacts.push(relative(out, &meta_path));
            Some(path)
        }
        None => None,
    };
    artifacts.extend(tracer.written.iter().map(|p| relative(out, p)));
    write_json(&out.join(MANIFEST_FILE), &Manifest::new("train", cfg, artifacts)?)?;
    clock.finish(out)?;
    Ok(TrainReport {
        curve,
        checkpoint,
        traces: tracer.written,
    })
}

/// Loads a checkpoint written by [`cmd_train`] for the configured algorithm.
pub fn load_trained(cfg: &RunConfig, checkpoint: &Path) -> Result<Trained> {
    let meta_path = checkpoint_meta_path(checkpoint);
    let meta_text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: CheckpointMeta =
        serde_json::from_str(&meta_text).map_err(|e| Error::Format(format!("{}: {e}", meta_path.display())))?;
    if meta.algorithm != cfg.algorithm {
        return Err(Error::Config(format!(
            "checkpoint was trained with {} but the run uses {}",
            meta.algorithm, cfg.algorithm
        )));
    }
    let file = fs::File::open(checkpoint).map_err(|e| Error::io(checkpoint, e))?;
    let (net, _) = Mlp::load(std::io::BufReader::new(file))?;
    if net.sizes() != meta.sizes.as_slice() {
        return Err(Error::Format("checkpoint layer sizes disagree with its sidecar".into()));
    }
    let exec = exec_of(cfg);
    match cfg.algorithm {
        Algorithm::Eql => {
            let mut a = EqlAgent::with_network(net, meta.agent)?;
            if a.state_dim() != STATE_DIM || a.n_actions() != ACTION_COUNT {
                return Err(Error::Format("checkpoint does not fit the driving task".into()));
            }
            a.exec = exec;
            Ok(Trained::Eql(a))
        }
        Algorithm::Sorlw => {
            let mut a = SorlwAgent::with_network(net, meta.agent)?;
            if a.state_dim() != STATE_DIM || a.n_actions() != ACTION_COUNT {
                return Err(Error::Format("checkpoint does not fit the driving task".into()));
            }
            a.exec = exec;
            Ok(Trained::Sorlw(a))
        }
        Algorithm::Rs => Err(Error::Usage("rs does not use a checkpoint".into())),
    }
}

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub road: u8,
    pub seed: u64,
    pub episodes: u64,
    pub v_r1: u64,
    pub v_r2: u64,
    pub v_r1_r2: u64,
    pub v_r2_inclusive: u64,
    pub ttc_r1: Option<f64>,
    pub rc_r2: Option<f64>,
    pub ttc_r1_r2: Option<f64>,
    pub rc_r1_r2: Option<f64>,
}

impl MetricsRow {
    pub fn new(method: &str, road: u8, seed: u64, s: &MetricsSummary) -> Self {
        MetricsRow {
            method: method.into(),
            road,
            seed,
            episodes: s.episodes,
            v_r1: s.v_r1,
            v_r2: s.v_r2,
            v_r1_r2: s.v_r1_r2,
            v_r2_inclusive: s.v_r2_inclusive,
            ttc_r1: s.ttc_r1,
            rc_r2: s.rc_r2,
            ttc_r1_r2: s.ttc_r1_r2,
            rc_r1_r2: s.rc_r1_r2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub records: Vec<EpisodeRecord>,
    pub summary: MetricsSummary,
}

pub fn cmd_eval(cfg: &RunConfig, out: &Path, checkpoint: Option<&Path>) -> Result<EvalReport> {
    cfg.validate()?;
    let trained = match (cfg.algorithm, checkpoint) {
        (Algorithm::Rs, Some(_)) => return Err(Error::Usage("rs evaluation takes no --checkpoint".into())),
        (Algorithm::Rs, None) => None,
        (algo, None) => return Err(Error::Usage(format!("{algo} evaluation needs --checkpoint"))),
        (_, Some(path)) => Some(load_trained(cfg, path)?),
    };
    let clock = Clock::start();
    io::ensure_dir(out)?;
    let policy = trained.as_ref().map_or(Policy::Rs, Trained::policy);
    let results = evaluate(cfg, policy, true)?;
    let mut artifacts = vec![EPISODES_FILE.to_string(), METRICS_FILE.to_string()];
    let mut record_lines = Vec::with_capacity(results.len());
    let mut records = Vec::with_capacity(results.len());
    for (i, (rec, trace)) in results.into_iter().enumerate() {
        let path = out.join(TRACE_DIR).join(format!("eval_ep{i:05}.jsonl"));
        write_lines(&path, &trace)?;
        artifacts.push(relative(out, &path));
        record_lines.push(serde_json::to_string(&rec).map_err(|e| Error::Format(e.to_string()))?);
        records.push(rec);
    }
    write_lines(&out.join(EPISODES_FILE), &record_lines)?;
    let summary = stats::aggregate(&records)?;
    write_csv(
        &out.join(METRICS_FILE),
        &[MetricsRow::new(cfg.algorithm.name(), cfg.road, cfg.seed, &summary)],
    )?;
    write_json(&out.join(MANIFEST_FILE), &Manifest::new("eval", cfg, artifacts)?)?;
    clock.finish(out)?;
    Ok(EvalReport { records, summary })
}

pub fn read_records(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::Format(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Fisher test and odds ratio of A against B on the selected metrics.
pub fn cmd_compare(a: &Path, b: &Path, metrics: &[Metric], out: Option<&Path>) -> Result<Vec<Comparison>> {
    let ra = read_records(a)?;
    let rb = read_records(b)?;
    if ra.is_empty() || rb.is_empty() {
        return Err(Error::Usage("both record files must contain episodes".into()));
    }
    if ra.len() != rb.len() {
        return Err(Error::Config(format!(
            "episode counts differ: {} vs {}",
            ra.len(),
            rb.len()
        )));
    }
    let name = |recs: &[EpisodeRecord], path: &Path| {
        let algo = recs[0].algo.clone();
        if algo.is_empty() {
            path.display().to_string()
        } else {
            algo
        }
    };
    let (na, nb) = (name(&ra, a), name(&rb, b));
    let rows = metrics
        .iter()
        .map(|m| {
            let xa = ra.iter().filter(|r| m.violated(r)).count() as u64;
            let xb = rb.iter().filter(|r| m.violated(r)).count() as u64;
            stats::compare_counts(m.name(), (&na, xa, ra.len() as u64), (&nb, xb, rb.len() as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(dir) = out {
        write_csv(&dir.join(COMPARISON_FILE), &rows)?;
    }
    Ok(rows)
}

fn first_tick_of(lines: &[TraceLine]) -> u64 {
    lines
        .iter()
        .rev()
        .find_map(|l| match l {
            TraceLine::Tick(t) => Some(t.tick),
            _ => None,
        })
        .unwrap_or(0)
}

/// Re-simulates a trace from its seed and actions, checks every line, and
/// renders a per-step summary.
pub fn cmd_replay(trace: &Path) -> Result<String> {
    let text = fs::read_to_string(trace).map_err(|e| Error::io(trace, e))?;
    let raw: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if raw.is_empty() {
        return Err(Error::Usage(format!("{} is empty", trace.display())));
    }
    let header = match serde_json::from_str::<TraceLine>(raw[0]) {
        Ok(TraceLine::Header(h)) => h,
        _ => return Err(Error::Usage(format!("{} does not start with a trace header", trace.display()))),
    };
    let mut parsed = Vec::with_capacity(raw.len());
    for (i, line) in raw.iter().enumerate().skip(1) {
        match serde_json::from_str::<TraceLine>(line) {
            Ok(l) => parsed.push(l),
            Err(e) => {
                return Err(Error::Integrity {
                    episode: header.episode,
                    tick: first_tick_of(&parsed) + 1,
                    detail: format!("line {} is not a valid trace record: {e}", i + 1),
                })
            }
        }
    }
    let actions: Vec<usize> = parsed
        .iter()
        .filter_map(|l| match l {
            TraceLine::Step { action, .. } => Some(*action),
            _ => None,
        })
        .collect();

    let params = SimParams {
        dt: header.dt,
        ..SimParams::default()
    };
    let shape = crate::momdp::EpisodeShape {
        steps: header.steps,
        ticks_per_step: header.ticks_per_step,
    };
    let mut env = DrivingEnv::new(header.road, params, shape, Some(header.budget))?;
    env.algo = header.algo.clone();
    env.episode = header.episode;
    env.tracing = true;
    let mut i = 0;
    let rec = run_episode(&mut env, header.seed, |_, _| {
        let a = actions.get(i).copied().ok_or_else(|| Error::Integrity {
            episode: header.episode,
            tick: 0,
            detail: "trace ends before the episode does".into(),
        });
        i += 1;
        a
    })?;
    let fresh = env.trace_lines()?;
    for (k, recorded) in raw.iter().enumerate() {
        let Some(expected) = fresh.get(k) else {
            return Err(Error::Integrity {
                episode: header.episode,
                tick: first_tick_of(&parsed),
                detail: format!("trace has extra line {}", k + 1),
            });
        };
        if recorded != expected {
            let tick = match serde_json::from_str::<TraceLine>(expected) {
                Ok(TraceLine::Tick(t)) => t.tick,
                _ => first_tick_of(&parsed[..k.saturating_sub(1)]) + 1,
            };
            return Err(Error::Integrity {
                episode: header.episode,
                tick,
                detail: format!("line {} differs from re-simulation", k + 1),
            });
        }
    }
    if fresh.len() != raw.len() {
        return Err(Error::Integrity {
            episode: header.episode,
            tick: first_tick_of(&parsed) + 1,
            detail: format!("trace is missing {} lines", fresh.len() - raw.len()),
        });
    }

    let mut s = String::new();
    let _ = writeln!(
        s,
        "episode {} road {} seed {} algo {} budget {:.2}s",
        header.episode, header.road, header.seed, header.algo, header.budget
    );
    for (k, a) in rec.actions.iter().enumerate() {
        let spec = crate::momdp::decode_action(*a)?;
        let _ = writeln!(
            s,
            "step {k}: action {a:2} {:?} spawned={} mean_ttc={:.3} rc={:.1}",
            spec.spawn, rec.spawned[k], rec.step_ttc[k], rec.step_rc[k]
        );
    }
    let _ = writeln!(
        s,
        "end: {:?} at {:.2}s, r1={} r2={} r2_inclusive={} final_rc={:.1}",
        rec.termination, rec.elapsed, rec.r1, rec.r2, rec.r2_inclusive, rec.final_rc
    );
    let _ = writeln!(s, "verified {} lines against re-simulation", raw.len());
    Ok(s)
}

/// The resolved configuration as TOML.
pub fn print_config(cfg: &RunConfig) -> Result<String> {
    cfg.to_toml()
}
