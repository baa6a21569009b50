//! The scenario-generation MOMDP: state encoding, the 36-entry action
//! catalog, time-step orchestration and vector rewards.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::objectives::{self, ObjectiveSample};
use crate::sim::actors::{RUN_SPEED, WALK_SPEED};
use crate::sim::trace::TickRecord;
use crate::sim::{
    Behavior, RoadMap, Route, SimParams, SpawnResult, SpawnSpec, Termination, WalkDirection,
    WorldState,
};
use crate::{Error, Result};

pub const STATE_DIM: usize = 15;
pub const ACTION_COUNT: usize = 36;
pub const VEHICLE_ACTIONS: usize = 24;
pub const OBJECTIVES: usize = 2;
pub const RECORD_SCHEMA: u32 = 1;

const VEL_SCALE: f64 = 30.0;
const ACC_SCALE: f64 = 10.0;
const OMEGA_SCALE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector(pub [f64; STATE_DIM]);

impl StateVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// AV position, rotation, velocity, acceleration and angular velocity, each
/// as a 3-vector with z = 0, scaled into [-1, 1].
pub fn encode_state(world: &WorldState) -> Result<StateVector> {
    let av = &world.av;
    let raw = [
        av.pose.position.x,
        av.pose.position.y,
        av.pose.heading,
        av.velocity.x,
        av.velocity.y,
        av.acceleration.x,
        av.acceleration.y,
        av.yaw_rate,
    ];
    if let Some(bad) = raw.iter().find(|v| !v.is_finite()) {
        return Err(Error::Encoding(format!(
            "non-finite AV kinematics at tick {}: {bad}",
            world.tick_count
        )));
    }
    let b = &world.road.bounds;
    let scale = |v: f64, lo: f64, hi: f64| (2.0 * (v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0);
    let unit = |v: f64, k: f64| (v / k).clamp(-1.0, 1.0);
    Ok(StateVector([
        scale(raw[0], b.min.x, b.max.x),
        scale(raw[1], b.min.y, b.max.y),
        0.0,
        0.0,
        unit(raw[2], std::f64::consts::PI),
        0.0,
        unit(raw[3], VEL_SCALE),
        unit(raw[4], VEL_SCALE),
        0.0,
        unit(raw[5], ACC_SCALE),
        unit(raw[6], ACC_SCALE),
        0.0,
        0.0,
        0.0,
        unit(raw[7], OMEGA_SCALE),
    ]))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionSpec {
    pub index: usize,
    pub spawn: SpawnSpec,
}

/// Vehicles first, ordered by (along, cross, behavior); then pedestrians by
/// (cross, direction, speed).
pub fn action_catalog() -> &'static [ActionSpec] {
    static CATALOG: OnceLock<Vec<ActionSpec>> = OnceLock::new();
    CATALOG.get_or_init(|| {
        let behaviors = [Behavior::ChangeLeft, Behavior::ChangeRight, Behavior::KeepLane];
        let directions = [
            WalkDirection::Aligned45,
            WalkDirection::Opposed45,
            WalkDirection::Perpendicular,
        ];
        let mut out = Vec::with_capacity(ACTION_COUNT);
        for along in [-20.0, 0.0, 20.0] {
            for cross in [-3.5, 0.0, 3.5] {
                if along == 0.0 && cross == 0.0 {
                    continue;
                }
                for behavior in behaviors {
                    out.push(SpawnSpec::Vehicle {
                        along,
                        cross,
                        behavior,
                    });
                }
            }
        }
        for cross in [-10.0, 10.0] {
            for direction in directions {
                for speed in [WALK_SPEED, RUN_SPEED] {
                    out.push(SpawnSpec::Pedestrian {
                        along: 10.0,
                        cross,
                        direction,
                        speed,
                    });
                }
            }
        }
        out.into_iter()
            .enumerate()
            .map(|(index, spawn)| ActionSpec { index, spawn })
            .collect()
    })
}

pub fn decode_action(index: usize) -> Result<ActionSpec> {
    action_catalog()
        .get(index)
        .copied()
        .ok_or_else(|| Error::Contract(format!("action index {index} outside 0..{ACTION_COUNT}")))
}

pub fn encode_action(spawn: &SpawnSpec) -> Option<usize> {
    action_catalog().iter().position(|a| a.spawn == *spawn)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VectorReward(pub [f64; OBJECTIVES]);

/// Componentwise maximum of the per-instant rewards.
pub fn aggregate_reward(instants: &[ObjectiveSample]) -> Result<VectorReward> {
    if instants.is_empty() {
        return Err(Error::Contract("aggregate_reward needs at least one instant".into()));
    }
    let mut out = [0.0f64; OBJECTIVES];
    for s in instants {
        let r = s.rewards()?;
        out[0] = out[0].max(r.reward_ttc);
        out[1] = out[1].max(r.reward_rc);
    }
    Ok(VectorReward(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepStatus {
    Running,
    Completed,
    Collided,
    Timeout,
}

impl From<Termination> for StepStatus {
    fn from(t: Termination) -> Self {
        match t {
            Termination::Completed => StepStatus::Completed,
            Termination::Collided => StepStatus::Collided,
            Termination::Timeout => StepStatus::Timeout,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub next_state: StateVector,
    pub reward: VectorReward,
    pub terminal: StepStatus,
    pub spawned: bool,
    pub instants: Vec<ObjectiveSample>,
}

/// Episode shape shared by every algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeShape {
    pub steps: u32,
    pub ticks_per_step: u32,
}

impl Default for EpisodeShape {
    fn default() -> Self {
        EpisodeShape {
            steps: 6,
            ticks_per_step: 40,
        }
    }
}

impl EpisodeShape {
    pub fn max_ticks(&self) -> u64 {
        self.steps as u64 * self.ticks_per_step as u64
    }
}

/// Spawns the action's actor, then runs up to one time step of ticks.
pub fn run_time_step(
    world: &mut WorldState,
    action: &ActionSpec,
    shape: &EpisodeShape,
    mut trace: Option<&mut Vec<TickRecord>>,
) -> Result<StepOutcome> {
    if world.is_terminated() {
        return Err(Error::Contract("time step on a terminated episode".into()));
    }
    let spawned = matches!(world.spawn_actor(&action.spawn), SpawnResult::Spawned(_));
    let mut instants = Vec::with_capacity(shape.ticks_per_step as usize);
    for _ in 0..shape.ticks_per_step {
        world.tick()?;
        let sample = ObjectiveSample::measure(world);
        if let Some(t) = trace.as_deref_mut() {
            t.push(TickRecord::capture(world, sample.ttc, sample.rc));
        }
        instants.push(sample);
        let end = if world.collision_latched {
            Some(Termination::Collided)
        } else if world.progress >= world.route.total_length {
            Some(Termination::Completed)
        } else if world.tick_count >= shape.max_ticks() {
            Some(Termination::Timeout)
        } else {
            None
        };
        if end.is_some() {
            world.termination = end;
            break;
        }
    }
    Ok(StepOutcome {
        next_state: encode_state(world)?,
        reward: aggregate_reward(&instants)?,
        terminal: world.termination.map_or(StepStatus::Running, StepStatus::from),
        spawned,
        instants,
    })
}

/// Per-scenario outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub schema: u32,
    pub algo: String,
    pub road: u8,
    pub seed: u64,
    pub episode: u64,
    pub budget: f64,
    pub actions: Vec<usize>,
    pub spawned: Vec<bool>,
    pub steps: u32,
    pub termination: Termination,
    pub elapsed: f64,
    /// Collision requirement violated.
    pub r1: bool,
    /// Route could not be completed within the budget.
    pub r2: bool,
    /// `r2` or a collision; the stricter reading of the route requirement.
    pub r2_inclusive: bool,
    pub final_rc: f64,
    pub step_ttc: Vec<f64>,
    pub step_rc: Vec<f64>,
    /// Mean of the per-step mean TTC.
    pub mean_ttc: f64,
}

impl EpisodeRecord {
    pub fn r1_r2(&self) -> bool {
        self.r1 && self.r2
    }
}

/// Generic episodic environment with two-component vector rewards.
pub trait Environment {
    fn state_dim(&self) -> usize;
    fn action_count(&self) -> usize;
    fn reset(&mut self, seed: u64) -> Result<Vec<f64>>;
    fn step(&mut self, action: usize) -> Result<EnvStep>;
    /// Outcome of the episode that just finished, when the environment has one.
    fn record(&self) -> Option<EpisodeRecord> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub state: Vec<f64>,
    pub reward: [f64; OBJECTIVES],
    pub done: bool,
}

/// Header line of a JSONL episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema: u32,
    pub road: u8,
    pub seed: u64,
    pub episode: u64,
    pub budget: f64,
    pub dt: f64,
    pub steps: u32,
    pub ticks_per_step: u32,
    pub algo: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum TraceLine {
    Header(TraceHeader),
    Step { step: u32, action: usize, spawned: bool },
    Tick(TickRecord),
    End(EpisodeRecord),
}

/// The driving MOMDP on one road.
#[derive(Debug, Clone)]
pub struct DrivingEnv {
    pub road: Arc<RoadMap>,
    pub route: Arc<Route>,
    pub params: SimParams,
    pub shape: EpisodeShape,
    pub budget: f64,
    pub episode: u64,
    /// Method name written to traces and records.
    pub algo: String,
    /// Collect the full tick-level trace of each episode.
    pub tracing: bool,
    world: Option<WorldState>,
    seed: u64,
    actions: Vec<usize>,
    spawned: Vec<bool>,
    step_ttc: Vec<f64>,
    step_rc: Vec<f64>,
    trace: Vec<TraceLine>,
    record: Option<EpisodeRecord>,
}

impl DrivingEnv {
    pub fn new(road_id: u8, params: SimParams, shape: EpisodeShape, budget: Option<f64>) -> Result<Self> {
        let (road, route) = crate::sim::load_road(road_id)?;
        let budget = budget
            .unwrap_or_else(|| objectives::default_budget(route.total_length, route.speed_limit));
        if !(budget > 0.0) || !budget.is_finite() {
            return Err(Error::Config(format!("time budget must be > 0, got {budget}")));
        }
        Ok(DrivingEnv {
            road: Arc::new(road),
            route: Arc::new(route),
            params,
            shape,
            budget,
            episode: 0,
            algo: "unset".into(),
            tracing: false,
            world: None,
            seed: 0,
            actions: Vec::new(),
            spawned: Vec::new(),
            step_ttc: Vec::new(),
            step_rc: Vec::new(),
            trace: Vec::new(),
            record: None,
        })
    }

    pub fn world(&self) -> Option<&WorldState> {
        self.world.as_ref()
    }

    fn header(&self) -> TraceHeader {
        TraceHeader {
            schema: RECORD_SCHEMA,
            road: self.road.road_id,
            seed: self.seed,
            episode: self.episode,
            budget: self.budget,
            dt: self.params.dt,
            steps: self.shape.steps,
            ticks_per_step: self.shape.ticks_per_step,
            algo: self.algo.clone(),
        }
    }

    /// Trace of the current or last episode, as JSON lines.
    pub fn trace_lines(&self) -> Result<Vec<String>> {
        let mut out = Vec::with_capacity(self.trace.len() + 1);
        out.push(to_line(&TraceLine::Header(self.header()))?);
        for line in &self.trace {
            out.push(to_line(line)?);
        }
        Ok(out)
    }

    fn finish(&mut self) -> Result<()> {
        let world = self.world.as_ref().expect("finish after reset");
        let termination = world
            .termination
            .ok_or_else(|| Error::Contract("finish on a running episode".into()))?;
        let r1 = world.collision_latched;
        let r2 = objectives::r2_violated(world, self.budget)?;
        let mean_ttc = self.step_ttc.iter().sum::<f64>() / self.step_ttc.len().max(1) as f64;
        let record = EpisodeRecord {
            schema: RECORD_SCHEMA,
            algo: self.algo.clone(),
            road: self.road.road_id,
            seed: self.seed,
            episode: self.episode,
            budget: self.budget,
            actions: self.actions.clone(),
            spawned: self.spawned.clone(),
            steps: self.actions.len() as u32,
            termination,
            elapsed: world.elapsed,
            r1,
            r2,
            r2_inclusive: r2 || r1,
            final_rc: objectives::rc(world),
            step_ttc: self.step_ttc.clone(),
            step_rc: self.step_rc.clone(),
            mean_ttc,
        };
        if self.tracing {
            self.trace.push(TraceLine::End(record.clone()));
        }
        self.record = Some(record);
        Ok(())
    }

    pub fn reset_world(&mut self, seed: u64) -> Result<StateVector> {
        let world = WorldState::new(
            Arc::clone(&self.road),
            Arc::clone(&self.route),
            self.params.clone(),
            seed,
        );
        let state = encode_state(&world)?;
        self.world = Some(world);
        self.seed = seed;
        self.actions.clear();
        self.spawned.clear();
        self.step_ttc.clear();
        self.step_rc.clear();
        self.trace.clear();
        self.record = None;
        Ok(state)
    }

    pub fn step_world(&mut self, action: usize) -> Result<StepOutcome> {
        let spec = decode_action(action)?;
        let world = self
            .world
            .as_mut()
            .ok_or_else(|| Error::Contract("step before reset".into()))?;
        let mut ticks = Vec::new();
        let out = run_time_step(
            world,
            &spec,
            &self.shape,
            self.tracing.then_some(&mut ticks),
        )?;
        let step = self.actions.len() as u32;
        self.actions.push(action);
        self.spawned.push(out.spawned);
        let n = out.instants.len() as f64;
        self.step_ttc
            .push(out.instants.iter().map(|s| s.ttc).sum::<f64>() / n);
        self.step_rc
            .push(out.instants.last().map_or(0.0, |s| s.rc));
        if self.tracing {
            self.trace.push(TraceLine::Step {
                step,
                action,
                spawned: out.spawned,
            });
            self.trace.extend(ticks.into_iter().map(TraceLine::Tick));
        }
        if out.terminal != StepStatus::Running {
            self.finish()?;
        }
        Ok(out)
    }
}

pub fn to_line(line: &TraceLine) -> Result<String> {
    serde_json::to_string(line).map_err(|e| Error::Format(e.to_string()))
}

impl Environment for DrivingEnv {
    fn state_dim(&self) -> usize {
        STATE_DIM
    }

    fn action_count(&self) -> usize {
        ACTION_COUNT
    }

    fn reset(&mut self, seed: u64) -> Result<Vec<f64>> {
        Ok(self.reset_world(seed)?.0.to_vec())
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        let out = self.step_world(action)?;
        Ok(EnvStep {
            state: out.next_state.0.to_vec(),
            reward: out.reward.0,
            done: out.terminal != StepStatus::Running,
        })
    }

    fn record(&self) -> Option<EpisodeRecord> {
        self.record.clone()
    }
}

/// Runs one episode, asking `policy` for an action at every time step.
pub fn run_episode(
    env: &mut DrivingEnv,
    seed: u64,
    mut policy: impl FnMut(&StateVector, u32) -> Result<usize>,
) -> Result<EpisodeRecord> {
    let mut state = env.reset_world(seed)?;
    for step in 0..env.shape.steps {
        let action = policy(&state, step)?;
        let out = env.step_world(action)?;
        state = out.next_state;
        if out.terminal != StepStatus::Running {
            break;
        }
    }
    env.record
        .clone()
        .ok_or_else(|| Error::Contract("episode ended without a record".into()))
}
