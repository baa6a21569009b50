//! Objective functions (TTC, RC) and their reward transforms.

use serde::{Deserialize, Serialize};

use crate::sim::{Termination, WorldState};
use crate::{Error, Result};

/// Upper clamp for time-to-collision, in seconds.
pub const TTC_CAP: f64 = 20.0;

/// Per-instant objective values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSample {
    pub ttc: f64,
    pub rc: f64,
    pub collided: bool,
    pub tick_index: u64,
}

impl ObjectiveSample {
    pub fn measure(world: &WorldState) -> Self {
        ObjectiveSample {
            ttc: ttc(world),
            rc: rc(world),
            collided: world.collision_latched,
            tick_index: world.tick_count,
        }
    }

    pub fn rewards(&self) -> Result<RewardPair> {
        Ok(RewardPair {
            reward_ttc: reward_ttc(self.ttc, self.collided)?,
            reward_rc: reward_rc(self.rc)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardPair {
    pub reward_ttc: f64,
    pub reward_rc: f64,
}

/// Smallest time-to-collision between the AV and any actor, in [0, TTC_CAP].
pub fn ttc(world: &WorldState) -> f64 {
    if world.collision_latched {
        return 0.0;
    }
    let av = &world.av;
    let av_fp = av.footprint();
    let mut best = TTC_CAP;
    for actor in &world.actors {
        let gap = av_fp.distance(&actor.footprint());
        if gap <= 0.0 {
            return 0.0;
        }
        let line = actor.position() - av.pose.position;
        let dist = line.norm();
        if dist == 0.0 {
            return 0.0;
        }
        let closing = -(actor.velocity() - av.velocity).dot(line) / dist;
        if closing > 0.0 {
            best = best.min(gap / closing);
        }
    }
    best.clamp(0.0, TTC_CAP)
}

/// Route completion in percent, from the furthest progress reached.
pub fn rc(world: &WorldState) -> f64 {
    (100.0 * world.progress / world.route.total_length).clamp(0.0, 100.0)
}

fn raw_ttc(ttc: f64) -> f64 {
    1.0 / (1.0 + (ttc + 1.0).ln())
}

/// Fixed min-max map of the raw TTC transform onto [0, 1].
pub fn nor(raw: f64) -> f64 {
    let hi = 1.0;
    let lo = raw_ttc(TTC_CAP);
    ((raw - lo) / (hi - lo)).clamp(0.0, 1.0)
}

pub fn reward_ttc(ttc: f64, collided: bool) -> Result<f64> {
    if !ttc.is_finite() || ttc < 0.0 {
        return Err(Error::Domain(format!("ttc must be finite and >= 0, got {ttc}")));
    }
    if collided {
        return Ok(1.0);
    }
    Ok(nor(raw_ttc(ttc.min(TTC_CAP))))
}

pub fn reward_rc(rc: f64) -> Result<f64> {
    if !(0.0..=100.0).contains(&rc) {
        return Err(Error::Domain(format!("rc must lie in [0, 100], got {rc}")));
    }
    if rc == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 - rc / 100.0)
}

/// Default time budget: the route driven at half the speed limit.
pub fn default_budget(total_length: f64, speed_limit: f64) -> f64 {
    total_length / (0.5 * speed_limit)
}

/// Whether the route can no longer be finished in time. Timeouts count as a
/// violation whenever the route is incomplete.
pub fn r2_violated(world: &WorldState, budget: f64) -> Result<bool> {
    if !(budget > 0.0) || !budget.is_finite() {
        return Err(Error::Config(format!("time budget must be > 0, got {budget}")));
    }
    let remaining = (world.route.total_length - world.progress).max(0.0);
    Ok(r2_predicate(
        world.termination,
        remaining,
        world.route.speed_limit,
        world.elapsed,
        budget,
    ))
}

/// Pure form of [`r2_violated`].
pub fn r2_predicate(
    termination: Option<Termination>,
    remaining: f64,
    speed_limit: f64,
    elapsed: f64,
    budget: f64,
) -> bool {
    if termination == Some(Termination::Timeout) {
        return remaining > 0.0;
    }
    remaining / speed_limit > budget - elapsed
}
