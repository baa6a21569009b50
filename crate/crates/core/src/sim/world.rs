use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::actors::{
    Actor, Av, Behavior, LaneChange, Pedestrian, Pose, Vehicle, WalkDirection, PEDESTRIAN_RADIUS,
    RUN_SPEED, VEHICLE_LENGTH, WALK_SPEED,
};
use super::controller::{av_control, ControlCommand};
use super::geometry::{Footprint, Vec2};
use super::params::SimParams;
use super::road::{RoadMap, Route, LANE_WIDTH};
use crate::{seed, Error, Result};

/// Spawn request, expressed in the AV frame: `along` is positive ahead of the
/// AV, `cross` is positive to its right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpawnSpec {
    Vehicle {
        along: f64,
        cross: f64,
        behavior: Behavior,
    },
    Pedestrian {
        along: f64,
        cross: f64,
        direction: WalkDirection,
        speed: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    OutOfBounds,
    OffLane,
    Clearance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpawnResult {
    Spawned(u32),
    Rejected(RejectReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Completed,
    Collided,
    Timeout,
}

#[derive(Debug, Clone)]
pub struct WorldState {
    pub road: Arc<RoadMap>,
    pub route: Arc<Route>,
    pub params: SimParams,
    pub av: Av,
    pub actors: Vec<Actor>,
    pub tick_count: u64,
    pub elapsed: f64,
    /// Arc length of the AV's current projection onto the route.
    pub route_s: f64,
    /// Largest route arc length reached so far.
    pub progress: f64,
    pub collision_latched: bool,
    pub collided_with: Option<u32>,
    pub termination: Option<Termination>,
    pub last_command: Option<ControlCommand>,
    next_id: u32,
    rng: ChaCha8Rng,
}

impl WorldState {
    /// Fresh world with the AV at rest at the route start.
    pub fn new(road: Arc<RoadMap>, route: Arc<Route>, params: SimParams, seed: u64) -> Self {
        let heading = route.waypoints.heading_at(0.0);
        let av = Av::at_rest(Pose {
            position: route.start(),
            heading,
        });
        WorldState {
            road,
            route,
            params,
            av,
            actors: Vec::new(),
            tick_count: 0,
            elapsed: 0.0,
            route_s: 0.0,
            progress: 0.0,
            collision_latched: false,
            collided_with: None,
            termination: None,
            last_command: None,
            next_id: 1,
            rng: seed::rng(seed),
        }
    }

    pub fn collision_latched(&self) -> bool {
        self.collision_latched
    }

    pub fn is_terminated(&self) -> bool {
        self.termination.is_some()
    }

    /// Requested spawn point in world coordinates.
    pub fn spawn_target(&self, along: f64, cross: f64) -> Vec2 {
        let f = Vec2::from_angle(self.av.pose.heading);
        self.av.pose.position + f * along - f.perp() * cross
    }

    fn clear_of_actors(&self, p: Vec2) -> bool {
        self.actors
            .iter()
            .all(|a| a.position().distance(p) >= self.params.spawn_clearance)
    }

    /// Places a new actor. Rejections leave the world untouched.
    pub fn spawn_actor(&mut self, spec: &SpawnSpec) -> SpawnResult {
        match *spec {
            SpawnSpec::Vehicle {
                along,
                cross,
                behavior,
            } => self.spawn_vehicle(along, cross, behavior),
            SpawnSpec::Pedestrian {
                along,
                cross,
                direction,
                speed,
            } => self.spawn_pedestrian(along, cross, direction, speed),
        }
    }

    fn spawn_vehicle(&mut self, along: f64, cross: f64, behavior: Behavior) -> SpawnResult {
        let target = self.spawn_target(along, cross);
        if !self.road.bounds.contains(target) {
            return SpawnResult::Rejected(RejectReason::OutOfBounds);
        }
        let Some(hit) = self.road.nearest_lane(target) else {
            return SpawnResult::Rejected(RejectReason::OffLane);
        };
        if hit.projection.distance > self.params.snap_radius {
            return SpawnResult::Rejected(RejectReason::OffLane);
        }
        let lane = &self.road.lanes[hit.lane];
        let position = hit.projection.foot;
        let pose = Pose {
            position,
            heading: lane.centerline.heading_at(hit.projection.s),
        };
        if !self.clear_of_actors(position)
            || super::actors::vehicle_footprint(pose).overlaps(&self.av.footprint())
        {
            return SpawnResult::Rejected(RejectReason::Clearance);
        }
        let (lo, hi) = self.params.npc_cruise_factor;
        let factor = if hi > lo { self.rng.random_range(lo..hi) } else { lo };
        let cruise_speed = factor * lane.speed_limit;
        let lane_change = match behavior {
            Behavior::KeepLane => None,
            Behavior::ChangeLeft => self.lane_change_target(hit.lane, position, 1.0),
            Behavior::ChangeRight => self.lane_change_target(hit.lane, position, -1.0),
        };
        let id = self.next_id;
        self.next_id += 1;
        self.actors.push(Actor::Vehicle(Vehicle {
            id,
            lane: hit.lane,
            s: hit.projection.s,
            offset: 0.0,
            speed: self.av.speed.min(cruise_speed),
            cruise_speed,
            behavior,
            lane_change,
            pose,
        }));
        SpawnResult::Spawned(id)
    }

    /// Adjacent lane usable for a lane change from `position`, if any.
    fn lane_change_target(&self, lane: usize, position: Vec2, side: f64) -> Option<LaneChange> {
        let l = &self.road.lanes[lane];
        let target = if side > 0.0 { l.left } else { l.right }?;
        let pr = self.road.lanes[target].centerline.project(position);
        let len = self.road.lanes[target].centerline.length();
        let usable = pr.distance > 0.7 * LANE_WIDTH
            && pr.distance < 1.3 * LANE_WIDTH
            && pr.s > 0.0
            && pr.s < len - VEHICLE_LENGTH;
        usable.then_some(LaneChange {
            target,
            side,
            elapsed: 0.0,
        })
    }

    fn spawn_pedestrian(
        &mut self,
        along: f64,
        cross: f64,
        direction: WalkDirection,
        speed: f64,
    ) -> SpawnResult {
        debug_assert!(speed == WALK_SPEED || speed == RUN_SPEED);
        let target = self.spawn_target(along, cross);
        if !self.road.bounds.contains(target) {
            return SpawnResult::Rejected(RejectReason::OutOfBounds);
        }
        let Some(pr) = self.road.nearest_walkable(target) else {
            return SpawnResult::Rejected(RejectReason::OffLane);
        };
        if pr.distance > self.params.snap_radius {
            return SpawnResult::Rejected(RejectReason::OffLane);
        }
        let position = pr.foot;
        if !self.clear_of_actors(position) {
            return SpawnResult::Rejected(RejectReason::Clearance);
        }
        let f = Vec2::from_angle(self.av.pose.heading);
        // lateral unit pointing from the pedestrian back toward the AV's path
        let inward = f.perp() * cross.signum();
        let dir = match direction {
            WalkDirection::Perpendicular => inward,
            WalkDirection::Aligned45 => (f + inward).normalized(),
            WalkDirection::Opposed45 => (inward - f).normalized(),
        };
        let id = self.next_id;
        self.next_id += 1;
        self.actors.push(Actor::Pedestrian(Pedestrian {
            id,
            pose: Pose {
                position,
                heading: dir.angle(),
            },
            direction,
            walk_speed: speed,
            halted: false,
        }));
        SpawnResult::Spawned(id)
    }

    /// Advances the world by one tick.
    pub fn tick(&mut self) -> Result<()> {
        if self.termination.is_some() {
            return Err(Error::Contract("tick on a terminated world".into()));
        }
        let cmd = av_control(self);
        self.step_vehicles();
        self.step_pedestrians();
        self.step_av(&cmd);
        self.last_command = Some(cmd);
        self.tick_count += 1;
        self.elapsed = self.tick_count as f64 * self.params.dt;

        let pr = self.route.waypoints.project(self.av.pose.position);
        self.route_s = pr.s;
        if pr.s > self.progress {
            self.progress = pr.s;
        }
        if self.route.total_length - self.progress <= 1.0 {
            self.progress = self.route.total_length;
        }

        let av_fp = self.av.footprint();
        if let Some(hit) = self.actors.iter().find(|a| av_fp.overlaps(&a.footprint())) {
            if !self.collision_latched {
                self.collided_with = Some(hit.id());
            }
            self.collision_latched = true;
        }
        Ok(())
    }

    fn step_av(&mut self, cmd: &ControlCommand) {
        let p = &self.params;
        let av = &mut self.av;
        let accel = p.max_accel * cmd.throttle - p.max_decel * cmd.brake;
        av.speed = (av.speed + accel * p.dt).max(0.0);
        av.steer = cmd.steer;
        let delta = cmd.steer * p.max_steer;
        let yaw_rate = av.speed / p.wheelbase * delta.tan();
        av.pose.heading = super::geometry::wrap_angle(av.pose.heading + yaw_rate * p.dt);
        av.yaw_rate = yaw_rate;
        let velocity = Vec2::from_angle(av.pose.heading) * av.speed;
        av.acceleration = (velocity - av.velocity) * (1.0 / p.dt);
        av.velocity = velocity;
        av.pose.position += velocity * p.dt;
    }

    fn step_vehicles(&mut self) {
        let snapshot: Vec<(Footprint, Vec2, Vec2)> = self
            .actors
            .iter()
            .map(|a| (a.footprint(), a.position(), a.velocity()))
            .chain(std::iter::once((
                self.av.footprint(),
                self.av.pose.position,
                self.av.velocity,
            )))
            .collect();
        let p = self.params.clone();
        let road = Arc::clone(&self.road);
        for (idx, actor) in self.actors.iter_mut().enumerate() {
            let Actor::Vehicle(v) = actor else { continue };
            let lane = &road.lanes[v.lane];
            let line = &lane.centerline;
            let heading_dir = Vec2::from_angle(v.pose.heading);

            // leader in the own lane corridor
            let mut leader: Option<(f64, f64)> = None;
            for (j, (fp, pos, vel)) in snapshot.iter().enumerate() {
                if j == idx {
                    continue;
                }
                let pr = line.project(*pos);
                let ds = pr.s - v.s;
                if ds <= 0.0 || ds > 50.0 || (pr.lateral - v.offset).abs() > 2.0 {
                    continue;
                }
                let other_half = match fp {
                    Footprint::Rect { half_length, .. } => *half_length,
                    Footprint::Disc { radius, .. } => *radius,
                };
                let gap = ds - VEHICLE_LENGTH / 2.0 - other_half;
                if leader.is_none_or(|(g, _)| gap < g) {
                    leader = Some((gap, vel.dot(heading_dir)));
                }
            }
            let free = 1.0 * (v.cruise_speed - v.speed);
            let accel = match leader {
                Some((gap, lead_speed)) => {
                    let desired = p.npc_standstill_gap + p.npc_headway * v.speed;
                    free.min(0.3 * (gap - desired) + 0.8 * (lead_speed - v.speed))
                }
                None => free,
            }
            .clamp(-p.npc_accel_limit, p.npc_accel_limit);
            v.speed = (v.speed + accel * p.dt).clamp(0.0, lane.speed_limit);
            v.s += v.speed * p.dt;

            let mut lateral_rate = 0.0;
            if let Some(lc) = v.lane_change.as_mut() {
                lc.elapsed += p.dt;
                let f = (lc.elapsed / p.lane_change_duration).min(1.0);
                v.offset = lc.side * LANE_WIDTH * (3.0 * f * f - 2.0 * f * f * f);
                lateral_rate =
                    lc.side * LANE_WIDTH * 6.0 * (f - f * f) / p.lane_change_duration;
                if f >= 1.0 {
                    let pos = line.point_at(v.s)
                        + Vec2::from_angle(line.heading_at(v.s)).perp() * v.offset;
                    let target = lc.target;
                    let pr = road.lanes[target].centerline.project(pos);
                    v.lane = target;
                    v.s = pr.s;
                    v.offset = 0.0;
                    v.lane_change = None;
                    lateral_rate = 0.0;
                }
            }
            let len = road.lanes[v.lane].centerline.length();
            if v.s >= len {
                match road.lanes[v.lane].next {
                    Some(next) => {
                        let end = road.lanes[v.lane].centerline.point_at(len);
                        let pr = road.lanes[next].centerline.project(end);
                        v.lane = next;
                        v.s = pr.s + (v.s - len);
                    }
                    None => {
                        v.s = len;
                        v.speed = 0.0;
                    }
                }
            }
            let line = &road.lanes[v.lane].centerline;
            let lane_heading = line.heading_at(v.s);
            v.pose.position =
                line.point_at(v.s) + Vec2::from_angle(lane_heading).perp() * v.offset;
            v.pose.heading = lane_heading + lateral_rate.atan2(v.speed.max(0.5));
        }
    }

    fn step_pedestrians(&mut self) {
        let snapshot: Vec<(u32, Footprint)> = self
            .actors
            .iter()
            .map(|a| (a.id(), a.footprint()))
            .chain(std::iter::once((0, self.av.footprint())))
            .collect();
        let p = &self.params;
        for actor in self.actors.iter_mut() {
            let Actor::Pedestrian(ped) = actor else { continue };
            let me = Footprint::Disc {
                center: ped.pose.position,
                radius: PEDESTRIAN_RADIUS,
            };
            ped.halted = snapshot
                .iter()
                .any(|(id, fp)| *id != ped.id && me.distance(fp) < p.safe_walk_distance);
            if !ped.halted {
                ped.pose.position += ped.velocity() * p.dt;
            }
        }
    }
}
