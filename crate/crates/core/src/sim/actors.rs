use serde::{Deserialize, Serialize};

use super::geometry::{Footprint, Vec2};

pub const VEHICLE_LENGTH: f64 = 4.5;
pub const VEHICLE_WIDTH: f64 = 2.0;
pub const PEDESTRIAN_RADIUS: f64 = 0.5;
pub const WALK_SPEED: f64 = 0.94;
pub const RUN_SPEED: f64 = 1.43;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Behavior {
    ChangeLeft,
    ChangeRight,
    KeepLane,
}

/// Walking direction relative to the AV's travel direction. The lateral
/// component always points toward the AV's side of the road.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WalkDirection {
    Aligned45,
    Opposed45,
    Perpendicular,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneChange {
    pub target: usize,
    /// +1 toward the left neighbour, -1 toward the right.
    pub side: f64,
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: u32,
    pub lane: usize,
    /// Arc length along the current lane centerline.
    pub s: f64,
    /// Lateral offset from the centerline, positive to the left.
    pub offset: f64,
    pub speed: f64,
    pub cruise_speed: f64,
    pub behavior: Behavior,
    pub lane_change: Option<LaneChange>,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pedestrian {
    pub id: u32,
    pub pose: Pose,
    pub direction: WalkDirection,
    pub walk_speed: f64,
    pub halted: bool,
}

impl Pedestrian {
    pub fn speed(&self) -> f64 {
        if self.halted {
            0.0
        } else {
            self.walk_speed
        }
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::from_angle(self.pose.heading) * self.speed()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Actor {
    Vehicle(Vehicle),
    Pedestrian(Pedestrian),
}

impl Actor {
    pub fn id(&self) -> u32 {
        match self {
            Actor::Vehicle(v) => v.id,
            Actor::Pedestrian(p) => p.id,
        }
    }

    pub fn pose(&self) -> Pose {
        match self {
            Actor::Vehicle(v) => v.pose,
            Actor::Pedestrian(p) => p.pose,
        }
    }

    pub fn position(&self) -> Vec2 {
        self.pose().position
    }

    pub fn speed(&self) -> f64 {
        match self {
            Actor::Vehicle(v) => v.speed,
            Actor::Pedestrian(p) => p.speed(),
        }
    }

    pub fn velocity(&self) -> Vec2 {
        match self {
            Actor::Vehicle(v) => Vec2::from_angle(v.pose.heading) * v.speed,
            Actor::Pedestrian(p) => p.velocity(),
        }
    }

    pub fn footprint(&self) -> Footprint {
        match self {
            Actor::Vehicle(v) => vehicle_footprint(v.pose),
            Actor::Pedestrian(p) => Footprint::Disc {
                center: p.pose.position,
                radius: PEDESTRIAN_RADIUS,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Actor::Vehicle(_) => "vehicle",
            Actor::Pedestrian(_) => "pedestrian",
        }
    }
}

pub fn vehicle_footprint(pose: Pose) -> Footprint {
    Footprint::Rect {
        center: pose.position,
        heading: pose.heading,
        half_length: VEHICLE_LENGTH / 2.0,
        half_width: VEHICLE_WIDTH / 2.0,
    }
}

/// Ego vehicle state with the kinematic derivatives exposed to the agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Av {
    pub pose: Pose,
    pub speed: f64,
    pub velocity: Vec2,
    pub acceleration: Vec2,
    pub yaw_rate: f64,
    pub steer: f64,
}

impl Av {
    pub fn at_rest(pose: Pose) -> Self {
        Av {
            pose,
            speed: 0.0,
            velocity: Vec2::ZERO,
            acceleration: Vec2::ZERO,
            yaw_rate: 0.0,
            steer: 0.0,
        }
    }

    pub fn footprint(&self) -> Footprint {
        vehicle_footprint(self.pose)
    }
}
