//! Per-tick trace records. One record serializes to one JSON line.

use serde::{Deserialize, Serialize};

use super::actors::Actor;
use super::world::WorldState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvTrace {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
    pub accel: [f64; 2],
    pub yaw_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorTrace {
    pub id: u32,
    pub kind: String,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub t: f64,
    pub av: AvTrace,
    pub actors: Vec<ActorTrace>,
    pub collision: bool,
    pub ttc: f64,
    pub rc: f64,
}

impl TickRecord {
    pub fn capture(world: &WorldState, ttc: f64, rc: f64) -> Self {
        let av = &world.av;
        TickRecord {
            tick: world.tick_count,
            t: world.elapsed,
            av: AvTrace {
                x: av.pose.position.x,
                y: av.pose.position.y,
                heading: av.pose.heading,
                speed: av.speed,
                accel: [av.acceleration.x, av.acceleration.y],
                yaw_rate: av.yaw_rate,
            },
            actors: world.actors.iter().map(actor_trace).collect(),
            collision: world.collision_latched,
            ttc,
            rc,
        }
    }
}

fn actor_trace(a: &Actor) -> ActorTrace {
    let pose = a.pose();
    ActorTrace {
        id: a.id(),
        kind: a.kind().to_string(),
        x: pose.position.x,
        y: pose.position.y,
        heading: pose.heading,
        speed: a.speed(),
    }
}
