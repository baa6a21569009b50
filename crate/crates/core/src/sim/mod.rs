//! Deterministic fixed-step 2D driving simulator.
//!
//! The AV follows its route under a rule-based controller while NPC vehicles
//! and pedestrians spawned by the testing agent move around it. One call to
//! [`WorldState::tick`] is one simulator instant.

pub mod actors;
pub mod controller;
pub mod geometry;
pub mod params;
pub mod road;
pub mod trace;
pub mod world;

pub use actors::{Actor, Av, Behavior, Pedestrian, Pose, Vehicle, WalkDirection};
pub use controller::{av_control, ControlCommand};
pub use geometry::{Footprint, Polyline, Vec2};
pub use params::SimParams;
pub use road::{load_road, parse_road_asset, RoadMap, Route};
pub use world::{RejectReason, SpawnResult, SpawnSpec, Termination, WorldState};
