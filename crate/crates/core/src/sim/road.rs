//! Road layouts and routes.
//!
//! Layouts are stored as versioned TOML assets, one file per road:
//!
//! ```toml
//! version = 1
//! road_id = 1
//! name = "straight multi-lane"
//! category = "straight"
//! bounds = { min = [-90.0, -14.0], max = [170.0, 14.0] }
//!
//! [[lanes]]
//! id = 0
//! speed_limit = 13.89
//! left = 1          # optional same-direction neighbour
//! right = 2         # optional
//! next = 3          # optional successor when the lane ends
//! points = [[-80.0, 0.0], [160.0, 0.0]]   # travel direction = point order
//!
//! [[sidewalks]]
//! points = [[-80.0, -9.5], [160.0, -9.5]]
//!
//! [route]
//! speed_limit = 13.89
//! start = [0.0, 0.0]
//! end = [80.0, 0.0]
//! waypoints = [[0.0, 0.0], [80.0, 0.0]]
//! ```

use serde::Deserialize;

use super::geometry::{Polyline, Projection, Vec2};
use crate::{Error, Result};

pub const LANE_WIDTH: f64 = 3.5;
pub const ASSET_VERSION: u32 = 1;
pub const ROAD_IDS: std::ops::RangeInclusive<u8> = 1..=6;

const BUILTIN: [&str; 6] = [
    include_str!("../../assets/roads/road1.toml"),
    include_str!("../../assets/roads/road2.toml"),
    include_str!("../../assets/roads/road3.toml"),
    include_str!("../../assets/roads/road4.toml"),
    include_str!("../../assets/roads/road5.toml"),
    include_str!("../../assets/roads/road6.toml"),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Vec2,
    pub max: Vec2,
}

impl Bounds {
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

#[derive(Debug, Clone)]
pub struct Lane {
    pub id: u32,
    pub centerline: Polyline,
    pub width: f64,
    pub speed_limit: f64,
    /// Index (into `RoadMap::lanes`) of the adjacent same-direction lane.
    pub left: Option<usize>,
    pub right: Option<usize>,
    pub next: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RoadMap {
    pub road_id: u8,
    pub name: String,
    pub category: String,
    pub lanes: Vec<Lane>,
    pub sidewalks: Vec<Polyline>,
    pub bounds: Bounds,
}

#[derive(Debug, Clone)]
pub struct Route {
    pub waypoints: Polyline,
    pub total_length: f64,
    pub speed_limit: f64,
}

impl Route {
    pub fn start(&self) -> Vec2 {
        self.waypoints.points()[0]
    }

    pub fn end(&self) -> Vec2 {
        *self.waypoints.points().last().expect("route has points")
    }
}

/// Nearest lane point: lane index plus projection.
#[derive(Debug, Clone, Copy)]
pub struct LaneHit {
    pub lane: usize,
    pub projection: Projection,
}

impl RoadMap {
    /// Nearest lane-centerline point to `p`.
    pub fn nearest_lane(&self, p: Vec2) -> Option<LaneHit> {
        self.lanes
            .iter()
            .enumerate()
            .map(|(i, l)| LaneHit {
                lane: i,
                projection: l.centerline.project(p),
            })
            .min_by(|a, b| a.projection.distance.total_cmp(&b.projection.distance))
    }

    /// Nearest walkable point (sidewalk or lane centerline).
    pub fn nearest_walkable(&self, p: Vec2) -> Option<Projection> {
        self.sidewalks
            .iter()
            .map(|s| s.project(p))
            .chain(self.lanes.iter().map(|l| l.centerline.project(p)))
            .min_by(|a, b| a.distance.total_cmp(&b.distance))
    }

    /// Clusters of lane-centerline crossings (intersections), 10 m apart at
    /// least. Adjacent and opposing parallel lanes never cross, so every
    /// crossing belongs to a junction.
    pub fn intersections(&self) -> Vec<Vec2> {
        let mut pts: Vec<Vec2> = Vec::new();
        for (i, a) in self.lanes.iter().enumerate() {
            for b in &self.lanes[i + 1..] {
                for p in a.centerline.crossings(&b.centerline) {
                    if pts.iter().all(|q| q.distance(p) > 10.0) {
                        pts.push(p);
                    }
                }
            }
        }
        pts
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RoadAsset {
    version: u32,
    road_id: u8,
    name: String,
    category: String,
    bounds: BoundsAsset,
    lanes: Vec<LaneAsset>,
    #[serde(default)]
    sidewalks: Vec<SidewalkAsset>,
    route: RouteAsset,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundsAsset {
    min: [f64; 2],
    max: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LaneAsset {
    id: u32,
    speed_limit: f64,
    #[serde(default)]
    left: Option<u32>,
    #[serde(default)]
    right: Option<u32>,
    #[serde(default)]
    next: Option<u32>,
    points: Vec<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SidewalkAsset {
    points: Vec<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RouteAsset {
    speed_limit: f64,
    start: [f64; 2],
    end: [f64; 2],
    waypoints: Vec<[f64; 2]>,
}

fn to_vec(points: &[[f64; 2]]) -> Vec<Vec2> {
    points.iter().map(|p| Vec2::new(p[0], p[1])).collect()
}

/// Parses and validates a road asset.
pub fn parse_road_asset(text: &str) -> Result<(RoadMap, Route)> {
    let asset: RoadAsset =
        toml::from_str(text).map_err(|e| Error::Format(format!("road asset: {e}")))?;
    if asset.version != ASSET_VERSION {
        return Err(Error::Format(format!(
            "unsupported road asset version {} (expected {ASSET_VERSION})",
            asset.version
        )));
    }
    let bounds = Bounds {
        min: Vec2::new(asset.bounds.min[0], asset.bounds.min[1]),
        max: Vec2::new(asset.bounds.max[0], asset.bounds.max[1]),
    };
    let index_of = |id: u32| -> Result<usize> {
        asset
            .lanes
            .iter()
            .position(|l| l.id == id)
            .ok_or_else(|| Error::Format(format!("unknown lane id {id}")))
    };
    let mut lanes = Vec::with_capacity(asset.lanes.len());
    for l in &asset.lanes {
        if !(l.speed_limit > 0.0) {
            return Err(Error::Format(format!("lane {}: speed limit must be > 0", l.id)));
        }
        let pts = to_vec(&l.points);
        if let Some(p) = pts.iter().find(|p| !bounds.contains(**p)) {
            return Err(Error::Format(format!(
                "lane {}: point ({}, {}) outside bounds",
                l.id, p.x, p.y
            )));
        }
        let centerline = Polyline::new(pts)
            .ok_or_else(|| Error::Format(format!("lane {}: needs at least 2 points", l.id)))?;
        lanes.push(Lane {
            id: l.id,
            centerline,
            width: LANE_WIDTH,
            speed_limit: l.speed_limit,
            left: l.left.map(index_of).transpose()?,
            right: l.right.map(index_of).transpose()?,
            next: l.next.map(index_of).transpose()?,
        });
    }
    if lanes.is_empty() {
        return Err(Error::Format("road has no lanes".into()));
    }
    let sidewalks = asset
        .sidewalks
        .iter()
        .map(|s| {
            Polyline::new(to_vec(&s.points))
                .ok_or_else(|| Error::Format("sidewalk needs at least 2 points".into()))
        })
        .collect::<Result<Vec<_>>>()?;

    let r = &asset.route;
    let waypoints = Polyline::new(to_vec(&r.waypoints))
        .ok_or_else(|| Error::Format("route needs at least 2 waypoints".into()))?;
    let start = Vec2::new(r.start[0], r.start[1]);
    let end = Vec2::new(r.end[0], r.end[1]);
    if waypoints.points()[0].distance(start) > 1e-3
        || waypoints.points().last().unwrap().distance(end) > 1e-3
    {
        return Err(Error::Format("route endpoints do not match waypoints".into()));
    }
    if !(r.speed_limit > 0.0) {
        return Err(Error::Format("route speed limit must be > 0".into()));
    }
    let total_length = waypoints.length();
    let route = Route {
        waypoints,
        total_length,
        speed_limit: r.speed_limit,
    };
    let map = RoadMap {
        road_id: asset.road_id,
        name: asset.name,
        category: asset.category,
        lanes,
        sidewalks,
        bounds,
    };
    Ok((map, route))
}

/// Loads one of the six built-in layouts.
pub fn load_road(road_id: u8) -> Result<(RoadMap, Route)> {
    if !ROAD_IDS.contains(&road_id) {
        return Err(Error::Config(format!(
            "road id out of range: {road_id} (valid: {}..={})",
            ROAD_IDS.start(),
            ROAD_IDS.end()
        )));
    }
    let (map, route) = parse_road_asset(BUILTIN[road_id as usize - 1])?;
    debug_assert_eq!(map.road_id, road_id);
    Ok((map, route))
}
