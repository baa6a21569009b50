//! Rule-based AV controller: pure-pursuit steering on the route, speed
//! tracking, and headway-based braking for obstacles in a forward cone.

use super::geometry::wrap_angle;
use super::world::WorldState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCommand {
    /// [0, 1]
    pub throttle: f64,
    /// [0, 1]
    pub brake: f64,
    /// [-1, 1], positive steers left.
    pub steer: f64,
}

/// Closest obstacle inside the detection cone: (actor id, footprint gap).
pub fn nearest_obstacle_in_cone(world: &WorldState) -> Option<(u32, f64)> {
    let p = &world.params;
    let av = &world.av;
    let av_fp = av.footprint();
    world
        .actors
        .iter()
        .filter_map(|a| {
            let rel = a.position() - av.pose.position;
            let dist = rel.norm();
            if dist > p.cone_range {
                return None;
            }
            let bearing = wrap_angle(rel.angle() - av.pose.heading);
            if bearing.abs() > p.cone_half_angle {
                return None;
            }
            Some((a.id(), av_fp.distance(&a.footprint())))
        })
        .min_by(|x, y| x.1.total_cmp(&y.1))
}

pub fn target_speed(world: &WorldState) -> f64 {
    let p = &world.params;
    let limit = world.route.speed_limit;
    let mut v = (p.comfort_factor * limit).min(limit);
    let kappa = world.route.waypoints.max_curvature(world.route_s, 20.0);
    if kappa > 1e-6 {
        v = v.min((p.max_lateral_accel / kappa).sqrt());
    }
    v
}

pub fn av_control(world: &WorldState) -> ControlCommand {
    let p = &world.params;
    let av = &world.av;
    let route = &world.route.waypoints;

    // steering
    let lookahead = (3.0 + 0.4 * av.speed).clamp(4.0, 10.0);
    let target = route.point_at(world.route_s + lookahead);
    let to_target = target - av.pose.position;
    let alpha = wrap_angle(to_target.angle() - av.pose.heading);
    let ld = to_target.norm().max(1e-3);
    let steer_angle = (2.0 * p.wheelbase * alpha.sin() / ld).atan();
    let steer = (steer_angle / p.max_steer).clamp(-1.0, 1.0);

    // speed tracking
    let err = target_speed(world) - av.speed;
    let (mut throttle, mut brake) = if err < -0.5 {
        (0.0, (-0.1 * err).clamp(0.0, 1.0))
    } else {
        ((0.6 * err).clamp(0.0, 1.0), 0.0)
    };

    // obstacle braking
    if let Some((_, gap)) = nearest_obstacle_in_cone(world) {
        let headway = (gap - p.standstill_gap) / av.speed.max(0.5);
        let obstacle_brake = if headway < p.emergency_headway {
            1.0
        } else if headway < p.brake_headway {
            (p.brake_headway - headway) / (p.brake_headway - p.emergency_headway)
        } else {
            0.0
        };
        if obstacle_brake > 0.0 {
            throttle = 0.0;
            brake = brake.max(obstacle_brake);
        }
    }

    ControlCommand {
        throttle,
        brake,
        steer,
    }
}
