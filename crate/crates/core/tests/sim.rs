use std::sync::Arc;

use critigen_core::momdp::{action_catalog, run_time_step, DrivingEnv, EpisodeShape, Environment};
use critigen_core::sim::actors::{Pedestrian, Vehicle, RUN_SPEED, WALK_SPEED};
use critigen_core::sim::controller::av_control;
use critigen_core::sim::{
    load_road, Actor, Behavior, Pose, RejectReason, SimParams, SpawnResult, SpawnSpec, Vec2,
    WalkDirection, WorldState,
};
use critigen_core::Error;
use proptest::prelude::*;

fn world(road_id: u8, seed: u64) -> WorldState {
    let (road, route) = load_road(road_id).unwrap();
    WorldState::new(Arc::new(road), Arc::new(route), SimParams::default(), seed)
}

fn actions() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0usize..36, 6)
}

#[test]
fn unknown_road_is_a_config_error() {
    for id in [0u8, 7, 255] {
        match load_road(id) {
            Err(Error::Config(msg)) => assert!(msg.contains("road id out of range"), "{msg}"),
            other => panic!("road {id}: {other:?}"),
        }
    }
}

#[test]
fn spawn_behind_and_right_lands_on_adjacent_lane() {
    let mut w = world(1, 3);
    assert_eq!(w.av.pose.heading, 0.0);
    let spec = SpawnSpec::Vehicle {
        along: -20.0,
        cross: 3.5,
        behavior: Behavior::ChangeLeft,
    };
    let SpawnResult::Spawned(id) = w.spawn_actor(&spec) else {
        panic!("rejected");
    };
    let a = w.actors.iter().find(|a| a.id() == id).unwrap();
    let p = a.position();
    assert!((p.x + 20.0).abs() < 1e-9 && (p.y + 3.5).abs() < 1e-9, "{p:?}");
    assert_eq!(a.pose().heading, 0.0);
    let Actor::Vehicle(v) = a else { panic!() };
    assert!(v.lane_change.is_some());
}

#[test]
fn out_of_bounds_spawn_leaves_world_unchanged() {
    let mut w = world(1, 3);
    let spec = SpawnSpec::Vehicle {
        along: 0.0,
        cross: 40.0,
        behavior: Behavior::KeepLane,
    };
    assert_eq!(
        w.spawn_actor(&spec),
        SpawnResult::Rejected(RejectReason::OutOfBounds)
    );
    assert!(w.actors.is_empty());
}

#[test]
fn off_lane_spawn_is_rejected() {
    let mut w = world(1, 3);
    // y = -6 is 2.5 m from the nearest lane centerline
    let spec = SpawnSpec::Vehicle {
        along: 10.0,
        cross: 6.0,
        behavior: Behavior::KeepLane,
    };
    let spawned = w.spawn_actor(&spec);
    assert_eq!(spawned, SpawnResult::Rejected(RejectReason::OffLane));
}

#[test]
fn repeated_pedestrian_spec_violates_clearance() {
    let mut w = world(1, 3);
    let spec = SpawnSpec::Pedestrian {
        along: 10.0,
        cross: 10.0,
        direction: WalkDirection::Perpendicular,
        speed: WALK_SPEED,
    };
    assert!(matches!(w.spawn_actor(&spec), SpawnResult::Spawned(_)));
    assert_eq!(
        w.spawn_actor(&spec),
        SpawnResult::Rejected(RejectReason::Clearance)
    );
    assert_eq!(w.actors.len(), 1);
}

#[test]
fn pedestrian_faces_the_av_side() {
    let mut w = world(1, 3);
    for cross in [-10.0, 10.0] {
        let spec = SpawnSpec::Pedestrian {
            along: 10.0,
            cross,
            direction: WalkDirection::Perpendicular,
            speed: RUN_SPEED,
        };
        let SpawnResult::Spawned(id) = w.spawn_actor(&spec) else {
            panic!("rejected at cross {cross}");
        };
        let a = w.actors.iter().find(|a| a.id() == id).unwrap();
        let to_av = w.av.pose.position - a.position();
        assert!(a.velocity().dot(to_av) > 0.0);
    }
}

#[test]
fn av_accelerates_from_rest_on_empty_road() {
    let mut w = world(1, 1);
    let mut last = w.av.speed;
    for _ in 0..40 {
        w.tick().unwrap();
        assert!(w.av.speed > last);
        last = w.av.speed;
    }
    assert_eq!(w.last_command.unwrap().brake, 0.0);
}

#[test]
fn pedestrian_near_av_halts() {
    let mut w = world(1, 1);
    // AV front bumper at x = 2.25; pedestrian disc edge 1.25 m ahead of it
    w.actors.push(Actor::Pedestrian(Pedestrian {
        id: 99,
        pose: Pose {
            position: Vec2::new(4.0, 0.0),
            heading: std::f64::consts::FRAC_PI_2,
        },
        direction: WalkDirection::Perpendicular,
        walk_speed: WALK_SPEED,
        halted: false,
    }));
    w.tick().unwrap();
    let Actor::Pedestrian(p) = &w.actors[0] else { panic!() };
    assert!(p.halted);
    assert_eq!(p.speed(), 0.0);
    assert_eq!(p.pose.position, Vec2::new(4.0, 0.0));
}

fn parked(id: u32, lane: usize, x: f64, y: f64) -> Actor {
    Actor::Vehicle(Vehicle {
        id,
        lane,
        s: x + 80.0,
        offset: 0.0,
        speed: 0.0,
        cruise_speed: 0.0,
        behavior: Behavior::KeepLane,
        lane_change: None,
        pose: Pose {
            position: Vec2::new(x, y),
            heading: 0.0,
        },
    })
}

#[test]
fn controller_without_obstacles_never_brakes() {
    let mut w = world(1, 1);
    for _ in 0..100 {
        let cmd = av_control(&w);
        assert_eq!(cmd.brake, 0.0);
        w.tick().unwrap();
    }
}

#[test]
fn controller_emergency_brakes_close_obstacle() {
    let mut w = world(1, 1);
    for _ in 0..60 {
        w.tick().unwrap();
    }
    let x = w.av.pose.position.x + 8.0;
    w.actors.push(parked(50, 0, x, 0.0));
    let cmd = av_control(&w);
    assert_eq!(cmd.brake, 1.0);
    assert_eq!(cmd.throttle, 0.0);
}

#[test]
fn obstacle_outside_cone_does_not_change_av() {
    // paired runs: one with a parked car in the next lane beside the AV
    // (bearing about 90 degrees), one without
    let mut a = world(1, 1);
    let mut b = world(1, 1);
    b.actors.push(parked(50, 1, 0.0, 3.5));
    b.actors.push(parked(51, 0, -15.0, 0.0));
    for _ in 0..20 {
        assert_eq!(av_control(&a), av_control(&b));
        a.tick().unwrap();
        b.tick().unwrap();
        assert_eq!(a.av, b.av);
    }
}

#[test]
fn collision_latch() {
    let mut w = world(1, 1);
    assert!(!w.collision_latched());
    w.actors.push(parked(50, 0, 0.5, 0.0));
    w.tick().unwrap();
    assert!(w.collision_latched());
    assert_eq!(w.collided_with, Some(50));
    w.actors.clear();
    for _ in 0..10 {
        w.tick().unwrap();
        assert!(w.collision_latched());
    }
}

#[test]
fn terminated_world_refuses_ticks() {
    let mut w = world(1, 1);
    w.termination = Some(critigen_core::sim::Termination::Timeout);
    assert!(matches!(w.tick(), Err(Error::Contract(_))));
}

#[test]
fn empty_road_lateral_deviation_is_bounded() {
    for road in 1..=6u8 {
        let mut w = world(road, 0);
        let mut worst: f64 = 0.0;
        while !w.is_terminated() && w.tick_count < 2000 {
            w.tick().unwrap();
            let pr = w.route.waypoints.project(w.av.pose.position);
            worst = worst.max(pr.distance);
            if w.progress >= w.route.total_length {
                break;
            }
        }
        assert!(worst <= 1.0, "road {road}: deviation {worst}");
        assert!(w.progress >= w.route.total_length, "road {road} never finished");
    }
}

fn check_invariants(w: &WorldState) {
    for a in &w.actors {
        match a {
            Actor::Vehicle(v) => {
                let limit = w.road.lanes[v.lane].speed_limit;
                assert!(v.speed >= 0.0 && v.speed <= limit, "speed {} > {limit}", v.speed);
                assert!(v.pose.heading.is_finite());
            }
            Actor::Pedestrian(p) => {
                let s = p.speed();
                assert!(s == 0.0 || s == WALK_SPEED || s == RUN_SPEED, "{s}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn traces_are_deterministic(road in 1u8..=6, seed in any::<u64>(), acts in actions()) {
        let run = || {
            let mut env = DrivingEnv::new(road, SimParams::default(), EpisodeShape::default(), None).unwrap();
            env.tracing = true;
            env.reset(seed).unwrap();
            for &a in &acts {
                if env.step(a).unwrap().done {
                    break;
                }
            }
            env.trace_lines().unwrap()
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn actor_and_latch_invariants(road in 1u8..=6, seed in any::<u64>(), acts in actions()) {
        let mut w = world(road, seed);
        let shape = EpisodeShape::default();
        let mut latched = false;
        for &a in &acts {
            if w.is_terminated() {
                break;
            }
            let mut ticks = Vec::new();
            run_time_step(&mut w, &action_catalog()[a], &shape, Some(&mut ticks)).unwrap();
            prop_assert!(ticks.len() <= shape.ticks_per_step as usize);
            for t in &ticks {
                prop_assert!(!latched || t.collision);
                latched = t.collision;
            }
            check_invariants(&w);
        }
    }

    #[test]
    fn spawn_respects_placement_rules(road in 1u8..=6, seed in any::<u64>(), acts in prop::collection::vec(0usize..36, 1..12), warm in 0u32..80) {
        let mut w = world(road, seed);
        for _ in 0..warm {
            w.tick().unwrap();
        }
        for &a in &acts {
            let before = w.actors.clone();
            let spec = action_catalog()[a].spawn;
            match w.spawn_actor(&spec) {
                SpawnResult::Rejected(_) => prop_assert_eq!(&before, &w.actors),
                SpawnResult::Spawned(id) => {
                    let new = w.actors.iter().find(|x| x.id() == id).unwrap();
                    let p = new.position();
                    prop_assert!(w.road.bounds.contains(p));
                    for old in &before {
                        prop_assert!(old.position().distance(p) >= w.params.spawn_clearance);
                    }
                    let snap = match new {
                        Actor::Vehicle(_) => w.road.nearest_lane(p).unwrap().projection.distance,
                        Actor::Pedestrian(_) => w.road.nearest_walkable(p).unwrap().distance,
                    };
                    prop_assert!(snap < 1e-6);
                    if let Actor::Vehicle(_) = new {
                        prop_assert!(!new.footprint().overlaps(&w.av.footprint()));
                    }
                }
            }
        }
    }
}
