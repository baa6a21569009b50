use std::f64::consts::PI;

/// Simulator constants. Defaults are the values used throughout the tests.
#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    /// Seconds per tick.
    pub dt: f64,
    /// Minimum centre distance between a new actor and existing NPCs.
    pub spawn_clearance: f64,
    /// Maximum distance from the requested spawn point to a valid lane or
    /// sidewalk point.
    pub snap_radius: f64,
    /// Pedestrians stop while any object is closer than this.
    pub safe_walk_distance: f64,

    pub comfort_factor: f64,
    pub cone_range: f64,
    pub cone_half_angle: f64,
    pub brake_headway: f64,
    pub emergency_headway: f64,
    /// Gap the AV keeps to a stopped obstacle; part of the headway numerator.
    pub standstill_gap: f64,
    pub max_lateral_accel: f64,
    pub wheelbase: f64,
    pub max_steer: f64,
    pub max_accel: f64,
    pub max_decel: f64,

    pub npc_headway: f64,
    pub npc_standstill_gap: f64,
    pub npc_accel_limit: f64,
    pub lane_change_duration: f64,
    /// NPC cruise speed is drawn uniformly from this fraction range of the
    /// lane speed limit.
    pub npc_cruise_factor: (f64, f64),
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            dt: 0.05,
            spawn_clearance: 5.0,
            snap_radius: 2.0,
            safe_walk_distance: 2.0,
            comfort_factor: 0.8,
            cone_range: 25.0,
            cone_half_angle: 30.0 * PI / 180.0,
            brake_headway: 2.5,
            emergency_headway: 0.8,
            standstill_gap: 3.0,
            max_lateral_accel: 2.5,
            wheelbase: 2.8,
            max_steer: 0.6,
            max_accel: 3.0,
            max_decel: 8.0,
            npc_headway: 1.5,
            npc_standstill_gap: 2.0,
            npc_accel_limit: 3.0,
            lane_change_duration: 3.0,
            npc_cruise_factor: (0.6, 0.8),
        }
    }
}
