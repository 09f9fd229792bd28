use serde::{Deserialize, Serialize};

/// Explicit start/goal for one UAV. Unlisted UAVs are placed at random.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavSpawn {
    pub origin_m: [f64; 3],
    pub target_m: [f64; 3],
    /// Initial heading; defaults to the bearing of the target.
    #[serde(default)]
    pub yaw_rad: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AirspaceConfig {
    pub size_m: [f64; 3],
    pub num_uavs: usize,
    pub spawn_altitude_m: [f64; 2],
    /// Keep random origins this far from the horizontal edges.
    pub spawn_margin_m: f64,
    pub min_spawn_separation_m: f64,
    /// Horizontal origin-to-target range for random targets.
    pub target_distance_m: [f64; 2],
    pub placement_attempts: usize,
    pub uavs: Vec<UavSpawn>,
}

impl Default for AirspaceConfig {
    fn default() -> Self {
        Self {
            size_m: [1000.0, 1000.0, 300.0],
            num_uavs: 4,
            spawn_altitude_m: [100.0, 200.0],
            spawn_margin_m: 100.0,
            min_spawn_separation_m: 20.0,
            target_distance_m: [100.0, 300.0],
            placement_attempts: 10_000,
            uavs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub position_sigma_m: f64,
    pub velocity_sigma_mps: f64,
    pub attitude_sigma_rad: f64,
    pub angular_rate_sigma_radps: f64,
    pub perception_radius_m: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            position_sigma_m: 0.05,
            velocity_sigma_mps: 0.05,
            attitude_sigma_rad: 0.01,
            angular_rate_sigma_radps: 0.01,
            perception_radius_m: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Weights of target proximity, rotor effort and tilt.
    pub alpha: [f64; 3],
    /// Reward on a step closer than `safe_distance_m` to another UAV.
    pub crash_reward: f64,
    pub safe_distance_m: f64,
    pub handover_cost: f64,
    /// Whether HAPS-tier forced moves cost the UAV a handover.
    pub count_forced_handovers: bool,
    /// Telecom reward unit, in bit/s (1e6 gives Mbps).
    pub telecom_unit_bps: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            alpha: [1.0, 0.1, 0.2],
            crash_reward: -100.0,
            safe_distance_m: 5.0,
            handover_cost: 1.0,
            count_forced_handovers: true,
            telecom_unit_bps: 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingConfig {
    pub dt_s: f64,
    pub llm_period_s: f64,
    pub haps_period_s: f64,
    pub horizon_steps: u64,
    /// Episode ends early once every UAV is this close to its target.
    pub target_reached_m: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            dt_s: 0.05,
            llm_period_s: 1.0,
            haps_period_s: 5.0,
            horizon_steps: 400,
            target_reached_m: 1.0,
        }
    }
}

impl TimingConfig {
    pub fn llm_every(&self) -> u64 {
        (self.llm_period_s / self.dt_s).round().max(1.0) as u64
    }

    pub fn haps_every(&self) -> u64 {
        (self.haps_period_s / self.dt_s).round().max(1.0) as u64
    }
}
