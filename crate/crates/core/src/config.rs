//! Scenario configuration: every tunable of the simulator in one TOML tree.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::ChannelConfig;
use crate::cognition::{BackendConfig, CognitionConfig};
use crate::edge_agent::AgentConfig;
use crate::env::{AirspaceConfig, RewardConfig, SensorConfig, TimingConfig};
use crate::meta_controller::MetaConfig;
use crate::physics::UavParams;

/// A config problem, located by its dotted field path.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("config error at `{path}`: {reason}")]
pub struct ConfigError {
    pub path: String,
    pub reason: String,
}

impl ConfigError {
    pub fn new(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

/// Architecture switches for ablation runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    /// Include retrieved exemplars in UAV prompts.
    pub memory_prompt: bool,
    /// Run the HAPS tier. Off means ungated HAPS admission and no directives.
    pub meta_controller: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            memory_prompt: true,
            meta_controller: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Episodes per run; agents keep learning across them.
    pub episodes: usize,
    pub airspace: AirspaceConfig,
    pub timing: TimingConfig,
    pub sensors: SensorConfig,
    pub rewards: RewardConfig,
    pub uav: UavParams,
    pub channel: ChannelConfig,
    pub cognition: CognitionConfig,
    pub agent: AgentConfig,
    pub meta: MetaConfig,
    pub backend: BackendConfig,
    pub ablation: AblationConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            episodes: 1,
            airspace: AirspaceConfig::default(),
            timing: TimingConfig::default(),
            sensors: SensorConfig::default(),
            rewards: RewardConfig::default(),
            uav: UavParams::default(),
            channel: ChannelConfig::default(),
            cognition: CognitionConfig::default(),
            agent: AgentConfig::default(),
            meta: MetaConfig::default(),
            backend: BackendConfig::default(),
            ablation: AblationConfig::default(),
        }
    }
}

fn check(ok: bool, path: &str, reason: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::new(path, reason))
    }
}

fn positive(v: f64, path: &str) -> Result<(), ConfigError> {
    check(v.is_finite() && v > 0.0, path, "must be finite and > 0")
}

fn nonnegative(v: f64, path: &str) -> Result<(), ConfigError> {
    check(v.is_finite() && v >= 0.0, path, "must be finite and >= 0")
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| ConfigError::new("<root>", e.message()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("<file>", format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        toml::to_string_pretty(self).map_err(|e| ConfigError::new("<root>", e.to_string()))
    }

    /// Set one value by dotted path, e.g. `airspace.num_uavs=10`. The value is
    /// read as a TOML literal, falling back to a bare string.
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let mut tree =
            toml::Value::try_from(&*self).map_err(|e| ConfigError::new(key, e.to_string()))?;
        let parsed: toml::Value = format!("v = {value}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(value.to_string()));

        let mut node = &mut tree;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let last = i + 1 == parts.len();
            node = match node {
                toml::Value::Table(t) => {
                    if last {
                        if !t.contains_key(*part) {
                            return Err(ConfigError::new(key, "unknown field"));
                        }
                        t.insert(part.to_string(), parsed);
                        break;
                    }
                    t.get_mut(*part)
                        .ok_or_else(|| ConfigError::new(key, "unknown field"))?
                }
                toml::Value::Array(a) => {
                    let idx: usize = part.parse().map_err(|_| {
                        ConfigError::new(key, format!("`{part}` is not an array index"))
                    })?;
                    let len = a.len();
                    let slot = a.get_mut(idx).ok_or_else(|| {
                        ConfigError::new(key, format!("index {idx} out of range ({len})"))
                    })?;
                    if last {
                        *slot = parsed;
                        break;
                    }
                    slot
                }
                _ => return Err(ConfigError::new(key, "path descends into a scalar")),
            };
        }
        *self = tree
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::new(key, e.message().to_string()))?;
        Ok(())
    }

    /// Check every block, reporting the first problem by field path.
    pub fn validate(&self) -> Result<(), ConfigError> {
        check(self.episodes >= 1, "episodes", "need at least one episode")?;
        let a = &self.airspace;
        check(
            a.num_uavs >= 1,
            "airspace.num_uavs",
            "need at least one UAV",
        )?;
        for (i, s) in a.size_m.iter().enumerate() {
            positive(*s, &format!("airspace.size_m[{i}]"))?;
        }
        check(
            a.spawn_altitude_m[0] > 0.0
                && a.spawn_altitude_m[0] <= a.spawn_altitude_m[1]
                && a.spawn_altitude_m[1] <= a.size_m[2],
            "airspace.spawn_altitude_m",
            "need 0 < low <= high <= airspace height",
        )?;
        check(
            a.spawn_margin_m >= 0.0 && 2.0 * a.spawn_margin_m < a.size_m[0].min(a.size_m[1]),
            "airspace.spawn_margin_m",
            "margin leaves no room to spawn",
        )?;
        nonnegative(a.min_spawn_separation_m, "airspace.min_spawn_separation_m")?;
        check(
            a.target_distance_m[0] >= 0.0 && a.target_distance_m[0] <= a.target_distance_m[1],
            "airspace.target_distance_m",
            "need 0 <= low <= high",
        )?;
        check(
            a.placement_attempts >= 1,
            "airspace.placement_attempts",
            "must be >= 1",
        )?;
        check(
            a.uavs.len() <= a.num_uavs,
            "airspace.uavs",
            "more explicit spawns than airspace.num_uavs",
        )?;

        let t = &self.timing;
        positive(t.dt_s, "timing.dt_s")?;
        check(
            t.llm_period_s >= t.dt_s,
            "timing.llm_period_s",
            "must be >= timing.dt_s",
        )?;
        check(
            t.haps_period_s >= t.dt_s,
            "timing.haps_period_s",
            "must be >= timing.dt_s",
        )?;
        check(t.horizon_steps >= 1, "timing.horizon_steps", "must be >= 1")?;
        nonnegative(t.target_reached_m, "timing.target_reached_m")?;

        let s = &self.sensors;
        nonnegative(s.position_sigma_m, "sensors.position_sigma_m")?;
        nonnegative(s.velocity_sigma_mps, "sensors.velocity_sigma_mps")?;
        nonnegative(s.attitude_sigma_rad, "sensors.attitude_sigma_rad")?;
        nonnegative(
            s.angular_rate_sigma_radps,
            "sensors.angular_rate_sigma_radps",
        )?;
        positive(s.perception_radius_m, "sensors.perception_radius_m")?;

        let r = &self.rewards;
        positive(r.safe_distance_m, "rewards.safe_distance_m")?;
        nonnegative(r.handover_cost, "rewards.handover_cost")?;
        check(
            r.crash_reward.is_finite(),
            "rewards.crash_reward",
            "must be finite",
        )?;
        positive(r.telecom_unit_bps, "rewards.telecom_unit_bps")?;

        self.uav.validate().map_err(|e| match e {
            crate::physics::PhysicsError::InvalidParams { field, reason } => {
                ConfigError::new(format!("uav.{field}"), reason)
            }
            other => ConfigError::new("uav", other.to_string()),
        })?;

        let c = &self.channel;
        check(
            !c.tbs.is_empty(),
            "channel.tbs",
            "need at least one base station",
        )?;
        for (i, b) in c.tbs.iter().enumerate() {
            b.validate()
                .map_err(|e| ConfigError::new(format!("channel.tbs[{i}]"), e))?;
        }
        c.haps
            .validate()
            .map_err(|e| ConfigError::new("channel.haps", e))?;
        check(
            (0.0..1.0).contains(&c.handover_rate_penalty),
            "channel.handover_rate_penalty",
            "must lie in [0, 1)",
        )?;

        let g = &self.cognition;
        for (name, bins) in [
            ("distance_m", &g.bins.distance_m),
            ("sinr_db", &g.bins.sinr_db),
            ("load_fraction", &g.bins.load_fraction),
            ("speed_mps", &g.bins.speed_mps),
            ("tilt_deg", &g.bins.tilt_deg),
            ("threat_m", &g.bins.threat_m),
            ("rate_mbps", &g.bins.rate_mbps),
        ] {
            bins.validate()
                .map_err(|e| ConfigError::new(format!("cognition.bins.{name}"), e))?;
        }
        nonnegative(g.vertical_band_m, "cognition.vertical_band_m")?;

        self.agent.validate()?;
        self.meta.validate()?;
        check(
            self.backend.timeout_ms >= 1,
            "backend.timeout_ms",
            "must be >= 1",
        )?;
        Ok(())
    }
}
