//! Language-facing side of the controller: observation-to-text
//! discretization, prompt assembly, episodic memory with nearest-neighbour
//! retrieval, reflection, and the semantic-policy transport.

pub mod decide;
pub mod directive;
pub mod discretize;
pub mod memory;
pub mod policy;
pub mod prompt;

use serde::{Deserialize, Serialize};

pub use decide::{
    decide_directive, decide_meta, reflect, Decision, Degradation, DegradeReason, Reflection,
};
pub use directive::{
    parse_directive, parse_meta_action, Magnitude, Maneuver, ParseError, SemanticDirective,
};
pub use discretize::{discretize_haps, discretize_uav, Bins};
pub use memory::{Embedder, EpisodicMemory, MemoryRecord, RecordReward};
pub use policy::{
    BackendConfig, BackendMode, HeuristicPolicy, HttpPolicy, Metered, OfflinePolicy, PolicyError,
    PolicyRequest, PolicyTier, ScriptedPolicy, SemanticPolicy,
};
pub use prompt::PromptBundle;

/// Bin-edge tables used to turn numbers into categorical words.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinTables {
    pub distance_m: Bins,
    pub sinr_db: Bins,
    pub load_fraction: Bins,
    pub speed_mps: Bins,
    pub tilt_deg: Bins,
    pub threat_m: Bins,
    pub rate_mbps: Bins,
}

impl Default for BinTables {
    fn default() -> Self {
        Self {
            distance_m: Bins::new(
                &[10.0, 50.0, 200.0],
                &["VERY_CLOSE", "CLOSE", "FAR", "VERY_FAR"],
            ),
            sinr_db: Bins::new(&[0.0, 10.0, 20.0], &["POOR", "FAIR", "GOOD", "EXCELLENT"]),
            load_fraction: Bins::new(&[0.5, 0.9], &["LOW", "NEAR_CAPACITY", "SATURATED"]),
            speed_mps: Bins::new(
                &[1.0, 4.0, 8.0],
                &["STATIONARY", "SLOW", "MODERATE", "FAST"],
            ),
            tilt_deg: Bins::new(&[5.0, 10.0], &["STABLE", "TILTED", "STEEP"]),
            threat_m: Bins::new(
                &[5.0, 15.0, 30.0],
                &["CRITICAL", "NEAR", "MODERATE", "DISTANT"],
            ),
            rate_mbps: Bins::new(&[5.0, 15.0], &["LOW", "MEDIUM", "HIGH"]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CognitionConfig {
    pub bins: BinTables,
    /// Height difference treated as level when describing bearings.
    pub vertical_band_m: f64,
    pub memory_capacity: usize,
    pub retrieval_k: usize,
    pub reflection_threshold: f64,
    pub haps_reflection_threshold: f64,
    /// Weights that scalarize the reward vector for the reflection test.
    pub reflection_weights: [f64; 4],
    /// Correction stored when the policy cannot be reached for a reflection.
    pub reflection_fallback: String,
    /// Appended to the prompt when a reply fails to parse.
    pub format_reminder_uav: String,
    pub format_reminder_haps: String,
}

impl Default for CognitionConfig {
    fn default() -> Self {
        Self {
            bins: BinTables::default(),
            vertical_band_m: 2.0,
            memory_capacity: 10_000,
            retrieval_k: 3,
            reflection_threshold: -10.0,
            haps_reflection_threshold: -10.0,
            reflection_weights: [1.0; 4],
            reflection_fallback: "Outcome was poor. Keep more separation from other UAVs and avoid \
                                  unnecessary association changes."
                .into(),
            format_reminder_uav: "Reply with exactly one line: DIRECTIVE <FORWARD|BACK|LEFT|RIGHT|ASCEND|DESCEND|\
                                  HOVER|ACCELERATE|DECELERATE> [GENTLE|NORMAL|AGGRESSIVE]"
                .into(),
            format_reminder_haps: "Reply with exactly one line: ACTION <Offload|Recall|Idle> [uav ids separated by spaces]"
                .into(),
        }
    }
}
