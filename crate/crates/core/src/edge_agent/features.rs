//! State features of the association learner.

use crate::cognition::{Maneuver, SemanticDirective};
use crate::env::LocalObservation;

/// SINR range mapped onto [0, 1].
pub const SINR_FLOOR_DB: f64 = -20.0;
pub const SINR_SPAN_DB: f64 = 60.0;

pub fn num_features(num_tbs: usize) -> usize {
    3 + 3 + 2 * (num_tbs + 1) + Maneuver::ALL.len() + 1
}

/// Position over the airspace size, velocity over the speed cap, per-node
/// SINR scaled to [0, 1], serving-node one-hot, directive one-hot, and the
/// HAPS eligibility flag.
pub fn telecom_features(
    obs: &LocalObservation,
    directive: SemanticDirective,
    airspace_m: [f64; 3],
    max_speed_mps: f64,
    num_tbs: usize,
) -> Vec<f64> {
    let mut f = Vec::with_capacity(num_features(num_tbs));
    for i in 0..3 {
        f.push(obs.position_m[i] / airspace_m[i]);
    }
    for i in 0..3 {
        f.push(obs.velocity_mps[i] / max_speed_mps);
    }
    for k in 0..=num_tbs {
        let db = obs.node_sinr_db.get(k).copied().unwrap_or(SINR_FLOOR_DB);
        f.push(((db - SINR_FLOOR_DB) / SINR_SPAN_DB).clamp(0.0, 1.0));
    }
    let serving = obs.serving.index(num_tbs);
    f.extend((0..=num_tbs).map(|k| if k == serving { 1.0 } else { 0.0 }));
    let d = directive.maneuver.index();
    f.extend((0..Maneuver::ALL.len()).map(|k| if k == d { 1.0 } else { 0.0 }));
    f.push(if obs.haps_eligible { 1.0 } else { 0.0 });
    f
}
