//! Reward components. `Env::step` composes these; it never recomputes them
//! another way.

use crate::channel::LinkSample;
use crate::physics::Vec3;

use super::types::NodeId;

/// Proximity bonus minus normalized rotor effort and tilt.
///
/// `rpm_normalized` holds P/P_max per rotor; `tilt_rad` is (roll, pitch).
pub fn reward_transport(
    position: &Vec3,
    rpm_normalized: [f64; 4],
    tilt_rad: [f64; 2],
    target: &Vec3,
    alpha: [f64; 3],
) -> f64 {
    let proximity = (-(position - target).norm()).exp();
    let effort: f64 = rpm_normalized.iter().map(|p| p * p).sum();
    let tilt: f64 = tilt_rad.iter().map(|a| a * a).sum();
    alpha[0] * proximity - alpha[1] * effort - alpha[2] * tilt
}

/// Serving-link weighted rate in `unit_bps` units.
pub fn reward_telecom(link: &LinkSample, unit_bps: f64) -> f64 {
    link.weighted_rate_bps / unit_bps
}

/// Crash penalty magnitude if any neighbour is strictly inside `safe_distance_m`.
pub fn penalty_safety(
    min_neighbor_distance_m: f64,
    safe_distance_m: f64,
    crash_reward: f64,
) -> f64 {
    if min_neighbor_distance_m < safe_distance_m {
        crash_reward.abs()
    } else {
        0.0
    }
}

pub fn penalty_handover(prev: NodeId, new: NodeId, beta: f64) -> f64 {
    if prev != new {
        beta
    } else {
        0.0
    }
}
