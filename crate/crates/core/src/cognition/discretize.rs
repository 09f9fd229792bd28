//! Observation-to-text mapping. Every numeric field is binned into a named
//! category; neighbours become relative-bearing phrases. Output is a stable
//! `key: value` listing that the heuristic policy also parses.

use std::f64::consts::PI;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::channel::wrap_angle;
use crate::env::{HapsObservation, LocalObservation};

use super::CognitionConfig;

/// Upper-exclusive bin edges with one more label than edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bins {
    pub edges: Vec<f64>,
    pub labels: Vec<String>,
}

impl Default for Bins {
    fn default() -> Self {
        Self {
            edges: Vec::new(),
            labels: vec!["ANY".into()],
        }
    }
}

impl Bins {
    pub fn new(edges: &[f64], labels: &[&str]) -> Self {
        Self {
            edges: edges.to_vec(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.labels.len() != self.edges.len() + 1 {
            return Err(format!(
                "{} edges need {} labels",
                self.edges.len(),
                self.edges.len() + 1
            ));
        }
        if self.edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err("edges must be strictly increasing".into());
        }
        Ok(())
    }

    pub fn label(&self, value: f64) -> &str {
        let i = self.edges.iter().take_while(|&&e| value >= e).count();
        &self.labels[i]
    }
}

const SECTORS: [&str; 8] = [
    "FRONT",
    "FRONT_LEFT",
    "LEFT",
    "REAR_LEFT",
    "REAR",
    "REAR_RIGHT",
    "RIGHT",
    "FRONT_RIGHT",
];

/// Eight-way bearing of a horizontal offset relative to `yaw`. Left is
/// counter-clockwise.
pub fn bearing_label(dx: f64, dy: f64, yaw: f64) -> &'static str {
    if dx == 0.0 && dy == 0.0 {
        return "FRONT";
    }
    let rel = wrap_angle(dy.atan2(dx) - yaw);
    let sector = ((rel + PI / 8.0).rem_euclid(2.0 * PI) / (PI / 4.0)).floor() as usize % 8;
    SECTORS[sector]
}

fn vertical_label(dz: f64, band: f64) -> &'static str {
    if dz > band {
        "ABOVE"
    } else if dz < -band {
        "BELOW"
    } else {
        "LEVEL"
    }
}

fn norm3(v: &[f64; 3]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Text description of a UAV's local situation.
pub fn discretize_uav(obs: &LocalObservation, cfg: &CognitionConfig) -> String {
    let b = &cfg.bins;
    let yaw = obs.euler_rad[2];
    let to_target = [0, 1, 2].map(|i| obs.target_position_m[i] - obs.position_m[i]);
    let speed = norm3(&obs.velocity_mps);
    let tilt = obs.euler_rad[0]
        .abs()
        .max(obs.euler_rad[1].abs())
        .to_degrees();

    let mut s = String::new();
    let _ = writeln!(
        s,
        "target_distance: {}",
        b.distance_m.label(norm3(&to_target))
    );
    let _ = writeln!(
        s,
        "target_bearing: {}",
        bearing_label(to_target[0], to_target[1], yaw)
    );
    let _ = writeln!(
        s,
        "target_vertical: {}",
        vertical_label(to_target[2], cfg.vertical_band_m)
    );
    let _ = writeln!(s, "speed: {}", b.speed_mps.label(speed));
    let _ = writeln!(s, "attitude: {}", b.tilt_deg.label(tilt));
    let _ = writeln!(s, "serving_node: {}", obs.serving);
    let _ = writeln!(s, "serving_link: {}", b.sinr_db.label(obs.serving_sinr_db));
    let _ = writeln!(
        s,
        "haps_access: {}",
        if obs.haps_eligible {
            "ALLOWED"
        } else {
            "HELD_OFF"
        }
    );
    let _ = writeln!(s, "neighbors: {}", obs.neighbors.len());

    let mut order: Vec<usize> = (0..obs.neighbors.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, c) = (&obs.neighbors[i], &obs.neighbors[j]);
        a.distance_m
            .total_cmp(&c.distance_m)
            .then(a.uav.cmp(&c.uav))
    });
    for i in order {
        let n = &obs.neighbors[i];
        let p = n.rel_position_m;
        let closing = p
            .iter()
            .zip(&n.rel_velocity_mps)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            < 0.0;
        let _ = writeln!(
            s,
            "threat: UAV-{} {} {} {} {}",
            n.uav,
            b.threat_m.label(n.distance_m),
            bearing_label(p[0], p[1], yaw),
            vertical_label(p[2], cfg.vertical_band_m),
            if closing { "closing" } else { "opening" }
        );
    }
    s
}

/// Text description of the HAPS network state. Users are listed lowest
/// weighted rate first, ties by id.
pub fn discretize_haps(obs: &HapsObservation, cfg: &CognitionConfig) -> String {
    let b = &cfg.bins;
    let load = obs.haps_load_bps / obs.capacity_bps;
    let exceeded = obs.haps_load_bps > obs.capacity_bps;
    let mut users: Vec<_> = obs.associated().collect();
    users.sort_by(|a, c| {
        a.weighted_rate_bps
            .total_cmp(&c.weighted_rate_bps)
            .then(a.uav.cmp(&c.uav))
    });

    let mut s = String::new();
    let _ = writeln!(s, "haps_load: {}", b.load_fraction.label(load));
    let _ = writeln!(
        s,
        "capacity_exceeded: {}",
        if exceeded { "YES" } else { "NO" }
    );
    let _ = writeln!(s, "haps_users: {}", users.len());
    let _ = writeln!(s, "haps_quota: {}", obs.quota);
    let _ = writeln!(s, "users_by_rate:");
    for u in &users {
        let _ = writeln!(
            s,
            "- UAV-{} {}",
            u.uav,
            b.rate_mbps.label(u.weighted_rate_bps / 1e6)
        );
    }
    let mut off: Vec<_> = obs.users.iter().filter(|u| u.offloaded).collect();
    off.sort_by(|a, c| {
        a.distance_m
            .total_cmp(&c.distance_m)
            .then(a.uav.cmp(&c.uav))
    });
    let listed: Vec<String> = off.iter().map(|u| format!("UAV-{}", u.uav)).collect();
    let _ = writeln!(
        s,
        "offloaded: {}",
        if listed.is_empty() {
            "NONE".to_string()
        } else {
            listed.join(" ")
        }
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{HapsUserView, Neighbor, NodeId};

    fn obs() -> LocalObservation {
        LocalObservation {
            uav: 0,
            t: 0,
            position_m: [100.0, 100.0, 150.0],
            velocity_mps: [0.0; 3],
            euler_rad: [0.0; 3],
            angular_rate_radps: [0.0; 3],
            rotor_rpm: [12_500.0; 4],
            neighbors: vec![],
            serving: NodeId::Tbs(1),
            serving_distance_m: 200.0,
            serving_sinr_db: 12.0,
            node_sinr_db: vec![0.0; 5],
            target_position_m: [105.0, 100.0, 150.0],
            haps_eligible: true,
        }
    }

    #[test]
    fn bins_examples() {
        let b = super::super::BinTables::default();
        assert_eq!(b.distance_m.label(5.0), "VERY_CLOSE");
        assert_eq!(b.distance_m.label(10.0), "CLOSE");
        assert_eq!(b.distance_m.label(1e6), "VERY_FAR");
        assert_eq!(b.load_fraction.label(0.0), "LOW");
        assert_eq!(b.sinr_db.label(-3.0), "POOR");
        assert!(Bins::new(&[2.0, 1.0], &["a", "b", "c"]).validate().is_err());
        assert!(Bins::new(&[1.0], &["a"]).validate().is_err());
    }

    #[test]
    fn bearings() {
        assert_eq!(bearing_label(1.0, 0.0, 0.0), "FRONT");
        assert_eq!(bearing_label(0.0, 1.0, 0.0), "LEFT");
        assert_eq!(bearing_label(0.0, -1.0, 0.0), "RIGHT");
        assert_eq!(bearing_label(-1.0, 0.0, 0.0), "REAR");
        assert_eq!(bearing_label(1.0, 1.0, 0.0), "FRONT_LEFT");
        assert_eq!(bearing_label(0.0, 1.0, PI / 2.0), "FRONT");
    }

    #[test]
    fn uav_text_is_deterministic_and_binned() {
        let cfg = CognitionConfig::default();
        let mut o = obs();
        o.neighbors.push(Neighbor {
            uav: 3,
            rel_position_m: [4.0, 0.0, 0.0],
            rel_velocity_mps: [-1.0, 0.0, 0.0],
            distance_m: 4.0,
        });
        let a = discretize_uav(&o, &cfg);
        assert_eq!(a, discretize_uav(&o, &cfg));
        assert!(a.contains("target_distance: VERY_CLOSE\n"));
        assert!(a.contains("serving_link: GOOD\n"));
        assert!(a.contains("threat: UAV-3 CRITICAL FRONT LEVEL closing\n"));
    }

    #[test]
    fn haps_text_orders_users_by_rate() {
        let cfg = CognitionConfig::default();
        let user = |uav, wr: f64| HapsUserView {
            uav,
            distance_m: 20_000.0,
            associated: true,
            offloaded: false,
            rate_bps: wr,
            weighted_rate_bps: wr,
        };
        let o = HapsObservation {
            t: 0,
            haps_load_bps: 0.0,
            capacity_bps: 100e6,
            remaining_capacity_bps: 100e6,
            quota: 5,
            users: vec![user(0, 9e6), user(1, 2e6), user(2, 2e6)],
        };
        let s = discretize_haps(&o, &cfg);
        assert!(s.contains("haps_load: LOW\n"));
        let i1 = s.find("UAV-1").unwrap();
        let i2 = s.find("UAV-2").unwrap();
        let i0 = s.find("UAV-0").unwrap();
        assert!(i1 < i2 && i2 < i0);
        assert!(s.contains("offloaded: NONE"));
    }
}
