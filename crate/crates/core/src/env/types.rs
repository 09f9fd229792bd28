use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::LinkSample;

/// A serving node: one of the terrestrial base stations or the HAPS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum NodeId {
    Tbs(usize),
    Haps,
}

impl NodeId {
    /// Dense index with TBSs first and the HAPS last.
    pub fn index(self, num_tbs: usize) -> usize {
        match self {
            NodeId::Tbs(b) => b,
            NodeId::Haps => num_tbs,
        }
    }

    pub fn from_index(i: usize, num_tbs: usize) -> Self {
        if i >= num_tbs {
            NodeId::Haps
        } else {
            NodeId::Tbs(i)
        }
    }

    pub fn is_haps(self) -> bool {
        matches!(self, NodeId::Haps)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Tbs(b) => write!(f, "TBS-{b}"),
            NodeId::Haps => f.write_str("HAPS"),
        }
    }
}

impl FromStr for NodeId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "HAPS" {
            return Ok(NodeId::Haps);
        }
        s.strip_prefix("TBS-")
            .and_then(|n| n.parse().ok())
            .map(NodeId::Tbs)
            .ok_or_else(|| format!("unknown node `{s}`"))
    }
}

impl From<NodeId> for String {
    fn from(n: NodeId) -> String {
        n.to_string()
    }
}

impl TryFrom<String> for NodeId {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Discrete association command of one UAV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TelecomAction {
    Stay,
    Handover(usize),
    RequestHaps,
}

impl TelecomAction {
    /// `0` Stay, `1..=B` handover to TBS `b-1`, `B+1` request HAPS.
    pub fn from_index(i: usize, num_tbs: usize) -> Self {
        match i {
            0 => TelecomAction::Stay,
            i if i <= num_tbs => TelecomAction::Handover(i - 1),
            _ => TelecomAction::RequestHaps,
        }
    }

    pub fn index(self, num_tbs: usize) -> usize {
        match self {
            TelecomAction::Stay => 0,
            TelecomAction::Handover(b) => b + 1,
            TelecomAction::RequestHaps => num_tbs + 1,
        }
    }

    pub fn count(num_tbs: usize) -> usize {
        num_tbs + 2
    }
}

impl fmt::Display for TelecomAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TelecomAction::Stay => f.write_str("Stay"),
            TelecomAction::Handover(b) => write!(f, "HO-TBS-{b}"),
            TelecomAction::RequestHaps => f.write_str("RequestHAPS"),
        }
    }
}

/// Hybrid per-UAV action: rotor commands plus an association command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointAction {
    pub rotor_rpm: [f64; 4],
    pub telecom: TelecomAction,
}

/// Strategic directive of the HAPS tier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "uav_ids")]
pub enum MetaAction {
    Offload(Vec<usize>),
    Recall(Vec<usize>),
    Idle,
}

impl MetaAction {
    pub fn uav_ids(&self) -> &[usize] {
        match self {
            MetaAction::Offload(ids) | MetaAction::Recall(ids) => ids,
            MetaAction::Idle => &[],
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            MetaAction::Offload(_) => "Offload",
            MetaAction::Recall(_) => "Recall",
            MetaAction::Idle => "Idle",
        }
    }
}

impl fmt::Display for MetaAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ACTION ")?;
        f.write_str(self.kind())?;
        for id in self.uav_ids() {
            write!(f, " {id}")?;
        }
        Ok(())
    }
}

/// Per-UAV, per-step objective vector. Penalties are stored as magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardVector {
    pub r_tran: f64,
    pub r_tele: f64,
    pub c_safe: f64,
    pub c_ho: f64,
}

impl RewardVector {
    /// `[r_tran, r_tele, -c_safe, -c_ho]`
    pub fn as_array(&self) -> [f64; 4] {
        [self.r_tran, self.r_tele, -self.c_safe, -self.c_ho]
    }

    pub fn scalarize(&self, weights: &[f64; 4]) -> f64 {
        self.as_array()
            .iter()
            .zip(weights)
            .map(|(r, w)| r * w)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    QuotaFull,
    CapacityProjection,
    Offloaded,
    UnknownNode,
}

/// Something that happened during a step. Logged verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Handover {
        uav: usize,
        from: NodeId,
        to: NodeId,
        forced: bool,
    },
    HandoverRejected {
        uav: usize,
        target: NodeId,
        reason: RejectReason,
    },
    /// A forced move found every TBS at quota and overflowed.
    QuotaOverflow {
        uav: usize,
        node: NodeId,
    },
    Offloaded {
        uav: usize,
    },
    Recalled {
        uav: usize,
    },
    Collision {
        a: usize,
        b: usize,
        distance_m: f64,
    },
    CapacityViolation {
        load_bps: f64,
        capacity_bps: f64,
    },
}

impl Event {
    /// UAV the event primarily concerns, if any.
    pub fn uav(&self) -> Option<usize> {
        match self {
            Event::Handover { uav, .. }
            | Event::HandoverRejected { uav, .. }
            | Event::QuotaOverflow { uav, .. }
            | Event::Offloaded { uav }
            | Event::Recalled { uav } => Some(*uav),
            Event::Collision { .. } | Event::CapacityViolation { .. } => None,
        }
    }

    pub fn involves(&self, m: usize) -> bool {
        match self {
            Event::Collision { a, b, .. } => *a == m || *b == m,
            Event::CapacityViolation { .. } => false,
            other => other.uav() == Some(m),
        }
    }
}

/// A UAV-side neighbour entry, relative to the observer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub uav: usize,
    pub rel_position_m: [f64; 3],
    pub rel_velocity_mps: [f64; 3],
    pub distance_m: f64,
}

/// Noisy onboard view of one UAV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalObservation {
    pub uav: usize,
    pub t: u64,
    pub position_m: [f64; 3],
    pub velocity_mps: [f64; 3],
    /// Roll, pitch, yaw.
    pub euler_rad: [f64; 3],
    pub angular_rate_radps: [f64; 3],
    pub rotor_rpm: [f64; 4],
    pub neighbors: Vec<Neighbor>,
    pub serving: NodeId,
    pub serving_distance_m: f64,
    pub serving_sinr_db: f64,
    /// SINR estimate toward every node, TBSs first then the HAPS.
    pub node_sinr_db: Vec<f64>,
    pub target_position_m: [f64; 3],
    /// False while the HAPS tier holds this UAV off the HAPS.
    pub haps_eligible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HapsUserView {
    pub uav: usize,
    pub distance_m: f64,
    pub associated: bool,
    pub offloaded: bool,
    /// Raw HAPS rate; zero when not associated.
    pub rate_bps: f64,
    pub weighted_rate_bps: f64,
}

/// Exact network-level aggregates seen by the HAPS tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HapsObservation {
    pub t: u64,
    pub haps_load_bps: f64,
    pub capacity_bps: f64,
    pub remaining_capacity_bps: f64,
    pub quota: usize,
    pub users: Vec<HapsUserView>,
}

impl HapsObservation {
    pub fn associated(&self) -> impl Iterator<Item = &HapsUserView> {
        self.users.iter().filter(|u| u.associated)
    }

    pub fn num_associated(&self) -> usize {
        self.associated().count()
    }
}

/// Everything `Env::step` reports back.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub rewards: Vec<RewardVector>,
    pub observations: Vec<LocalObservation>,
    pub links: Vec<LinkSample>,
    pub events: Vec<Event>,
    pub capacity_violation: bool,
    pub done: bool,
}
