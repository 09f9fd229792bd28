//! Episodic memory: FIFO buffer of past transitions, searched by Euclidean
//! distance between min-max normalized observation embeddings.

use std::collections::VecDeque;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::env::{HapsObservation, LocalObservation};

/// Scalar for the HAPS tier, the full objective vector for UAVs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RecordReward {
    Scalar(f64),
    Vector([f64; 4]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRecord {
    /// Insertion order; larger is newer.
    pub seq: u64,
    pub embedding: Vec<f64>,
    pub observation: String,
    pub action: String,
    pub reward: RecordReward,
    pub next_observation: String,
    /// Empty unless reflection fired.
    pub correction: String,
}

#[derive(Debug, Clone)]
pub struct EpisodicMemory {
    capacity: usize,
    records: VecDeque<MemoryRecord>,
    next_seq: u64,
}

impl EpisodicMemory {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            records: VecDeque::new(),
            next_seq: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &MemoryRecord> {
        self.records.iter()
    }

    pub fn last(&self) -> Option<&MemoryRecord> {
        self.records.back()
    }

    /// Append a record, evicting the oldest when full. `seq` is assigned here.
    pub fn push(&mut self, mut record: MemoryRecord) {
        if self.capacity == 0 {
            return;
        }
        record.seq = self.next_seq;
        self.next_seq += 1;
        if self.records.len() == self.capacity {
            self.records.pop_front();
        }
        self.records.push_back(record);
    }

    /// The `k` records nearest to `query`, nearest first. Equal distances
    /// put the newer record first.
    pub fn retrieve_top_k(&self, query: &[f64], k: usize) -> Vec<&MemoryRecord> {
        if k == 0 || self.records.is_empty() {
            return Vec::new();
        }
        let mut scored: Vec<(f64, &MemoryRecord)> = self
            .records
            .iter()
            .map(|r| (euclidean(query, &r.embedding), r))
            .collect();
        let by = |a: &(f64, &MemoryRecord), b: &(f64, &MemoryRecord)| {
            a.0.total_cmp(&b.0).then(b.1.seq.cmp(&a.1.seq))
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, by);
            scored.truncate(k);
        }
        scored.sort_by(by);
        scored.into_iter().map(|(_, r)| r).collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Per-dimension running min-max scaler.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedder {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Embedder {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len(), "bound vectors must match");
        Self { lo, hi }
    }

    pub fn dims(&self) -> usize {
        self.lo.len()
    }

    /// Widen the bounds to include `raw`.
    pub fn observe(&mut self, raw: &[f64]) {
        for (i, &x) in raw.iter().enumerate() {
            if x.is_finite() {
                self.lo[i] = self.lo[i].min(x);
                self.hi[i] = self.hi[i].max(x);
            }
        }
    }

    /// Scale into [0, 1] against the current bounds. Degenerate dimensions map to 0.
    pub fn embed(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .enumerate()
            .map(|(i, &x)| {
                let span = self.hi[i] - self.lo[i];
                if span > 0.0 {
                    ((x - self.lo[i]) / span).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Observe then embed.
    pub fn update_and_embed(&mut self, raw: &[f64]) -> Vec<f64> {
        self.observe(raw);
        self.embed(raw)
    }
}

/// Raw UAV features: position, velocity, distance to target, serving SINR
/// (dB), nearest neighbour distance (capped at the perception radius),
/// neighbour count.
pub fn uav_features(obs: &LocalObservation, perception_radius_m: f64) -> Vec<f64> {
    let to_target: f64 = (0..3)
        .map(|i| (obs.target_position_m[i] - obs.position_m[i]).powi(2))
        .sum::<f64>()
        .sqrt();
    let nearest = obs
        .neighbors
        .iter()
        .map(|n| n.distance_m)
        .fold(perception_radius_m, f64::min);
    let mut v = Vec::with_capacity(10);
    v.extend_from_slice(&obs.position_m);
    v.extend_from_slice(&obs.velocity_mps);
    v.push(to_target);
    v.push(obs.serving_sinr_db);
    v.push(nearest);
    v.push(obs.neighbors.len() as f64);
    v
}

/// Embedder for `uav_features` seeded with the airspace extent.
pub fn uav_embedder(size_m: [f64; 3], max_speed_mps: f64, perception_radius_m: f64) -> Embedder {
    let diag = size_m.iter().map(|s| s * s).sum::<f64>().sqrt();
    let v = max_speed_mps;
    Embedder::new(
        vec![0.0, 0.0, 0.0, -v, -v, -v, 0.0, -20.0, 0.0, 0.0],
        vec![
            size_m[0],
            size_m[1],
            size_m[2],
            v,
            v,
            v,
            diag,
            40.0,
            perception_radius_m,
            5.0,
        ],
    )
}

/// Raw HAPS features (Mbps where applicable): load, remaining capacity,
/// associated users, mean weighted rate of associated users, offloaded count.
pub fn haps_features(obs: &HapsObservation) -> Vec<f64> {
    let n = obs.num_associated();
    let mean_wr = if n == 0 {
        0.0
    } else {
        obs.associated().map(|u| u.weighted_rate_bps).sum::<f64>() / n as f64 / 1e6
    };
    vec![
        obs.haps_load_bps / 1e6,
        obs.remaining_capacity_bps / 1e6,
        n as f64,
        mean_wr,
        obs.users.iter().filter(|u| u.offloaded).count() as f64,
    ]
}

pub fn haps_embedder(capacity_bps: f64, quota: usize, num_uavs: usize) -> Embedder {
    let c = capacity_bps / 1e6;
    Embedder::new(
        vec![0.0; 5],
        vec![2.0 * c, c, (2 * quota) as f64, c / 2.0, num_uavs as f64],
    )
}
