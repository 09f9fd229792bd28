//! Multi-UAV world: ground truth, partial observations, hybrid action
//! execution, vector rewards and association bookkeeping.

pub mod config;
pub mod observe;
pub mod reward;
pub mod scheduler;
pub mod types;

use std::collections::BTreeSet;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::channel::{self, LinkSample};
use crate::config::ScenarioConfig;
use crate::physics::{self, PhysicsError, RigidBodyState, Vec3};
use crate::rng::{substream, Stream};

pub use config::{AirspaceConfig, RewardConfig, SensorConfig, TimingConfig, UavSpawn};
pub use scheduler::{Gates, Scheduler};
pub use types::*;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("config error at `{path}`: {reason}")]
    Config { path: String, reason: String },
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error("channel fault: {0}")]
    Channel(#[from] channel::ChannelError),
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
}

/// Ground truth tracked by the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub t: u64,
    pub uavs: Vec<RigidBodyState>,
    pub serving: Vec<NodeId>,
    pub prev_serving: Vec<NodeId>,
    /// User count per node, TBSs first then the HAPS.
    pub loads: Vec<usize>,
    pub haps_load_bps: f64,
    pub targets: Vec<Vec3>,
    /// UAVs the HAPS tier has moved off the HAPS and not yet recalled.
    pub offloaded: BTreeSet<usize>,
    /// Serving link of every UAV after the last step.
    pub links: Vec<LinkSample>,
    /// HAPS rate of every UAV (zero when not associated).
    pub haps_rate_bps: Vec<f64>,
    /// Current HAPS channel gain of every UAV, fading included.
    pub haps_gain: Vec<f64>,
    /// SINR toward every node, TBSs first then the HAPS (linear).
    pub node_sinr: Vec<Vec<f64>>,
    /// Whether the serving node changed during the last step.
    pub handover: Vec<bool>,
    pub forced: Vec<bool>,
}

impl WorldState {
    pub fn num_uavs(&self) -> usize {
        self.uavs.len()
    }

    pub fn num_tbs(&self) -> usize {
        self.loads.len() - 1
    }

    pub fn load(&self, node: NodeId) -> usize {
        self.loads[node.index(self.num_tbs())]
    }

    pub fn haps_users(&self) -> Vec<usize> {
        (0..self.num_uavs())
            .filter(|&m| self.serving[m].is_haps())
            .collect()
    }

    fn recount_loads(&mut self) {
        let b = self.num_tbs();
        self.loads.iter_mut().for_each(|l| *l = 0);
        for n in &self.serving {
            self.loads[n.index(b)] += 1;
        }
    }
}

/// The simulated world plus its private random streams.
pub struct Env {
    cfg: ScenarioConfig,
    world: WorldState,
    fading_rngs: Vec<ChaCha8Rng>,
    sensor_rngs: Vec<ChaCha8Rng>,
    pending: Vec<MetaAction>,
    scheduler: Scheduler,
}

fn config_err(path: &str, reason: impl Into<String>) -> EnvError {
    EnvError::Config {
        path: path.into(),
        reason: reason.into(),
    }
}

impl Env {
    /// Build the initial world for `seed`. Returns the environment and the
    /// first observation of every UAV.
    pub fn reset(
        cfg: &ScenarioConfig,
        seed: u64,
    ) -> Result<(Self, Vec<LocalObservation>), EnvError> {
        cfg.validate().map_err(|e| config_err(&e.path, e.reason))?;
        let m_count = cfg.airspace.num_uavs;
        let num_tbs = cfg.channel.tbs.len();
        let (uavs, targets) = place_uavs(cfg, seed)?;

        let mut env = Env {
            cfg: cfg.clone(),
            world: WorldState {
                t: 0,
                uavs,
                serving: Vec::with_capacity(m_count),
                prev_serving: Vec::new(),
                loads: vec![0; num_tbs + 1],
                haps_load_bps: 0.0,
                targets,
                offloaded: BTreeSet::new(),
                links: vec![LinkSample::default(); m_count],
                haps_rate_bps: vec![0.0; m_count],
                haps_gain: vec![0.0; m_count],
                node_sinr: vec![vec![0.0; num_tbs + 1]; m_count],
                handover: vec![false; m_count],
                forced: vec![false; m_count],
            },
            fading_rngs: (0..m_count)
                .map(|m| substream(seed, Stream::Fading, m as u64))
                .collect(),
            sensor_rngs: (0..m_count)
                .map(|m| substream(seed, Stream::Sensor, m as u64))
                .collect(),
            pending: Vec::new(),
            scheduler: Scheduler::new(&cfg.timing),
        };
        env.sample_fading();
        env.initial_association()?;
        env.world.prev_serving = env.world.serving.clone();
        env.refresh_links()?;
        let obs = env.observe_all();
        Ok((env, obs))
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn scheduler(&self) -> Scheduler {
        self.scheduler
    }

    /// Queue a HAPS-tier directive for the start of the next step.
    pub fn queue_directive(&mut self, action: MetaAction) {
        self.pending.push(action);
    }

    /// Overwrite the serving node of `m`, bypassing admission. Used by
    /// fixtures that need a specific association to start from.
    pub fn force_association(&mut self, m: usize, node: NodeId) -> Result<(), EnvError> {
        self.world.serving[m] = node;
        self.world.prev_serving[m] = node;
        self.world.recount_loads();
        self.refresh_links()
    }

    /// Replace the kinematic state of `m` (fixtures only).
    pub fn set_uav_state(&mut self, m: usize, state: RigidBodyState) -> Result<(), EnvError> {
        self.world.uavs[m] = state;
        self.refresh_links()
    }

    pub fn observe_all(&mut self) -> Vec<LocalObservation> {
        (0..self.world.num_uavs())
            .map(|m| observe::observe_local(&self.world, m, &self.cfg, &mut self.sensor_rngs[m]))
            .collect()
    }

    pub fn observe_haps(&self) -> HapsObservation {
        observe::observe_haps(&self.world, &self.cfg)
    }

    /// Advance one step: HAPS-tier directives, then association commands in
    /// ascending UAV id, then physics, then links and rewards.
    pub fn step(
        &mut self,
        actions: &[JointAction],
        directives: &[MetaAction],
    ) -> Result<StepOutcome, EnvError> {
        let m_count = self.world.num_uavs();
        if actions.len() != m_count {
            return Err(EnvError::ActionCount {
                expected: m_count,
                got: actions.len(),
            });
        }
        let mut events = Vec::new();
        self.world.prev_serving = self.world.serving.clone();
        self.world.forced = vec![false; m_count];

        let mut queued = std::mem::take(&mut self.pending);
        queued.extend_from_slice(directives);
        for d in &queued {
            self.apply_directive(d, &mut events);
        }
        for (m, a) in actions.iter().enumerate() {
            self.apply_telecom(m, a.telecom, &mut events);
        }

        let params = &self.cfg.uav;
        for (m, a) in actions.iter().enumerate() {
            self.world.uavs[m] = physics::step(
                &self.world.uavs[m],
                a.rotor_rpm,
                self.cfg.timing.dt_s,
                params,
            )?;
        }

        for m in 0..m_count {
            let changed = self.world.serving[m] != self.world.prev_serving[m];
            self.world.handover[m] = changed;
            if changed {
                events.push(Event::Handover {
                    uav: m,
                    from: self.world.prev_serving[m],
                    to: self.world.serving[m],
                    forced: self.world.forced[m],
                });
            }
        }
        self.sample_fading();
        self.refresh_links()?;

        let rewards = self.rewards(&mut events);
        let capacity = self.cfg.channel.haps.capacity_limit_bps;
        let capacity_violation = self.world.haps_load_bps > capacity;
        if capacity_violation {
            events.push(Event::CapacityViolation {
                load_bps: self.world.haps_load_bps,
                capacity_bps: capacity,
            });
        }

        self.world.t += 1;
        let reached = (0..m_count).all(|m| {
            (self.world.uavs[m].position_m - self.world.targets[m]).norm()
                <= self.cfg.timing.target_reached_m
        });
        let done = self.world.t >= self.cfg.timing.horizon_steps || reached;
        let observations = self.observe_all();
        Ok(StepOutcome {
            rewards,
            observations,
            links: self.world.links.clone(),
            events,
            capacity_violation,
            done,
        })
    }

    fn rewards(&self, events: &mut Vec<Event>) -> Vec<RewardVector> {
        let w = &self.world;
        let rc = &self.cfg.rewards;
        let m_count = w.num_uavs();
        let mut nearest = vec![f64::INFINITY; m_count];
        for a in 0..m_count {
            for b in (a + 1)..m_count {
                let d = (w.uavs[a].position_m - w.uavs[b].position_m).norm();
                nearest[a] = nearest[a].min(d);
                nearest[b] = nearest[b].min(d);
                if d < rc.safe_distance_m {
                    events.push(Event::Collision {
                        a,
                        b,
                        distance_m: d,
                    });
                }
            }
        }
        (0..m_count)
            .map(|m| {
                let s = &w.uavs[m];
                let (roll, pitch, _) = s.euler_angles();
                let rpm_norm = s.rotor_rpm.map(|p| p / self.cfg.uav.rpm_max);
                let c_ho = if w.forced[m] && !rc.count_forced_handovers {
                    0.0
                } else {
                    reward::penalty_handover(w.prev_serving[m], w.serving[m], rc.handover_cost)
                };
                RewardVector {
                    r_tran: reward::reward_transport(
                        &s.position_m,
                        rpm_norm,
                        [roll, pitch],
                        &w.targets[m],
                        rc.alpha,
                    ),
                    r_tele: reward::reward_telecom(&w.links[m], rc.telecom_unit_bps),
                    c_safe: reward::penalty_safety(nearest[m], rc.safe_distance_m, rc.crash_reward),
                    c_ho,
                }
            })
            .collect()
    }

    fn sample_fading(&mut self) {
        let haps = &self.cfg.channel.haps;
        let hp = haps.position();
        for m in 0..self.world.num_uavs() {
            let h = channel::rician_sample(
                haps.rician_k_db,
                self.cfg.channel.normalize_fading,
                &mut self.fading_rngs[m],
            );
            let d = (self.world.uavs[m].position_m - hp).norm();
            self.world.haps_gain[m] = channel::haps_channel_gain(d, h.norm_sqr(), haps);
        }
    }

    /// Recompute loads, every UAV's SINR toward every node, HAPS rates and
    /// the serving links.
    fn refresh_links(&mut self) -> Result<(), EnvError> {
        let ch = &self.cfg.channel;
        let w = &mut self.world;
        let num_tbs = ch.tbs.len();
        w.recount_loads();
        let n_h = w.load(NodeId::Haps);
        let gamma = ch.handover_rate_penalty;

        let mut load = 0.0;
        for m in 0..w.uavs.len() {
            let pos = w.uavs[m].position_m;
            let mut tbs_links = Vec::with_capacity(num_tbs);
            for b in 0..num_tbs {
                let l = channel::g2a_sinr(&pos, b, &ch.tbs, &ch.path_loss, &ch.noise)?;
                w.node_sinr[m][b] = l.sinr_linear;
                tbs_links.push(l);
            }
            let on_haps = w.serving[m].is_haps();
            let share = if on_haps { n_h } else { n_h + 1 };
            let frac = 1.0 / share as f64;
            let haps_snr = haps_snr(frac, w.haps_gain[m], &ch.haps, &ch.noise);
            w.node_sinr[m][num_tbs] = haps_snr;

            let link = match w.serving[m] {
                NodeId::Tbs(b) => {
                    let mut l = tbs_links[b];
                    l.weighted_rate_bps = channel::weighted_rate(
                        l.rate_bps,
                        ch.tbs[b].quota,
                        w.loads[b],
                        w.handover[m],
                        gamma,
                    );
                    w.haps_rate_bps[m] = 0.0;
                    l
                }
                NodeId::Haps => {
                    let rate = channel::haps_rate(frac, 1.0, w.haps_gain[m], &ch.haps, &ch.noise);
                    load += rate;
                    w.haps_rate_bps[m] = rate;
                    let rel = pos - ch.haps.position();
                    LinkSample {
                        distance_m: rel.norm(),
                        azimuth_rad: (-rel.y).atan2(-rel.x),
                        elevation_rad: (-rel.z).atan2(rel.x.hypot(rel.y)),
                        gain_linear: w.haps_gain[m],
                        sinr_linear: haps_snr,
                        rate_bps: rate,
                        weighted_rate_bps: channel::weighted_rate(
                            rate,
                            ch.haps.quota,
                            n_h,
                            w.handover[m],
                            gamma,
                        ),
                        los_prob: 1.0,
                    }
                }
            };
            w.links[m] = link;
        }
        w.haps_load_bps = load;
        Ok(())
    }

    fn initial_association(&mut self) -> Result<(), EnvError> {
        let ch = &self.cfg.channel;
        let num_tbs = ch.tbs.len();
        let mut loads = vec![0usize; num_tbs + 1];
        let mut haps_users: Vec<usize> = Vec::new();
        let mut serving = Vec::with_capacity(self.world.num_uavs());
        for m in 0..self.world.num_uavs() {
            let pos = self.world.uavs[m].position_m;
            let mut candidates: Vec<(f64, NodeId)> = Vec::with_capacity(num_tbs + 1);
            for b in 0..num_tbs {
                let l = channel::g2a_sinr(&pos, b, &ch.tbs, &ch.path_loss, &ch.noise)?;
                candidates.push((l.sinr_linear, NodeId::Tbs(b)));
            }
            let frac = 1.0 / (haps_users.len() + 1) as f64;
            candidates.push((
                haps_snr(frac, self.world.haps_gain[m], &ch.haps, &ch.noise),
                NodeId::Haps,
            ));
            // Strongest first; equal SINR keeps index order.
            candidates.sort_by(|a, b| b.0.total_cmp(&a.0));

            let mut chosen = None;
            for (_, node) in candidates {
                let ok = match node {
                    NodeId::Tbs(b) => loads[b] < ch.tbs[b].quota,
                    NodeId::Haps => self.haps_admission(m, &haps_users).is_ok(),
                };
                if ok {
                    chosen = Some(node);
                    break;
                }
            }
            let node = chosen.unwrap_or_else(|| {
                log::warn!("UAV {m} found no node with free quota at reset");
                NodeId::Tbs(least_loaded(&loads[..num_tbs]))
            });
            loads[node.index(num_tbs)] += 1;
            if node.is_haps() {
                haps_users.push(m);
            }
            serving.push(node);
        }
        self.world.serving = serving;
        self.world.recount_loads();
        Ok(())
    }

    /// Whether the HAPS may take `m` on top of `current_users`.
    ///
    /// Without the HAPS tier every request is granted. With it, offloaded
    /// UAVs are refused, the quota is enforced, and the load projected with
    /// the mean fading gain must stay under the admission ceiling.
    fn haps_admission(&self, m: usize, current_users: &[usize]) -> Result<(), RejectReason> {
        if !self.cfg.ablation.meta_controller {
            return Ok(());
        }
        if self.world.offloaded.contains(&m) {
            return Err(RejectReason::Offloaded);
        }
        self.haps_capacity_check(m, current_users)
    }

    fn haps_capacity_check(&self, m: usize, current_users: &[usize]) -> Result<(), RejectReason> {
        let haps = &self.cfg.channel.haps;
        if current_users.len() + 1 > haps.quota {
            return Err(RejectReason::QuotaFull);
        }
        let hp = haps.position();
        let mut distances: Vec<f64> = current_users
            .iter()
            .map(|&u| (self.world.uavs[u].position_m - hp).norm())
            .collect();
        distances.push((self.world.uavs[m].position_m - hp).norm());
        let projected = projected_haps_load(&distances, &self.cfg.channel);
        if projected > haps.capacity_limit_bps * (1.0 - self.cfg.meta.admission_headroom) {
            return Err(RejectReason::CapacityProjection);
        }
        Ok(())
    }

    fn move_uav(&mut self, m: usize, to: NodeId, forced: bool) {
        let b = self.world.num_tbs();
        let from = self.world.serving[m];
        self.world.loads[from.index(b)] -= 1;
        self.world.loads[to.index(b)] += 1;
        self.world.serving[m] = to;
        if forced {
            self.world.forced[m] = true;
        }
    }

    fn apply_telecom(&mut self, m: usize, action: TelecomAction, events: &mut Vec<Event>) {
        let num_tbs = self.world.num_tbs();
        match action {
            TelecomAction::Stay => {}
            TelecomAction::Handover(b) if b >= num_tbs => events.push(Event::HandoverRejected {
                uav: m,
                target: NodeId::Tbs(b),
                reason: RejectReason::UnknownNode,
            }),
            TelecomAction::Handover(b) => {
                let target = NodeId::Tbs(b);
                if self.world.serving[m] == target {
                    return;
                }
                if self.world.loads[b] < self.cfg.channel.tbs[b].quota {
                    self.move_uav(m, target, false);
                } else {
                    events.push(Event::HandoverRejected {
                        uav: m,
                        target,
                        reason: RejectReason::QuotaFull,
                    });
                }
            }
            TelecomAction::RequestHaps => {
                if self.world.serving[m].is_haps() {
                    return;
                }
                match self.haps_admission(m, &self.world.haps_users()) {
                    Ok(()) => self.move_uav(m, NodeId::Haps, false),
                    Err(reason) => events.push(Event::HandoverRejected {
                        uav: m,
                        target: NodeId::Haps,
                        reason,
                    }),
                }
            }
        }
    }

    fn apply_directive(&mut self, action: &MetaAction, events: &mut Vec<Event>) {
        let num_tbs = self.world.num_tbs();
        match action {
            MetaAction::Idle => {}
            MetaAction::Offload(ids) => {
                for &m in ids {
                    if m >= self.world.num_uavs() || !self.world.serving[m].is_haps() {
                        log::warn!("ignoring offload of UAV {m}: not on the HAPS");
                        continue;
                    }
                    let in_quota: Vec<usize> = (0..num_tbs)
                        .filter(|&b| self.world.loads[b] < self.cfg.channel.tbs[b].quota)
                        .collect();
                    let landing = if in_quota.is_empty() {
                        let b = least_loaded(&self.world.loads[..num_tbs]);
                        events.push(Event::QuotaOverflow {
                            uav: m,
                            node: NodeId::Tbs(b),
                        });
                        b
                    } else {
                        *in_quota
                            .iter()
                            .min_by_key(|&&b| (self.world.loads[b], b))
                            .expect("nonempty")
                    };
                    self.move_uav(m, NodeId::Tbs(landing), true);
                    self.world.offloaded.insert(m);
                    events.push(Event::Offloaded { uav: m });
                }
            }
            MetaAction::Recall(ids) => {
                for &m in ids {
                    if !self.world.offloaded.contains(&m) {
                        log::warn!("ignoring recall of UAV {m}: not offloaded");
                        continue;
                    }
                    match self.haps_capacity_check(m, &self.world.haps_users()) {
                        Ok(()) => {
                            self.move_uav(m, NodeId::Haps, true);
                            self.world.offloaded.remove(&m);
                            events.push(Event::Recalled { uav: m });
                        }
                        Err(reason) => events.push(Event::HandoverRejected {
                            uav: m,
                            target: NodeId::Haps,
                            reason,
                        }),
                    }
                }
            }
        }
    }
}

fn least_loaded(loads: &[usize]) -> usize {
    (0..loads.len()).min_by_key(|&b| (loads[b], b)).unwrap_or(0)
}

/// HAPS uplink SNR for a bandwidth share and full power.
pub fn haps_snr(
    bandwidth_frac: f64,
    gain: f64,
    haps: &channel::HapsConfig,
    noise: &channel::NoiseModel,
) -> f64 {
    let bw = bandwidth_frac * haps.total_bandwidth_hz;
    channel::dbm_to_mw(haps.max_uav_tx_power_dbm) * gain / noise.power_mw(bw)
}

/// Aggregate HAPS load for users at `distances_m`, equal split, mean fading.
pub fn projected_haps_load(distances_m: &[f64], ch: &channel::ChannelConfig) -> f64 {
    if distances_m.is_empty() {
        return 0.0;
    }
    let frac = 1.0 / distances_m.len() as f64;
    let mean_power = channel::rician_mean_power(ch.haps.rician_k_db, ch.normalize_fading);
    distances_m
        .iter()
        .map(|&d| {
            let g = channel::haps_channel_gain(d, mean_power, &ch.haps);
            channel::haps_rate(frac, 1.0, g, &ch.haps, &ch.noise)
        })
        .sum()
}

fn place_uavs(
    cfg: &ScenarioConfig,
    seed: u64,
) -> Result<(Vec<RigidBodyState>, Vec<Vec3>), EnvError> {
    let a = &cfg.airspace;
    let mut rng = substream(seed, Stream::Placement, 0);
    let mut origins: Vec<Vec3> = Vec::with_capacity(a.num_uavs);
    let mut states = Vec::with_capacity(a.num_uavs);
    let mut targets = Vec::with_capacity(a.num_uavs);
    let inside = |p: &Vec3| (0..3).all(|i| p[i] >= 0.0 && p[i] <= a.size_m[i]);

    for m in 0..a.num_uavs {
        let (origin, target, yaw) = if let Some(s) = a.uavs.get(m) {
            let o = Vec3::from(s.origin_m);
            let t = Vec3::from(s.target_m);
            if !inside(&o) || !inside(&t) {
                return Err(config_err(
                    &format!("airspace.uavs[{m}]"),
                    "origin or target outside the airspace",
                ));
            }
            if let Some(j) = origins
                .iter()
                .position(|p| (p - o).norm() < cfg.rewards.safe_distance_m)
            {
                return Err(config_err(
                    &format!("airspace.uavs[{m}].origin_m"),
                    format!("closer than the safety distance to UAV {j}"),
                ));
            }
            (o, t, s.yaw_rad)
        } else {
            let mut found = None;
            for _ in 0..a.placement_attempts {
                let o = Vec3::new(
                    rng.gen_range(a.spawn_margin_m..=a.size_m[0] - a.spawn_margin_m),
                    rng.gen_range(a.spawn_margin_m..=a.size_m[1] - a.spawn_margin_m),
                    rng.gen_range(a.spawn_altitude_m[0]..=a.spawn_altitude_m[1]),
                );
                if origins
                    .iter()
                    .all(|p| (p - o).norm() >= a.min_spawn_separation_m)
                {
                    found = Some(o);
                    break;
                }
            }
            let Some(o) = found else {
                return Err(config_err(
                    "airspace.num_uavs",
                    format!(
                        "could not place UAV {m} with {} m separation",
                        a.min_spawn_separation_m
                    ),
                ));
            };
            let heading = rng.gen_range(0.0..std::f64::consts::TAU);
            let range = rng.gen_range(a.target_distance_m[0]..=a.target_distance_m[1]);
            let t = Vec3::new(
                (o.x + range * heading.cos()).clamp(0.0, a.size_m[0]),
                (o.y + range * heading.sin()).clamp(0.0, a.size_m[1]),
                rng.gen_range(a.spawn_altitude_m[0]..=a.spawn_altitude_m[1]),
            );
            (o, t, None)
        };
        let yaw = yaw.unwrap_or_else(|| (target.y - origin.y).atan2(target.x - origin.x));
        states.push(RigidBodyState::hovering(origin, yaw, &cfg.uav));
        origins.push(origin);
        targets.push(target);
    }
    Ok((states, targets))
}
