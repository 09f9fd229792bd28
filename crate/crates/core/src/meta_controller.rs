//! HAPS-tier admission manager.
//!
//! Runs on the slow gate. Rule mode offloads the lowest-rate HAPS users when
//! the platform is over quota or over capacity, and recalls held-off UAVs
//! nearest first while the projected load leaves headroom. Semantic mode asks
//! a policy instead and falls back to the rules on anything unusable.

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelConfig, LinkSample};
use crate::cognition::memory::{haps_embedder, haps_features};
use crate::cognition::prompt::{render_memory, HAPS_STATIC};
use crate::cognition::{
    decide_meta, discretize_haps, reflect, CognitionConfig, Degradation, Embedder, EpisodicMemory,
    MemoryRecord, PromptBundle, RecordReward, Reflection, SemanticPolicy,
};
use crate::config::{ConfigError, ScenarioConfig};
use crate::env::{projected_haps_load, Env, HapsObservation, HapsUserView, MetaAction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetaConfig {
    /// Weights of total weighted rate, capacity violation and handovers.
    pub eta: [f64; 3],
    /// Admission and recall keep the projected load below
    /// `capacity · (1 − headroom)`.
    pub admission_headroom: f64,
    /// Unit of the rate term, in bit/s.
    pub reward_unit_bps: f64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            eta: [1.0, 50.0, 5.0],
            admission_headroom: 0.2,
            reward_unit_bps: 1e6,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.eta.iter().any(|e| !(*e >= 0.0)) {
            return Err(ConfigError::new("meta.eta", "weights must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.admission_headroom) {
            return Err(ConfigError::new(
                "meta.admission_headroom",
                "must lie in [0, 1)",
            ));
        }
        if !(self.reward_unit_bps > 0.0) {
            return Err(ConfigError::new("meta.reward_unit_bps", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaMode {
    Rule,
    Semantic,
}

/// Associated users, lowest weighted rate first, ties by id.
pub fn offload_ranking(obs: &HapsObservation) -> Vec<&HapsUserView> {
    let mut users: Vec<_> = obs.associated().collect();
    users.sort_by(|a, b| {
        a.weighted_rate_bps
            .total_cmp(&b.weighted_rate_bps)
            .then(a.uav.cmp(&b.uav))
    });
    users
}

/// Offloaded users, nearest (highest projected rate) first, ties by id.
pub fn recall_ranking(obs: &HapsObservation) -> Vec<&HapsUserView> {
    let mut users: Vec<_> = obs
        .users
        .iter()
        .filter(|u| u.offloaded && !u.associated)
        .collect();
    users.sort_by(|a, b| {
        a.distance_m
            .total_cmp(&b.distance_m)
            .then(a.uav.cmp(&b.uav))
    });
    users
}

fn distances(users: &[&HapsUserView]) -> Vec<f64> {
    users.iter().map(|u| u.distance_m).collect()
}

/// Rule-mode decision.
pub fn rule_decide(obs: &HapsObservation, ch: &ChannelConfig, headroom: f64) -> MetaAction {
    let ranked = offload_ranking(obs);
    let n = ranked.len();
    let over_capacity = obs.haps_load_bps > obs.capacity_bps;
    if over_capacity || n > obs.quota {
        let by_quota = n.saturating_sub(obs.quota);
        // Fewest removals that bring the projected load of the rest under capacity.
        let by_capacity = (0..=n)
            .find(|&k| projected_haps_load(&distances(&ranked[k..]), ch) <= obs.capacity_bps)
            .unwrap_or(n);
        let mut k = by_quota.max(by_capacity);
        if over_capacity {
            k = k.max(1);
        }
        let k = k.min(n);
        if k > 0 {
            return MetaAction::Offload(ranked[..k].iter().map(|u| u.uav).collect());
        }
        return MetaAction::Idle;
    }

    let ceiling = obs.capacity_bps * (1.0 - headroom);
    if obs.haps_load_bps < ceiling && n < obs.quota {
        let mut kept = distances(&ranked);
        let mut recalled = Vec::new();
        for cand in recall_ranking(obs) {
            if kept.len() + 1 > obs.quota {
                break;
            }
            kept.push(cand.distance_m);
            if projected_haps_load(&kept, ch) > ceiling {
                break;
            }
            recalled.push(cand.uav);
        }
        if !recalled.is_empty() {
            return MetaAction::Recall(recalled);
        }
    }
    MetaAction::Idle
}

/// Reject semantic-mode actions that break the tier's invariants.
pub fn validate_action(
    action: &MetaAction,
    obs: &HapsObservation,
    ch: &ChannelConfig,
    headroom: f64,
) -> Result<(), String> {
    let n = obs.num_associated();
    let user = |id: usize| obs.users.iter().find(|u| u.uav == id);
    let ids = action.uav_ids();
    let mut unique = ids.to_vec();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() != ids.len() {
        return Err("duplicate UAV ids".into());
    }
    match action {
        MetaAction::Idle => {
            if n > obs.quota {
                return Err(format!("Idle with {n} users over quota {}", obs.quota));
            }
            if obs.haps_load_bps > obs.capacity_bps {
                return Err("Idle while over capacity".into());
            }
        }
        MetaAction::Offload(ids) => {
            if ids.is_empty() {
                return Err("empty Offload".into());
            }
            if let Some(bad) = ids
                .iter()
                .find(|&&id| !user(id).is_some_and(|u| u.associated))
            {
                return Err(format!("UAV {bad} is not on the HAPS"));
            }
            if n - ids.len() > obs.quota {
                return Err(format!(
                    "Offload leaves {} users over quota {}",
                    n - ids.len(),
                    obs.quota
                ));
            }
        }
        MetaAction::Recall(ids) => {
            if ids.is_empty() {
                return Err("empty Recall".into());
            }
            if let Some(bad) = ids
                .iter()
                .find(|&&id| !user(id).is_some_and(|u| u.offloaded && !u.associated))
            {
                return Err(format!("UAV {bad} is not held off the HAPS"));
            }
            if n + ids.len() > obs.quota {
                return Err(format!("Recall would exceed quota {}", obs.quota));
            }
            let mut d: Vec<f64> = obs.associated().map(|u| u.distance_m).collect();
            d.extend(ids.iter().filter_map(|&id| user(id)).map(|u| u.distance_m));
            if projected_haps_load(&d, ch) > obs.capacity_bps * (1.0 - headroom) {
                return Err("Recall would exceed the projected load ceiling".into());
            }
        }
    }
    Ok(())
}

/// Global reward of one step: weighted-rate total, minus a flat penalty
/// when the HAPS is over capacity, minus a cost per handover.
pub fn meta_reward(
    links: &[LinkSample],
    capacity_violation: bool,
    handovers: usize,
    cfg: &MetaConfig,
) -> f64 {
    let rate: f64 = links.iter().map(|l| l.weighted_rate_bps).sum::<f64>() / cfg.reward_unit_bps;
    cfg.eta[0] * rate
        - cfg.eta[1] * f64::from(u8::from(capacity_violation))
        - cfg.eta[2] * handovers as f64
}

/// Hand `action` to the environment; it takes effect at the start of the
/// next step.
pub fn broadcast(action: &MetaAction, env: &mut Env) {
    if *action != MetaAction::Idle {
        env.queue_directive(action.clone());
    }
}

/// Where a decision came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionSource {
    Rule,
    Semantic,
    /// Semantic mode fell back to the rules.
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaDecision {
    pub action: MetaAction,
    pub source: DecisionSource,
    pub degraded: Option<Degradation>,
    /// Why a parsed semantic action was rejected.
    pub rejected: Option<String>,
    pub reply: Option<String>,
}

struct Pending {
    obs_text: String,
    action: String,
    raw_features: Vec<f64>,
    reward: f64,
}

pub struct MetaController {
    mode: MetaMode,
    cfg: MetaConfig,
    channel: ChannelConfig,
    cognition: CognitionConfig,
    memory_prompt: bool,
    memory: EpisodicMemory,
    embedder: Embedder,
    pending: Option<Pending>,
}

impl MetaController {
    pub fn new(mode: MetaMode, cfg: &ScenarioConfig) -> Self {
        Self {
            mode,
            cfg: cfg.meta.clone(),
            channel: cfg.channel.clone(),
            cognition: cfg.cognition.clone(),
            memory_prompt: cfg.ablation.memory_prompt,
            memory: EpisodicMemory::new(cfg.cognition.memory_capacity),
            embedder: haps_embedder(
                cfg.channel.haps.capacity_limit_bps,
                cfg.channel.haps.quota,
                cfg.airspace.num_uavs,
            ),
            pending: None,
        }
    }

    pub fn mode(&self) -> MetaMode {
        self.mode
    }

    pub fn memory(&self) -> &EpisodicMemory {
        &self.memory
    }

    pub fn build_prompt(&self, obs: &HapsObservation) -> PromptBundle {
        let dynamic = discretize_haps(obs, &self.cognition);
        let memory = if self.memory_prompt {
            let q = self.embedder.embed(&haps_features(obs));
            render_memory(&self.memory.retrieve_top_k(&q, self.cognition.retrieval_k))
        } else {
            render_memory(&[])
        };
        PromptBundle::new(HAPS_STATIC, &dynamic, &memory)
    }

    /// Decide at a HAPS gate. The previous decision's memory record is
    /// closed first, using `obs` as its successor state.
    pub fn decide(
        &mut self,
        obs: &HapsObservation,
        mut policy: Option<&mut dyn SemanticPolicy>,
    ) -> (MetaDecision, Option<Reflection>) {
        let reflection = match policy.as_mut() {
            Some(p) => self.close_record(obs, Some(&mut **p)),
            None => self.close_record(obs, None),
        };
        let headroom = self.cfg.admission_headroom;
        let decision = match (self.mode, policy) {
            (MetaMode::Semantic, Some(policy)) => {
                let prompt = self.build_prompt(obs);
                let d = decide_meta(policy, &prompt, &self.cognition.format_reminder_haps);
                if d.degraded.is_some() {
                    MetaDecision {
                        action: rule_decide(obs, &self.channel, headroom),
                        source: DecisionSource::Fallback,
                        degraded: d.degraded,
                        rejected: None,
                        reply: d.reply,
                    }
                } else {
                    match validate_action(&d.value, obs, &self.channel, headroom) {
                        Ok(()) => MetaDecision {
                            action: d.value,
                            source: DecisionSource::Semantic,
                            degraded: None,
                            rejected: None,
                            reply: d.reply,
                        },
                        Err(why) => {
                            log::info!("rejected HAPS-tier action `{}`: {why}", d.value);
                            MetaDecision {
                                action: rule_decide(obs, &self.channel, headroom),
                                source: DecisionSource::Fallback,
                                degraded: None,
                                rejected: Some(why),
                                reply: d.reply,
                            }
                        }
                    }
                }
            }
            _ => MetaDecision {
                action: rule_decide(obs, &self.channel, headroom),
                source: DecisionSource::Rule,
                degraded: None,
                rejected: None,
                reply: None,
            },
        };
        self.pending = Some(Pending {
            obs_text: discretize_haps(obs, &self.cognition),
            action: decision.action.to_string(),
            raw_features: haps_features(obs),
            reward: 0.0,
        });
        (decision, reflection)
    }

    /// Add one step of global reward to the open decision.
    pub fn accumulate(&mut self, reward: f64) {
        if let Some(p) = self.pending.as_mut() {
            p.reward += reward;
        }
    }

    /// Store the open decision with its accumulated reward. Called by
    /// `decide` and at episode end.
    pub fn close_record(
        &mut self,
        next: &HapsObservation,
        policy: Option<&mut dyn SemanticPolicy>,
    ) -> Option<Reflection> {
        let p = self.pending.take()?;
        let next_text = discretize_haps(next, &self.cognition);
        let reward = RecordReward::Scalar(p.reward);
        let reflection = reflect(
            policy,
            &p.obs_text,
            &p.action,
            &reward,
            p.reward,
            &next_text,
            self.cognition.haps_reflection_threshold,
            &self.cognition.reflection_fallback,
        );
        self.memory.push(MemoryRecord {
            seq: 0,
            embedding: self.embedder.update_and_embed(&p.raw_features),
            observation: p.obs_text,
            action: p.action,
            reward,
            next_observation: next_text,
            correction: reflection.correction.clone(),
        });
        Some(reflection)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cognition::{HeuristicPolicy, OfflinePolicy, ScriptedPolicy};

    fn obs_with(n_assoc: usize, offloaded: usize, load: f64) -> HapsObservation {
        let mut users = Vec::new();
        for i in 0..n_assoc {
            users.push(HapsUserView {
                uav: i,
                distance_m: 19_900.0 + i as f64,
                associated: true,
                offloaded: false,
                rate_bps: 10e6 + i as f64,
                weighted_rate_bps: 10e6 + (i % 3) as f64 * 1e5,
            });
        }
        for j in 0..offloaded {
            users.push(HapsUserView {
                uav: n_assoc + j,
                distance_m: 19_950.0 - j as f64,
                associated: false,
                offloaded: true,
                rate_bps: 0.0,
                weighted_rate_bps: 0.0,
            });
        }
        HapsObservation {
            t: 0,
            haps_load_bps: load,
            capacity_bps: 100e6,
            remaining_capacity_bps: (100e6 - load).max(0.0),
            quota: 5,
            users,
        }
    }

    fn load_of(n: usize) -> f64 {
        let ch = ChannelConfig::default();
        projected_haps_load(&vec![19_900.0; n], &ch)
    }

    #[test]
    fn projected_load_reference_points() {
        // Sum of n equal shares of a 20 MHz, ~4.6 mean-SNR link.
        assert!((load_of(4) / 1e6 - 85.6).abs() < 1.0, "{}", load_of(4));
        assert!((load_of(7) / 1e6 - 101.1).abs() < 1.0, "{}", load_of(7));
    }

    #[test]
    fn offload_counts() {
        let ch = ChannelConfig::default();
        assert_eq!(
            rule_decide(&obs_with(4, 0, load_of(4)), &ch, 0.2),
            MetaAction::Idle
        );
        let seven = rule_decide(&obs_with(7, 0, load_of(7)), &ch, 0.2);
        assert_eq!(seven.uav_ids().len(), 2);
        let ten = rule_decide(&obs_with(10, 0, load_of(10)), &ch, 0.2);
        assert_eq!(ten.uav_ids().len(), 5);
        // Lowest weighted rate first, ties by id: rates cycle 0,1,2 over ids.
        assert_eq!(ten, MetaAction::Offload(vec![0, 3, 6, 9, 1]));
    }

    #[test]
    fn recall_respects_quota_and_ceiling() {
        let ch = ChannelConfig::default();
        // Two users, three held off: the ceiling (80 Mbps) admits one more.
        let a = rule_decide(&obs_with(2, 3, load_of(2)), &ch, 0.2);
        assert_eq!(a, MetaAction::Recall(vec![4]));
        // Without headroom all three fit: five users project to ~92 Mbps.
        let b = rule_decide(&obs_with(2, 3, load_of(2)), &ch, 0.0);
        assert_eq!(b, MetaAction::Recall(vec![4, 3, 2]));
        // Stationary below limits with no one held off: Idle every time.
        for _ in 0..10 {
            assert_eq!(
                rule_decide(&obs_with(3, 0, load_of(3)), &ch, 0.2),
                MetaAction::Idle
            );
        }
    }

    #[test]
    fn post_offload_feasibility() {
        let ch = ChannelConfig::default();
        for n in 0..=12 {
            let o = obs_with(n, 0, load_of(n));
            let k = rule_decide(&o, &ch, 0.2).uav_ids().len();
            assert!(n - k <= o.quota);
            if n > 0 && n - k > 0 {
                assert!(load_of(n - k) <= 100e6);
            }
        }
    }

    #[test]
    fn validation() {
        let ch = ChannelConfig::default();
        let o = obs_with(7, 1, load_of(7));
        assert!(validate_action(&MetaAction::Idle, &o, &ch, 0.2).is_err());
        assert!(validate_action(&MetaAction::Offload(vec![0]), &o, &ch, 0.2).is_err());
        assert!(validate_action(&MetaAction::Offload(vec![0, 1]), &o, &ch, 0.2).is_ok());
        assert!(validate_action(&MetaAction::Offload(vec![7, 1]), &o, &ch, 0.2).is_err());
        assert!(validate_action(&MetaAction::Offload(vec![1, 1, 2]), &o, &ch, 0.2).is_err());
        let small = obs_with(2, 2, load_of(2));
        assert!(validate_action(&MetaAction::Recall(vec![3]), &small, &ch, 0.2).is_ok());
        assert!(validate_action(&MetaAction::Recall(vec![2, 3]), &small, &ch, 0.2).is_err());
        assert!(validate_action(&MetaAction::Recall(vec![0]), &small, &ch, 0.2).is_err());
    }

    #[test]
    fn reward_terms() {
        let cfg = MetaConfig::default();
        let link = |wr: f64| LinkSample {
            weighted_rate_bps: wr,
            ..Default::default()
        };
        let links = [link(3e6), link(2e6)];
        assert_eq!(meta_reward(&links, false, 0, &cfg), 5.0);
        assert_eq!(meta_reward(&links, true, 0, &cfg), 5.0 - 50.0);
        assert_eq!(meta_reward(&links, false, 3, &cfg), 5.0 - 15.0);
    }

    #[test]
    fn semantic_mode_validates_and_falls_back() {
        let cfg = ScenarioConfig::default();
        let o = obs_with(7, 0, load_of(7));
        let mut m = MetaController::new(MetaMode::Semantic, &cfg);
        let mut h = HeuristicPolicy;
        let (d, _) = m.decide(&o, Some(&mut h));
        assert_eq!(d.source, DecisionSource::Semantic);
        assert_eq!(d.action, MetaAction::Offload(vec![0, 3]));

        let mut bad = ScriptedPolicy::always("ACTION Idle");
        let (d, _) = m.decide(&o, Some(&mut bad));
        assert_eq!(d.source, DecisionSource::Fallback);
        assert!(d.rejected.is_some());
        assert_eq!(d.action, rule_decide(&o, &cfg.channel, 0.2));

        let mut off = OfflinePolicy;
        let (d, _) = m.decide(&o, Some(&mut off));
        assert_eq!(d.source, DecisionSource::Fallback);
        assert!(d.degraded.is_some());
        assert_eq!(m.memory().len(), 2);
    }
}
