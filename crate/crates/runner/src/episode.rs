//! Episode loop, trajectory records and episode summaries.

use std::io::{self, BufRead, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use skylane::channel::LinkSample;
use skylane::cognition::{Degradation, SemanticDirective, SemanticPolicy};
use skylane::edge_agent::EdgeAgent;
use skylane::env::{Env, Event, MetaAction, NodeId, RewardVector};
use skylane::meta_controller::{meta_reward, DecisionSource, MetaConfig, MetaController, MetaMode};
use skylane::rng::episode_seed;
use skylane::ScenarioConfig;

use crate::backend::{meta_mode, slot, PolicySet};
use crate::RunError;

/// One UAV at one step. States are ground truth after the step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub episode: usize,
    pub t: u64,
    pub uav: usize,
    pub position_m: [f64; 3],
    pub velocity_mps: [f64; 3],
    pub euler_rad: [f64; 3],
    pub angular_rate_radps: [f64; 3],
    pub rotor_rpm: [f64; 4],
    pub directive: String,
    pub telecom: String,
    pub serving: NodeId,
    pub handover: bool,
    pub reward: RewardVector,
    pub link: LinkSample,
    /// Events that involve this UAV.
    pub events: Vec<Event>,
    pub capacity_violation: bool,
    pub haps_load_bps: f64,
    pub llm_gate: bool,
    pub degraded: Option<Degradation>,
    pub correction: String,
    pub loss: Option<f64>,
}

/// One HAPS-tier decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaRecord {
    pub episode: usize,
    pub t: u64,
    pub action: MetaAction,
    pub source: DecisionSource,
    pub degraded: Option<Degradation>,
    pub rejected: Option<String>,
    pub reply: Option<String>,
    pub haps_load_bps: f64,
    pub num_associated: usize,
    /// Global reward accumulated under the previous decision.
    pub previous_reward: f64,
    /// Reflection on the previous decision.
    pub correction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub seed: u64,
    pub num_uavs: usize,
    pub steps: u64,
    pub total_r_tran: f64,
    pub total_r_tele: f64,
    pub total_c_safe: f64,
    pub total_c_ho: f64,
    pub handovers: u64,
    /// Handovers per UAV-step.
    pub handover_probability: f64,
    /// Collision events, one per close pair per step.
    pub collisions: u64,
    /// Fraction of UAV-steps with a safety penalty.
    pub collision_rate: f64,
    pub capacity_violation_steps: u64,
    pub capacity_violation_fraction: f64,
    /// Mean serving-link rate over UAV-steps.
    pub mean_datarate_mbps: f64,
    /// Sum of the HAPS-tier global reward over all steps.
    pub meta_reward: f64,
    pub degradations: u64,
    pub wall_clock_s: f64,
}

/// Builds an `EpisodeSummary` from step records in log order. The live
/// loop and the log re-derivation both go through here.
#[derive(Debug, Clone)]
pub struct Aggregator {
    meta: MetaConfig,
    episode: usize,
    seed: u64,
    num_uavs: usize,
    steps: u64,
    r: [f64; 4],
    handovers: u64,
    collisions: u64,
    unsafe_uav_steps: u64,
    violation_steps: u64,
    rate_sum_bps: f64,
    meta_reward: f64,
    degradations: u64,
}

impl Aggregator {
    pub fn new(meta: &MetaConfig, episode: usize, seed: u64, num_uavs: usize) -> Self {
        Self {
            meta: meta.clone(),
            episode,
            seed,
            num_uavs,
            steps: 0,
            r: [0.0; 4],
            handovers: 0,
            collisions: 0,
            unsafe_uav_steps: 0,
            violation_steps: 0,
            rate_sum_bps: 0.0,
            meta_reward: 0.0,
            degradations: 0,
        }
    }

    pub fn push(&mut self, rec: &StepRecord) {
        if rec.uav == 0 {
            self.steps += 1;
            if rec.capacity_violation {
                self.violation_steps += 1;
                self.meta_reward -= self.meta.eta[1];
            }
        }
        self.r[0] += rec.reward.r_tran;
        self.r[1] += rec.reward.r_tele;
        self.r[2] += rec.reward.c_safe;
        self.r[3] += rec.reward.c_ho;
        if rec.handover {
            self.handovers += 1;
        }
        if rec.reward.c_safe > 0.0 {
            self.unsafe_uav_steps += 1;
        }
        self.collisions += rec
            .events
            .iter()
            .filter(|e| matches!(e, Event::Collision { a, .. } if *a == rec.uav))
            .count() as u64;
        self.rate_sum_bps += rec.link.rate_bps;
        self.meta_reward += self.meta.eta[0] * rec.link.weighted_rate_bps
            / self.meta.reward_unit_bps
            - self.meta.eta[2] * f64::from(u8::from(rec.handover));
        if rec.degraded.is_some() {
            self.degradations += 1;
        }
    }

    pub fn finish(&self, wall_clock_s: f64) -> EpisodeSummary {
        let uav_steps = (self.steps * self.num_uavs as u64).max(1) as f64;
        EpisodeSummary {
            episode: self.episode,
            seed: self.seed,
            num_uavs: self.num_uavs,
            steps: self.steps,
            total_r_tran: self.r[0],
            total_r_tele: self.r[1],
            total_c_safe: self.r[2],
            total_c_ho: self.r[3],
            handovers: self.handovers,
            handover_probability: self.handovers as f64 / uav_steps,
            collisions: self.collisions,
            collision_rate: self.unsafe_uav_steps as f64 / uav_steps,
            capacity_violation_steps: self.violation_steps,
            capacity_violation_fraction: self.violation_steps as f64 / self.steps.max(1) as f64,
            mean_datarate_mbps: self.rate_sum_bps / uav_steps / 1e6,
            meta_reward: self.meta_reward,
            degradations: self.degradations,
            wall_clock_s,
        }
    }
}

/// Re-derive episode summaries from a trajectory JSONL stream written by a
/// run of `cfg` rooted at `seed`. Wall-clock time is not logged and comes
/// back as zero.
pub fn summarize_jsonl<R: BufRead>(
    reader: R,
    cfg: &ScenarioConfig,
    seed: u64,
) -> Result<Vec<EpisodeSummary>, RunError> {
    let mut out = Vec::new();
    let mut current: Option<Aggregator> = None;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: StepRecord = serde_json::from_str(&line)
            .map_err(|e| RunError::Schema(format!("trajectory line: {e}")))?;
        if current.as_ref().map_or(true, |a| a.episode != rec.episode) {
            if let Some(a) = current.take() {
                out.push(a.finish(0.0));
            }
            let ep_seed = episode_seed(seed, rec.episode as u64);
            current = Some(Aggregator::new(
                &cfg.meta,
                rec.episode,
                ep_seed,
                cfg.airspace.num_uavs,
            ));
        }
        current.as_mut().expect("started above").push(&rec);
    }
    if let Some(a) = current {
        out.push(a.finish(0.0));
    }
    Ok(out)
}

/// Destination for per-step and per-decision records.
pub trait TraceSink {
    fn step(&mut self, rec: &StepRecord) -> io::Result<()>;
    fn meta(&mut self, rec: &MetaRecord) -> io::Result<()>;
}

pub struct NullSink;

impl TraceSink for NullSink {
    fn step(&mut self, _: &StepRecord) -> io::Result<()> {
        Ok(())
    }
    fn meta(&mut self, _: &MetaRecord) -> io::Result<()> {
        Ok(())
    }
}

/// Keeps every record in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub steps: Vec<StepRecord>,
    pub meta: Vec<MetaRecord>,
}

impl TraceSink for MemorySink {
    fn step(&mut self, rec: &StepRecord) -> io::Result<()> {
        self.steps.push(rec.clone());
        Ok(())
    }
    fn meta(&mut self, rec: &MetaRecord) -> io::Result<()> {
        self.meta.push(rec.clone());
        Ok(())
    }
}

/// One JSON object per line for each record kind.
pub struct JsonlSink<W: Write> {
    pub steps: W,
    pub meta: W,
}

impl<W: Write> TraceSink for JsonlSink<W> {
    fn step(&mut self, rec: &StepRecord) -> io::Result<()> {
        serde_json::to_writer(&mut self.steps, rec)?;
        self.steps.write_all(b"\n")
    }
    fn meta(&mut self, rec: &MetaRecord) -> io::Result<()> {
        serde_json::to_writer(&mut self.meta, rec)?;
        self.meta.write_all(b"\n")
    }
}

/// The HAPS tier asks its own backend in semantic mode; in rule mode the
/// backend is only used to reflect on past decisions.
fn meta_slot(mode: MetaMode, p: &mut PolicySet) -> Option<&mut dyn SemanticPolicy> {
    match mode {
        MetaMode::Rule => slot(&mut p.reflection),
        MetaMode::Semantic => slot(&mut p.haps),
    }
}

/// Agents, HAPS tier and backends that persist across the episodes of a run.
pub struct Session {
    cfg: ScenarioConfig,
    seed: u64,
    agents: Vec<EdgeAgent>,
    meta: MetaController,
    policies: PolicySet,
    episodes_run: usize,
}

impl Session {
    pub fn new(cfg: &ScenarioConfig, seed: u64, policies: PolicySet) -> Result<Self, RunError> {
        cfg.validate()?;
        let agents = (0..cfg.airspace.num_uavs)
            .map(|m| EdgeAgent::new(m, cfg, seed))
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            seed,
            agents,
            meta: MetaController::new(meta_mode(cfg.backend.mode), cfg),
            policies,
            episodes_run: 0,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn agents(&self) -> &[EdgeAgent] {
        &self.agents
    }

    pub fn meta(&self) -> &MetaController {
        &self.meta
    }

    pub fn episodes_run(&self) -> usize {
        self.episodes_run
    }

    /// Run the next episode to its horizon or until every UAV reaches its
    /// target.
    pub fn run_episode(&mut self, sink: &mut dyn TraceSink) -> Result<EpisodeSummary, RunError> {
        let started = Instant::now();
        let episode = self.episodes_run;
        self.episodes_run += 1;
        let seed = episode_seed(self.seed, episode as u64);
        let (mut env, mut obs) = Env::reset(&self.cfg, seed)?;
        for (agent, o) in self.agents.iter_mut().zip(&obs) {
            agent.set_directive(SemanticDirective::HOVER, o);
        }
        let scheduler = env.scheduler();
        let meta_on = self.cfg.ablation.meta_controller;
        let mut agg = Aggregator::new(&self.cfg.meta, episode, seed, self.agents.len());
        let mut since_decision = 0.0;

        for t in 0..self.cfg.timing.horizon_steps {
            let gates = scheduler.gates(t);
            let mut directives = Vec::new();
            if meta_on && gates.haps {
                let hobs = env.observe_haps();
                let policy = meta_slot(self.meta.mode(), &mut self.policies);
                let (decision, reflection) = self.meta.decide(&hobs, policy);
                sink.meta(&MetaRecord {
                    episode,
                    t,
                    action: decision.action.clone(),
                    source: decision.source,
                    degraded: decision.degraded.clone(),
                    rejected: decision.rejected.clone(),
                    reply: decision.reply.clone(),
                    haps_load_bps: hobs.haps_load_bps,
                    num_associated: hobs.num_associated(),
                    previous_reward: since_decision,
                    correction: reflection.map(|r| r.correction).unwrap_or_default(),
                })?;
                since_decision = 0.0;
                if decision.action != MetaAction::Idle {
                    directives.push(decision.action);
                }
            }

            let mut steps = Vec::with_capacity(self.agents.len());
            for (agent, o) in self.agents.iter_mut().zip(&obs) {
                steps.push(agent.act(o, gates, slot(&mut self.policies.uav)));
            }
            let actions: Vec<_> = steps.iter().map(|s| s.action).collect();
            let out = env.step(&actions, &directives)?;

            let handovers = out
                .events
                .iter()
                .filter(|e| matches!(e, Event::Handover { .. }))
                .count();
            let r = meta_reward(
                &out.links,
                out.capacity_violation,
                handovers,
                &self.cfg.meta,
            );
            since_decision += r;
            if meta_on {
                self.meta.accumulate(r);
            }

            let world = env.world();
            for (m, agent) in self.agents.iter_mut().enumerate() {
                let report = agent.observe(
                    &out.rewards[m],
                    &out.observations[m],
                    out.done,
                    slot(&mut self.policies.reflection),
                );
                let s = &world.uavs[m];
                let (roll, pitch, yaw) = s.euler_angles();
                let rec = StepRecord {
                    episode,
                    t,
                    uav: m,
                    position_m: s.position_m.into(),
                    velocity_mps: s.velocity_mps.into(),
                    euler_rad: [roll, pitch, yaw],
                    angular_rate_radps: s.angular_rate_radps.into(),
                    rotor_rpm: s.rotor_rpm,
                    directive: agent.directive().to_string(),
                    telecom: actions[m].telecom.to_string(),
                    serving: world.serving[m],
                    handover: world.handover[m],
                    reward: out.rewards[m],
                    link: out.links[m],
                    events: out
                        .events
                        .iter()
                        .filter(|e| e.involves(m))
                        .cloned()
                        .collect(),
                    capacity_violation: out.capacity_violation,
                    haps_load_bps: world.haps_load_bps,
                    llm_gate: gates.llm,
                    degraded: steps[m].decision.as_ref().and_then(|d| d.degraded.clone()),
                    correction: report.reflection.correction,
                    loss: report.loss,
                };
                agg.push(&rec);
                sink.step(&rec)?;
            }
            obs = out.observations;
            if out.done {
                break;
            }
        }
        if meta_on {
            let policy = meta_slot(self.meta.mode(), &mut self.policies);
            self.meta.close_record(&env.observe_haps(), policy);
        }
        Ok(agg.finish(started.elapsed().as_secs_f64()))
    }
}

impl EpisodeSummary {
    /// Copy with the wall-clock field zeroed, for comparisons.
    pub fn without_wall_clock(&self) -> Self {
        Self {
            wall_clock_s: 0.0,
            ..self.clone()
        }
    }
}
