//! Per-UAV tactical controller.
//!
//! On each semantic gate the agent asks its policy for a directive, which
//! the motion decoder turns into rotor speeds every step. Association is
//! chosen every step, by default with a double-DQN over local features.
//! After each step the transition is stored in episodic memory, with a
//! correction attached when the scalarized reward is poor.

pub mod decoder;
pub mod features;
pub mod learner;
pub mod qnet;

use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cognition::memory::{uav_embedder, uav_features};
use crate::cognition::prompt::{render_memory, UAV_STATIC};
use crate::cognition::{
    decide_directive, discretize_uav, reflect, CognitionConfig, Decision, DegradeReason, Embedder,
    EpisodicMemory, MemoryRecord, PromptBundle, RecordReward, Reflection, SemanticDirective,
    SemanticPolicy,
};
use crate::config::{ConfigError, ScenarioConfig};
use crate::env::{Gates, JointAction, LocalObservation, NodeId, RewardVector, TelecomAction};
use crate::rng::{substream, Stream};

pub use decoder::{
    directive_setpoint, mix, ControlOutput, DecoderConfig, MotionDecoder, MotionSetpoint,
};
pub use features::{num_features, telecom_features};
pub use learner::{
    argmax, double_q_target, select_action, QLearner, QLearnerConfig, ReplayBuffer, Transition,
};
pub use qnet::{Adam, Mlp};

/// How the association command is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TelecomPolicyKind {
    /// Epsilon-greedy double-DQN.
    #[default]
    Ddqn,
    /// Ask for the HAPS whenever not on it.
    GreedyHaps,
    /// Move to the strongest node once it beats the serving one by the hysteresis.
    GreedySinr,
    Stay,
}

impl FromStr for TelecomPolicyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ddqn" => Ok(Self::Ddqn),
            "greedy_haps" => Ok(Self::GreedyHaps),
            "greedy_sinr" => Ok(Self::GreedySinr),
            "stay" => Ok(Self::Stay),
            other => Err(format!("unknown telecom policy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub telecom_policy: TelecomPolicyKind,
    pub greedy_hysteresis_db: f64,
    /// Run learn steps during episodes.
    pub learn: bool,
    pub decoder: DecoderConfig,
    pub learner: QLearnerConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            telecom_policy: TelecomPolicyKind::Ddqn,
            greedy_hysteresis_db: 3.0,
            learn: true,
            decoder: DecoderConfig::default(),
            learner: QLearnerConfig::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.greedy_hysteresis_db >= 0.0) {
            return Err(ConfigError::new(
                "agent.greedy_hysteresis_db",
                "must be >= 0",
            ));
        }
        self.decoder.validate()?;
        self.learner.validate()
    }
}

/// What the agent did this step.
#[derive(Debug, Clone)]
pub struct AgentStep {
    pub action: JointAction,
    /// Set on semantic gates when a policy was consulted.
    pub decision: Option<Decision<SemanticDirective>>,
}

/// Bookkeeping from `observe`.
#[derive(Debug, Clone)]
pub struct ObserveReport {
    pub scalarized: f64,
    pub reflection: Reflection,
    pub loss: Option<f64>,
}

struct Pending {
    features: Vec<f64>,
    action: usize,
    obs_text: String,
    raw_features: Vec<f64>,
}

pub struct EdgeAgent {
    id: usize,
    num_tbs: usize,
    airspace_m: [f64; 3],
    cfg: AgentConfig,
    cognition: CognitionConfig,
    memory_prompt: bool,
    perception_radius_m: f64,
    decoder: MotionDecoder,
    learner: Option<QLearner>,
    explore_rng: ChaCha8Rng,
    directive: SemanticDirective,
    memory: EpisodicMemory,
    embedder: Embedder,
    pending: Option<Pending>,
}

impl EdgeAgent {
    pub fn new(id: usize, cfg: &ScenarioConfig, seed: u64) -> Self {
        let num_tbs = cfg.channel.tbs.len();
        let learner = (cfg.agent.telecom_policy == TelecomPolicyKind::Ddqn).then(|| {
            QLearner::new(
                cfg.agent.learner.clone(),
                num_features(num_tbs),
                TelecomAction::count(num_tbs),
                &mut substream(seed, Stream::Weights, id as u64),
                substream(seed, Stream::Replay, id as u64),
            )
        });
        Self {
            id,
            num_tbs,
            airspace_m: cfg.airspace.size_m,
            cfg: cfg.agent.clone(),
            cognition: cfg.cognition.clone(),
            memory_prompt: cfg.ablation.memory_prompt,
            perception_radius_m: cfg.sensors.perception_radius_m,
            decoder: MotionDecoder::new(
                cfg.agent.decoder.clone(),
                cfg.uav.clone(),
                cfg.timing.dt_s,
            ),
            learner,
            explore_rng: substream(seed, Stream::Exploration, id as u64),
            directive: SemanticDirective::HOVER,
            memory: EpisodicMemory::new(cfg.cognition.memory_capacity),
            embedder: uav_embedder(
                cfg.airspace.size_m,
                cfg.agent.decoder.max_speed_mps,
                cfg.sensors.perception_radius_m,
            ),
            pending: None,
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn directive(&self) -> SemanticDirective {
        self.directive
    }

    /// Replace the directive and re-latch the setpoint from `obs`.
    pub fn set_directive(&mut self, d: SemanticDirective, obs: &LocalObservation) {
        self.directive = d;
        self.decoder.set_directive(d, obs);
    }

    pub fn setpoint(&self) -> MotionSetpoint {
        self.decoder.setpoint()
    }

    pub fn memory(&self) -> &EpisodicMemory {
        &self.memory
    }

    pub fn learner(&self) -> Option<&QLearner> {
        self.learner.as_ref()
    }

    pub fn learner_mut(&mut self) -> Option<&mut QLearner> {
        self.learner.as_mut()
    }

    /// Static role text, discretized state and retrieved exemplars.
    pub fn build_prompt(&self, obs: &LocalObservation) -> PromptBundle {
        let dynamic = discretize_uav(obs, &self.cognition);
        let memory = if self.memory_prompt {
            let query = self
                .embedder
                .embed(&uav_features(obs, self.perception_radius_m));
            render_memory(
                &self
                    .memory
                    .retrieve_top_k(&query, self.cognition.retrieval_k),
            )
        } else {
            render_memory(&[])
        };
        PromptBundle::new(UAV_STATIC, &dynamic, &memory)
    }

    /// Choose this step's joint action. The policy is consulted only when
    /// `gates.llm` is set.
    pub fn act(
        &mut self,
        obs: &LocalObservation,
        gates: Gates,
        policy: Option<&mut dyn SemanticPolicy>,
    ) -> AgentStep {
        let mut decision = None;
        if gates.llm {
            if let Some(policy) = policy {
                let prompt = self.build_prompt(obs);
                let d = decide_directive(policy, &prompt, &self.cognition.format_reminder_uav);
                match &d.degraded {
                    // A late reply keeps the directive already in force.
                    Some(g) if g.reason == DegradeReason::Timeout => {
                        log::debug!(
                            "UAV {}: directive timed out, keeping {}",
                            self.id,
                            self.directive
                        )
                    }
                    _ => self.set_directive(d.value, obs),
                }
                decision = Some(d);
            }
        }

        let rotor_rpm = self.decoder.control(obs).rotor_rpm;
        let features = telecom_features(
            obs,
            self.directive,
            self.airspace_m,
            self.cfg.decoder.max_speed_mps,
            self.num_tbs,
        );
        let telecom = self.choose_telecom(obs, &features);
        self.pending = Some(Pending {
            action: telecom.index(self.num_tbs),
            features,
            obs_text: discretize_uav(obs, &self.cognition),
            raw_features: uav_features(obs, self.perception_radius_m),
        });
        AgentStep {
            action: JointAction { rotor_rpm, telecom },
            decision,
        }
    }

    fn choose_telecom(&mut self, obs: &LocalObservation, features: &[f64]) -> TelecomAction {
        let b = self.num_tbs;
        match self.cfg.telecom_policy {
            TelecomPolicyKind::Stay => TelecomAction::Stay,
            TelecomPolicyKind::GreedyHaps => {
                if obs.serving.is_haps() {
                    TelecomAction::Stay
                } else {
                    TelecomAction::RequestHaps
                }
            }
            TelecomPolicyKind::GreedySinr => {
                let serving = obs.serving.index(b);
                let mut best = serving;
                for (k, s) in obs.node_sinr_db.iter().enumerate() {
                    if k == b && !obs.haps_eligible {
                        continue;
                    }
                    if *s > obs.node_sinr_db[best] {
                        best = k;
                    }
                }
                if best != serving
                    && obs.node_sinr_db[best]
                        > obs.node_sinr_db[serving] + self.cfg.greedy_hysteresis_db
                {
                    match NodeId::from_index(best, b) {
                        NodeId::Tbs(t) => TelecomAction::Handover(t),
                        NodeId::Haps => TelecomAction::RequestHaps,
                    }
                } else {
                    TelecomAction::Stay
                }
            }
            TelecomPolicyKind::Ddqn => {
                let learner = self.learner.as_ref().expect("ddqn agent owns a learner");
                let a = learner.select(features, &mut self.explore_rng);
                TelecomAction::from_index(a, b)
            }
        }
    }

    /// Record the outcome of the last `act`: reflection, memory, replay and
    /// a learn step.
    pub fn observe(
        &mut self,
        reward: &RewardVector,
        next: &LocalObservation,
        done: bool,
        policy: Option<&mut dyn SemanticPolicy>,
    ) -> ObserveReport {
        let Some(p) = self.pending.take() else {
            return ObserveReport {
                scalarized: reward.scalarize(&self.cognition.reflection_weights),
                reflection: Reflection {
                    correction: String::new(),
                    degraded: None,
                },
                loss: None,
            };
        };
        let scalarized = reward.scalarize(&self.cognition.reflection_weights);
        let record_reward = RecordReward::Vector(reward.as_array());
        let next_text = discretize_uav(next, &self.cognition);
        let action_text = format!(
            "{} {}",
            self.directive,
            TelecomAction::from_index(p.action, self.num_tbs)
        );
        let reflection = reflect(
            policy,
            &p.obs_text,
            &action_text,
            &record_reward,
            scalarized,
            &next_text,
            self.cognition.reflection_threshold,
            &self.cognition.reflection_fallback,
        );
        self.memory.push(MemoryRecord {
            seq: 0,
            embedding: self.embedder.update_and_embed(&p.raw_features),
            observation: p.obs_text,
            action: action_text,
            reward: record_reward,
            next_observation: next_text,
            correction: reflection.correction.clone(),
        });

        let mut loss = None;
        if let Some(learner) = self.learner.as_mut() {
            let next_features = telecom_features(
                next,
                self.directive,
                self.airspace_m,
                self.cfg.decoder.max_speed_mps,
                self.num_tbs,
            );
            learner.push(Transition {
                state: p.features,
                action: p.action,
                reward: reward.r_tele - reward.c_ho,
                next_state: next_features,
                terminal: done,
            });
            if self.cfg.learn {
                loss = learner.learn_step();
            }
        }
        ObserveReport {
            scalarized,
            reflection,
            loss,
        }
    }
}
