//! Double-DQN association learner with uniform replay.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ConfigError;

use super::qnet::{Adam, Mlp, Trace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QLearnerConfig {
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Environment steps over which epsilon decays linearly.
    pub epsilon_decay_steps: u64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Learn steps between hard target-network syncs.
    pub target_sync_steps: u64,
    /// Minimum stored transitions before the first learn step. Learning
    /// never starts before one full batch is stored.
    pub warmup_transitions: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for QLearnerConfig {
    fn default() -> Self {
        Self {
            hidden_layers: vec![128, 128],
            learning_rate: 1e-3,
            discount: 0.99,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 50_000,
            replay_capacity: 100_000,
            batch_size: 64,
            target_sync_steps: 1000,
            warmup_transitions: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl QLearnerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |f: &str, r: &str| Err(ConfigError::new(format!("agent.learner.{f}"), r));
        if !(0.0..1.0).contains(&self.discount) {
            return bad("discount", "must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate", "must be > 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be >= 1");
        }
        if self.replay_capacity < self.batch_size {
            return bad("replay_capacity", "must be >= batch_size");
        }
        if self.hidden_layers.iter().any(|&h| h == 0) {
            return bad("hidden_layers", "layer widths must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return bad("epsilon_start", "epsilons must lie in [0, 1]");
        }
        if self.epsilon_end > self.epsilon_start {
            return bad("epsilon_end", "must be <= epsilon_start");
        }
        if self.target_sync_steps == 0 {
            return bad("target_sync_steps", "must be >= 1");
        }
        Ok(())
    }

    /// Linear decay from start to end, then flat.
    pub fn epsilon(&self, env_steps: u64) -> f64 {
        if env_steps >= self.epsilon_decay_steps {
            return self.epsilon_end;
        }
        let frac = env_steps as f64 / self.epsilon_decay_steps as f64;
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub terminal: bool,
}

/// Fixed-capacity ring buffer, sampled uniformly with replacement.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            items: Vec::new(),
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.capacity == 0 {
            return;
        }
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    pub fn sample<'a, R: Rng + ?Sized>(&'a self, n: usize, rng: &mut R) -> Vec<&'a Transition> {
        (0..n)
            .map(|_| &self.items[rng.gen_range(0..self.items.len())])
            .collect()
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(q: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in q.iter().enumerate() {
        if *v > q[best] {
            best = i;
        }
    }
    best
}

/// Double-Q bootstrap target: the online net picks the next action, the
/// target net scores it.
pub fn double_q_target(online: &Mlp, target: &Mlp, t: &Transition, discount: f64) -> f64 {
    if t.terminal {
        return t.reward;
    }
    let a = argmax(&online.forward(&t.next_state));
    t.reward + discount * target.forward(&t.next_state)[a]
}

/// Mean squared TD error of `batch` against fixed `targets`, and its gradient.
pub fn td_loss_and_grad(net: &Mlp, batch: &[&Transition], targets: &[f64]) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; net.params().len()];
    let n = batch.len() as f64;
    let mut loss = 0.0;
    for (t, y) in batch.iter().zip(targets) {
        let trace: Trace = net.trace(&t.state);
        let q = trace.output()[t.action];
        let err = q - y;
        loss += err * err / n;
        let mut g_out = vec![0.0; net.num_outputs()];
        g_out[t.action] = 2.0 * err / n;
        net.backward(&trace, &g_out, &mut grad);
    }
    (loss, grad)
}

#[derive(Debug, Clone)]
pub struct QLearner {
    cfg: QLearnerConfig,
    online: Mlp,
    target: Mlp,
    adam: Adam,
    replay: ReplayBuffer,
    env_steps: u64,
    learn_steps: u64,
    replay_rng: ChaCha8Rng,
}

impl QLearner {
    pub fn new(
        cfg: QLearnerConfig,
        num_features: usize,
        num_actions: usize,
        weight_rng: &mut ChaCha8Rng,
        replay_rng: ChaCha8Rng,
    ) -> Self {
        let mut sizes = vec![num_features];
        sizes.extend(&cfg.hidden_layers);
        sizes.push(num_actions);
        let online = Mlp::new(&sizes, weight_rng);
        let adam = Adam::new(
            online.params().len(),
            cfg.learning_rate,
            cfg.adam_beta1,
            cfg.adam_beta2,
            cfg.adam_eps,
        );
        Self {
            target: online.clone(),
            online,
            adam,
            replay: ReplayBuffer::new(cfg.replay_capacity),
            cfg,
            env_steps: 0,
            learn_steps: 0,
            replay_rng,
        }
    }

    pub fn config(&self) -> &QLearnerConfig {
        &self.cfg
    }

    pub fn online(&self) -> &Mlp {
        &self.online
    }

    pub fn online_mut(&mut self) -> &mut Mlp {
        &mut self.online
    }

    pub fn target(&self) -> &Mlp {
        &self.target
    }

    pub fn replay_len(&self) -> usize {
        self.replay.len()
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn learn_steps(&self) -> u64 {
        self.learn_steps
    }

    pub fn epsilon(&self) -> f64 {
        self.cfg.epsilon(self.env_steps)
    }

    pub fn q_values(&self, state: &[f64]) -> Vec<f64> {
        self.online.forward(state)
    }

    /// Epsilon-greedy action at the current exploration rate.
    pub fn select<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R) -> usize {
        select_action(&self.q_values(state), self.epsilon(), rng)
    }

    /// Store a transition and advance the exploration schedule.
    pub fn push(&mut self, t: Transition) {
        self.replay.push(t);
        self.env_steps += 1;
    }

    /// One gradient step on a sampled batch. `None` until enough transitions
    /// are stored.
    pub fn learn_step(&mut self) -> Option<f64> {
        let need = self.cfg.batch_size.max(self.cfg.warmup_transitions);
        if self.replay.len() < need {
            return None;
        }
        let batch = self
            .replay
            .sample(self.cfg.batch_size, &mut self.replay_rng);
        let targets: Vec<f64> = batch
            .iter()
            .map(|t| double_q_target(&self.online, &self.target, t, self.cfg.discount))
            .collect();
        let (loss, grad) = td_loss_and_grad(&self.online, &batch, &targets);
        self.adam.step(self.online.params_mut(), &grad);
        self.learn_steps += 1;
        if self.learn_steps % self.cfg.target_sync_steps == 0 {
            self.target = self.online.clone();
        }
        Some(loss)
    }

    pub fn sync_target(&mut self) {
        self.target = self.online.clone();
    }
}

/// With probability `epsilon` a uniform action, otherwise the argmax.
pub fn select_action<R: Rng + ?Sized>(q: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.gen::<f64>() < epsilon {
        rng.gen_range(0..q.len())
    } else {
        argmax(q)
    }
}
