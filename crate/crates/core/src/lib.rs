//! Multi-UAV aerial highway simulation over a terrestrial + HAPS network,
//! with a two-tier controller: a slow HAPS-tier admission manager and a
//! per-UAV edge agent that combines a semantic directive policy, a motion
//! decoder and a double-DQN association learner.

pub mod channel;
pub mod cognition;
pub mod config;
pub mod edge_agent;
pub mod env;
pub mod meta_controller;
pub mod physics;
pub mod rng;

pub use config::{ConfigError, ScenarioConfig};
