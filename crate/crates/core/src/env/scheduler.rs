use serde::Serialize;

use super::config::TimingConfig;

/// Which loops run at a given step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Gates {
    pub fast: bool,
    pub llm: bool,
    pub haps: bool,
}

/// Dual-timescale clock: fast control every step, semantic refresh and
/// HAPS-tier decisions on integer multiples of the step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scheduler {
    pub llm_every: u64,
    pub haps_every: u64,
}

impl Scheduler {
    pub fn new(timing: &TimingConfig) -> Self {
        Self {
            llm_every: timing.llm_every(),
            haps_every: timing.haps_every(),
        }
    }

    pub fn gates(&self, t: u64) -> Gates {
        Gates {
            fast: true,
            llm: t % self.llm_every == 0,
            haps: t % self.haps_every == 0,
        }
    }
}
