//! Prompt assembly: static role text, discretized state, retrieved exemplars.

use std::fmt::Write;

use super::memory::{MemoryRecord, RecordReward};

pub const STATE_HEADER: &str = "### CURRENT STATE\n";
pub const MEMORY_HEADER: &str = "### PAST EXPERIENCE\n";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub static_text: String,
    pub dynamic_text: String,
    pub memory_text: String,
    pub rendered: String,
}

impl PromptBundle {
    pub fn new(static_text: &str, dynamic_text: &str, memory_text: &str) -> Self {
        let rendered =
            format!("{static_text}{STATE_HEADER}{dynamic_text}{MEMORY_HEADER}{memory_text}");
        Self {
            static_text: static_text.to_string(),
            dynamic_text: dynamic_text.to_string(),
            memory_text: memory_text.to_string(),
            rendered,
        }
    }
}

pub const UAV_STATIC: &str = "\
### ROLE
You are the flight agent of one UAV on a shared aerial highway.
Objectives, in priority order: never come within the safety distance of another UAV; \
reach the target; keep the airframe level; keep a strong network link.
### OUTPUT
Reply with exactly one line:
DIRECTIVE <FORWARD|BACK|LEFT|RIGHT|ASCEND|DESCEND|HOVER|ACCELERATE|DECELERATE> [GENTLE|NORMAL|AGGRESSIVE]
Bearings are relative to the current heading. FORWARD, BACK, LEFT and RIGHT translate without turning.
";

pub const HAPS_STATIC: &str = "\
### ROLE
You manage admission on a high-altitude platform that shares a fixed capacity among UAVs.
Keep the platform load under capacity and its user count within quota, while keeping \
total throughput high and forced moves rare.
Offload moves the listed UAVs to terrestrial base stations; pick the lowest-rate users. \
Recall returns offloaded UAVs when there is room. Idle changes nothing.
### OUTPUT
Reply with exactly one line:
ACTION <Offload|Recall|Idle> [uav ids separated by spaces]
";

pub const REFLECTION_STATIC: &str = "\
### ROLE
A UAV controller just received a poor reward. Explain in one short paragraph what went \
wrong and what to do differently in a similar situation.
";

fn one_line(text: &str) -> String {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("; ")
}

fn reward_text(r: &RecordReward) -> String {
    match r {
        RecordReward::Scalar(x) => format!("reward={x:.3}"),
        RecordReward::Vector(v) => format!(
            "transport={:.3} telecom={:.3} safety={:.1} handover={:.1}",
            v[0],
            v[1],
            // Adding zero turns a negative zero penalty into "0.0".
            v[2] + 0.0,
            v[3] + 0.0
        ),
    }
}

/// One exemplar per line group, nearest first.
pub fn render_memory(records: &[&MemoryRecord]) -> String {
    if records.is_empty() {
        return "NONE\n".to_string();
    }
    let mut s = String::new();
    for (i, r) in records.iter().enumerate() {
        let lesson = if r.correction.is_empty() {
            "none"
        } else {
            r.correction.as_str()
        };
        let _ = writeln!(
            s,
            "[{}] SITUATION {} / ACTION {} / OUTCOME {} / LESSON {}",
            i + 1,
            one_line(&r.observation),
            r.action,
            reward_text(&r.reward),
            lesson
        );
    }
    s
}

/// Reflection prompt for one transition.
pub fn reflection_prompt(
    observation: &str,
    action: &str,
    reward: &RecordReward,
    scalarized: f64,
    next: &str,
) -> String {
    format!(
        "{REFLECTION_STATIC}### TRANSITION\nSITUATION: {}\nACTION: {}\nOUTCOME: {} total={:.3}\nNEXT: {}\n",
        one_line(observation),
        action,
        reward_text(reward),
        scalarized,
        one_line(next)
    )
}
