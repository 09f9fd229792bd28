//! Backend round trips with parse-retry and fallback.

use serde::{Deserialize, Serialize};

use crate::env::MetaAction;

use super::directive::{parse_directive, parse_meta_action, ParseError, SemanticDirective};
use super::memory::RecordReward;
use super::policy::{PolicyError, PolicyRequest, PolicyTier, SemanticPolicy};
use super::prompt::{reflection_prompt, PromptBundle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradeReason {
    Unreachable,
    Timeout,
    Backend,
    ParseFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degradation {
    pub reason: DegradeReason,
    pub detail: String,
}

impl From<&PolicyError> for Degradation {
    fn from(e: &PolicyError) -> Self {
        let reason = match e {
            PolicyError::Unreachable(_) => DegradeReason::Unreachable,
            PolicyError::Timeout => DegradeReason::Timeout,
            PolicyError::Backend(_) => DegradeReason::Backend,
        };
        Degradation {
            reason,
            detail: e.to_string(),
        }
    }
}

/// A parsed decision, or the fallback with the reason it was needed.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision<T> {
    pub value: T,
    pub degraded: Option<Degradation>,
    /// Last raw reply, if any arrived.
    pub reply: Option<String>,
    pub calls: u32,
}

fn semantic_decide<T>(
    policy: &mut dyn SemanticPolicy,
    tier: PolicyTier,
    prompt: &PromptBundle,
    reminder: &str,
    parse: fn(&str) -> Result<T, ParseError>,
    fallback: T,
) -> Decision<T> {
    let mut text = prompt.rendered.clone();
    let mut last_err = None;
    let mut reply = None;
    for attempt in 0..2u32 {
        if attempt == 1 {
            text.push('\n');
            text.push_str(reminder);
            text.push('\n');
        }
        match policy.complete(&PolicyRequest {
            tier,
            prompt: &text,
        }) {
            Ok(r) => match parse(&r) {
                Ok(value) => {
                    return Decision {
                        value,
                        degraded: None,
                        reply: Some(r),
                        calls: attempt + 1,
                    }
                }
                Err(e) => {
                    last_err = Some(e);
                    reply = Some(r);
                }
            },
            Err(e) => {
                return Decision {
                    value: fallback,
                    degraded: Some(Degradation::from(&e)),
                    reply: None,
                    calls: attempt + 1,
                }
            }
        }
    }
    Decision {
        value: fallback,
        degraded: Some(Degradation {
            reason: DegradeReason::ParseFailure,
            detail: last_err.map(|e| e.to_string()).unwrap_or_default(),
        }),
        reply,
        calls: 2,
    }
}

/// UAV tier. Falls back to HOVER.
pub fn decide_directive(
    policy: &mut dyn SemanticPolicy,
    prompt: &PromptBundle,
    reminder: &str,
) -> Decision<SemanticDirective> {
    semantic_decide(
        policy,
        PolicyTier::Uav,
        prompt,
        reminder,
        parse_directive,
        SemanticDirective::HOVER,
    )
}

/// HAPS tier. Falls back to Idle.
pub fn decide_meta(
    policy: &mut dyn SemanticPolicy,
    prompt: &PromptBundle,
    reminder: &str,
) -> Decision<MetaAction> {
    semantic_decide(
        policy,
        PolicyTier::Haps,
        prompt,
        reminder,
        parse_meta_action,
        MetaAction::Idle,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reflection {
    pub correction: String,
    pub degraded: Option<Degradation>,
}

/// Ask for a correction when `scalarized < threshold`; otherwise return an
/// empty correction without calling the backend.
#[allow(clippy::too_many_arguments)]
pub fn reflect(
    policy: Option<&mut dyn SemanticPolicy>,
    observation: &str,
    action: &str,
    reward: &RecordReward,
    scalarized: f64,
    next_observation: &str,
    threshold: f64,
    fallback: &str,
) -> Reflection {
    if !(scalarized < threshold) {
        return Reflection {
            correction: String::new(),
            degraded: None,
        };
    }
    let Some(policy) = policy else {
        return Reflection {
            correction: fallback.to_string(),
            degraded: None,
        };
    };
    let prompt = reflection_prompt(observation, action, reward, scalarized, next_observation);
    match policy.complete(&PolicyRequest {
        tier: PolicyTier::Reflection,
        prompt: &prompt,
    }) {
        Ok(text) if !text.trim().is_empty() => Reflection {
            correction: text.trim().to_string(),
            degraded: None,
        },
        Ok(_) => Reflection {
            correction: fallback.to_string(),
            degraded: Some(Degradation {
                reason: DegradeReason::ParseFailure,
                detail: "empty reflection".into(),
            }),
        },
        Err(e) => Reflection {
            correction: fallback.to_string(),
            degraded: Some(Degradation::from(&e)),
        },
    }
}
