//! Semantic-policy backends.
//!
//! A backend turns a rendered prompt into a reply string. The heuristic
//! backend reads the discretized state back out of the prompt and answers
//! deterministically; the HTTP backend talks to a chat-completion endpoint.

use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::STATE_HEADER;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyTier {
    Uav,
    Haps,
    Reflection,
}

#[derive(Debug, Clone, Copy)]
pub struct PolicyRequest<'a> {
    pub tier: PolicyTier,
    pub prompt: &'a str,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PolicyError {
    #[error("backend unreachable: {0}")]
    Unreachable(String),
    #[error("backend timed out")]
    Timeout,
    #[error("backend error: {0}")]
    Backend(String),
}

pub trait SemanticPolicy: Send {
    fn complete(&mut self, request: &PolicyRequest<'_>) -> Result<String, PolicyError>;
    fn name(&self) -> &str;
}

impl<P: SemanticPolicy + ?Sized> SemanticPolicy for Box<P> {
    fn complete(&mut self, request: &PolicyRequest<'_>) -> Result<String, PolicyError> {
        (**self).complete(request)
    }
    fn name(&self) -> &str {
        (**self).name()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    /// Rule-based HAPS tier, heuristic UAV tier.
    #[default]
    Rule,
    /// Both tiers through the heuristic backend.
    Mock,
    /// Both tiers through the HTTP endpoint.
    Llm,
}

impl FromStr for BackendMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rule" => Ok(BackendMode::Rule),
            "mock" => Ok(BackendMode::Mock),
            "llm" => Ok(BackendMode::Llm),
            other => Err(format!(
                "unknown backend `{other}` (expected rule, mock or llm)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub mode: BackendMode,
    pub url: String,
    pub uav_model: String,
    pub haps_model: String,
    pub temperature: f64,
    pub timeout_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            mode: BackendMode::Rule,
            url: "http://127.0.0.1:11434/api/chat".into(),
            uav_model: "qwen2.5:7b".into(),
            haps_model: "qwen2.5:14b".into(),
            temperature: 0.0,
            timeout_ms: 800,
        }
    }
}

/// Always unreachable; exercises the fallback paths.
#[derive(Debug, Default, Clone)]
pub struct OfflinePolicy;

impl SemanticPolicy for OfflinePolicy {
    fn complete(&mut self, _: &PolicyRequest<'_>) -> Result<String, PolicyError> {
        Err(PolicyError::Unreachable("backend disabled".into()))
    }
    fn name(&self) -> &str {
        "offline"
    }
}

/// Cycles through fixed replies regardless of the prompt.
#[derive(Debug, Clone)]
pub struct ScriptedPolicy {
    replies: Vec<String>,
    cursor: usize,
}

impl ScriptedPolicy {
    pub fn new<S: Into<String>>(replies: impl IntoIterator<Item = S>) -> Self {
        Self {
            replies: replies.into_iter().map(Into::into).collect(),
            cursor: 0,
        }
    }

    pub fn always(reply: &str) -> Self {
        Self::new([reply])
    }
}

impl SemanticPolicy for ScriptedPolicy {
    fn complete(&mut self, _: &PolicyRequest<'_>) -> Result<String, PolicyError> {
        if self.replies.is_empty() {
            return Err(PolicyError::Backend("no scripted replies".into()));
        }
        let r = self.replies[self.cursor % self.replies.len()].clone();
        self.cursor += 1;
        Ok(r)
    }
    fn name(&self) -> &str {
        "scripted"
    }
}

/// Shared per-tier call counters.
#[derive(Debug, Clone, Default)]
pub struct CallCounts(Arc<[AtomicU64; 3]>);

impl CallCounts {
    pub fn get(&self, tier: PolicyTier) -> u64 {
        self.0[tier as usize].load(Ordering::Relaxed)
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|c| c.load(Ordering::Relaxed)).sum()
    }
}

/// Counts every call before forwarding it.
pub struct Metered<P> {
    inner: P,
    counts: CallCounts,
}

impl<P: SemanticPolicy> Metered<P> {
    pub fn new(inner: P) -> (Self, CallCounts) {
        let counts = CallCounts::default();
        (
            Self {
                inner,
                counts: counts.clone(),
            },
            counts,
        )
    }

    pub fn with_counts(inner: P, counts: CallCounts) -> Self {
        Self { inner, counts }
    }
}

impl<P: SemanticPolicy> SemanticPolicy for Metered<P> {
    fn complete(&mut self, request: &PolicyRequest<'_>) -> Result<String, PolicyError> {
        self.counts.0[request.tier as usize].fetch_add(1, Ordering::Relaxed);
        self.inner.complete(request)
    }
    fn name(&self) -> &str {
        self.inner.name()
    }
}

/// Deterministic stand-in for a language model. It parses the
/// `key: value` state block that `discretize` writes and answers with
/// simple rules.
#[derive(Debug, Default, Clone)]
pub struct HeuristicPolicy;

fn state_lines(prompt: &str) -> Vec<(&str, &str)> {
    let body = prompt.split(STATE_HEADER).nth(1).unwrap_or(prompt);
    body.lines()
        .take_while(|l| !l.starts_with("###"))
        .filter_map(|l| l.split_once(':'))
        .map(|(k, v)| (k.trim(), v.trim()))
        .collect()
}

fn field<'a>(lines: &[(&'a str, &'a str)], key: &str) -> &'a str {
    lines
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .unwrap_or("")
}

impl HeuristicPolicy {
    fn uav_reply(prompt: &str) -> String {
        let lines = state_lines(prompt);
        // Evade the nearest closing neighbour first.
        for (k, v) in &lines {
            if *k != "threat" {
                continue;
            }
            let t: Vec<&str> = v.split_whitespace().collect();
            if t.len() >= 5 && matches!(t[1], "CRITICAL" | "NEAR") && t[4] == "closing" {
                let escape = if t[3] == "ABOVE" { "DESCEND" } else { "ASCEND" };
                return format!("DIRECTIVE {escape} AGGRESSIVE");
            }
        }
        let distance = field(&lines, "target_distance");
        let vertical = field(&lines, "target_vertical");
        let vertical_move = match vertical {
            "ABOVE" => Some("ASCEND"),
            "BELOW" => Some("DESCEND"),
            _ => None,
        };
        let magnitude = match distance {
            "VERY_FAR" => "AGGRESSIVE",
            "FAR" => "NORMAL",
            _ => "GENTLE",
        };
        if distance == "VERY_CLOSE" {
            return match vertical_move {
                Some(m) => format!("DIRECTIVE {m} NORMAL"),
                None => "DIRECTIVE HOVER NORMAL".into(),
            };
        }
        let horizontal = match field(&lines, "target_bearing") {
            "FRONT" | "FRONT_LEFT" | "FRONT_RIGHT" => "FORWARD",
            "LEFT" => "LEFT",
            "RIGHT" => "RIGHT",
            _ => "BACK",
        };
        // Fix altitude once the horizontal leg is short.
        if distance == "CLOSE" {
            if let Some(m) = vertical_move {
                return format!("DIRECTIVE {m} NORMAL");
            }
        }
        format!("DIRECTIVE {horizontal} {magnitude}")
    }

    fn haps_reply(prompt: &str) -> String {
        let body = prompt.split(STATE_HEADER).nth(1).unwrap_or(prompt);
        let lines = state_lines(prompt);
        let exceeded = field(&lines, "capacity_exceeded") == "YES";
        let users: usize = field(&lines, "haps_users").parse().unwrap_or(0);
        let quota: usize = field(&lines, "haps_quota").parse().unwrap_or(usize::MAX);
        let ranked: Vec<&str> = body
            .lines()
            .take_while(|l| !l.starts_with("###"))
            .filter_map(|l| l.strip_prefix("- "))
            .filter_map(|l| l.split_whitespace().next())
            .filter_map(|id| id.strip_prefix("UAV-"))
            .collect();

        let excess = users.saturating_sub(quota).max(usize::from(exceeded));
        if excess > 0 {
            let ids: Vec<&str> = ranked.iter().take(excess).copied().collect();
            return format!("ACTION Offload {}", ids.join(" "));
        }
        let offloaded = field(&lines, "offloaded");
        let load = field(&lines, "haps_load");
        if offloaded != "NONE" && !offloaded.is_empty() && users < quota && load == "LOW" {
            let first = offloaded.split_whitespace().next().unwrap_or("");
            if let Some(id) = first.strip_prefix("UAV-") {
                return format!("ACTION Recall {id}");
            }
        }
        "ACTION Idle".into()
    }

    fn reflection_reply(prompt: &str) -> String {
        let outcome = prompt
            .lines()
            .find_map(|l| l.strip_prefix("OUTCOME: "))
            .unwrap_or("");
        let action = prompt
            .lines()
            .find_map(|l| l.strip_prefix("ACTION: "))
            .unwrap_or("the last action");
        if !outcome.contains("safety=0.0") && outcome.contains("safety=") {
            format!(
                "Separation was lost while executing {action}. When a neighbour is closing, \
                 climb or descend away from it before resuming toward the target."
            )
        } else if !outcome.contains("handover=0.0") && outcome.contains("handover=") {
            format!("The link changed during {action} and the handover cost outweighed the gain. Hold the current link unless it is poor.")
        } else {
            format!("The outcome of {action} was poor. Slow down and keep the current link.")
        }
    }
}

impl SemanticPolicy for HeuristicPolicy {
    fn complete(&mut self, request: &PolicyRequest<'_>) -> Result<String, PolicyError> {
        Ok(match request.tier {
            PolicyTier::Uav => Self::uav_reply(request.prompt),
            PolicyTier::Haps => Self::haps_reply(request.prompt),
            PolicyTier::Reflection => Self::reflection_reply(request.prompt),
        })
    }
    fn name(&self) -> &str {
        "heuristic"
    }
}

/// Chat-completion client for an Ollama-style endpoint.
pub struct HttpPolicy {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    temperature: f64,
}

impl HttpPolicy {
    pub fn new(
        url: &str,
        model: &str,
        temperature: f64,
        timeout: Duration,
    ) -> Result<Self, PolicyError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| PolicyError::Backend(e.to_string()))?;
        Ok(Self {
            client,
            url: url.to_string(),
            model: model.to_string(),
            temperature,
        })
    }

    pub fn from_config(cfg: &BackendConfig, tier: PolicyTier) -> Result<Self, PolicyError> {
        let model = match tier {
            PolicyTier::Haps => &cfg.haps_model,
            _ => &cfg.uav_model,
        };
        Self::new(
            &cfg.url,
            model,
            cfg.temperature,
            Duration::from_millis(cfg.timeout_ms),
        )
    }
}

fn reply_content(v: &serde_json::Value) -> Option<&str> {
    v.pointer("/message/content")
        .or_else(|| v.pointer("/choices/0/message/content"))
        .and_then(|c| c.as_str())
}

impl SemanticPolicy for HttpPolicy {
    fn complete(&mut self, request: &PolicyRequest<'_>) -> Result<String, PolicyError> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "stream": false,
            "temperature": self.temperature,
            "options": {"temperature": self.temperature},
        });
        let resp = self
            .client
            .post(&self.url)
            .json(&body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    PolicyError::Timeout
                } else if e.is_connect() {
                    PolicyError::Unreachable(e.to_string())
                } else {
                    PolicyError::Backend(e.to_string())
                }
            })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(PolicyError::Backend(format!("HTTP {status}")));
        }
        let v: serde_json::Value = resp.json().map_err(|e| {
            if e.is_timeout() {
                PolicyError::Timeout
            } else {
                PolicyError::Backend(e.to_string())
            }
        })?;
        reply_content(&v)
            .map(str::to_string)
            .ok_or_else(|| PolicyError::Backend("response has no message content".into()))
    }
    fn name(&self) -> &str {
        "http"
    }
}
