//! One-line reply grammars.
//!
//! UAV tier: `DIRECTIVE <maneuver> [<magnitude>]`.
//! HAPS tier: `ACTION <Offload|Recall|Idle> [ids...]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::MetaAction;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("no `{0}` line in reply")]
    Missing(&'static str),
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("malformed line `{0}`")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Maneuver {
    Forward,
    Back,
    Left,
    Right,
    Ascend,
    Descend,
    Hover,
    Accelerate,
    Decelerate,
}

impl Maneuver {
    pub const ALL: [Maneuver; 9] = [
        Maneuver::Forward,
        Maneuver::Back,
        Maneuver::Left,
        Maneuver::Right,
        Maneuver::Ascend,
        Maneuver::Descend,
        Maneuver::Hover,
        Maneuver::Accelerate,
        Maneuver::Decelerate,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Maneuver::Forward => "FORWARD",
            Maneuver::Back => "BACK",
            Maneuver::Left => "LEFT",
            Maneuver::Right => "RIGHT",
            Maneuver::Ascend => "ASCEND",
            Maneuver::Descend => "DESCEND",
            Maneuver::Hover => "HOVER",
            Maneuver::Accelerate => "ACCELERATE",
            Maneuver::Decelerate => "DECELERATE",
        }
    }

    pub fn index(self) -> usize {
        Maneuver::ALL
            .iter()
            .position(|&m| m == self)
            .expect("listed")
    }
}

impl FromStr for Maneuver {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Maneuver::ALL
            .into_iter()
            .find(|m| m.token().eq_ignore_ascii_case(s))
            .ok_or_else(|| ParseError::UnknownToken(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Magnitude {
    Gentle,
    Normal,
    Aggressive,
}

impl Magnitude {
    pub const ALL: [Magnitude; 3] = [Magnitude::Gentle, Magnitude::Normal, Magnitude::Aggressive];

    pub fn token(self) -> &'static str {
        match self {
            Magnitude::Gentle => "GENTLE",
            Magnitude::Normal => "NORMAL",
            Magnitude::Aggressive => "AGGRESSIVE",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl FromStr for Magnitude {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Magnitude::ALL
            .into_iter()
            .find(|m| m.token().eq_ignore_ascii_case(s))
            .ok_or_else(|| ParseError::UnknownToken(s.to_string()))
    }
}

/// High-level maneuver requested by the slow policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SemanticDirective {
    pub maneuver: Maneuver,
    pub magnitude: Magnitude,
}

impl SemanticDirective {
    pub const HOVER: SemanticDirective = SemanticDirective {
        maneuver: Maneuver::Hover,
        magnitude: Magnitude::Normal,
    };

    pub fn new(maneuver: Maneuver, magnitude: Magnitude) -> Self {
        Self {
            maneuver,
            magnitude,
        }
    }

    /// Every maneuver paired with every magnitude.
    pub fn all() -> impl Iterator<Item = SemanticDirective> {
        Maneuver::ALL.into_iter().flat_map(|m| {
            Magnitude::ALL
                .into_iter()
                .map(move |g| SemanticDirective::new(m, g))
        })
    }
}

impl fmt::Display for SemanticDirective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "DIRECTIVE {} {}",
            self.maneuver.token(),
            self.magnitude.token()
        )
    }
}

impl FromStr for SemanticDirective {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_directive(s)
    }
}

fn find_line<'a>(reply: &'a str, keyword: &'static str) -> Result<Vec<&'a str>, ParseError> {
    reply
        .lines()
        .map(|l| l.trim().trim_matches('`').trim())
        .find_map(|l| {
            let mut toks = l.split_whitespace();
            match toks.next() {
                Some(k) if k.eq_ignore_ascii_case(keyword) => Some(toks.collect()),
                _ => None,
            }
        })
        .ok_or(ParseError::Missing(keyword))
}

/// Parse the first `DIRECTIVE` line of a reply. A missing magnitude means NORMAL.
pub fn parse_directive(reply: &str) -> Result<SemanticDirective, ParseError> {
    let toks = find_line(reply, "DIRECTIVE")?;
    match toks.as_slice() {
        [m] => Ok(SemanticDirective::new(m.parse()?, Magnitude::Normal)),
        [m, g] => Ok(SemanticDirective::new(m.parse()?, g.parse()?)),
        _ => Err(ParseError::Malformed(toks.join(" "))),
    }
}

fn parse_uav_id(tok: &str) -> Result<usize, ParseError> {
    let t = tok.trim_matches(|c: char| c == ',' || c == '[' || c == ']');
    let digits = t
        .strip_prefix("UAV-")
        .or_else(|| t.strip_prefix("uav-"))
        .unwrap_or(t);
    digits
        .parse()
        .map_err(|_| ParseError::UnknownToken(tok.to_string()))
}

/// Parse the first `ACTION` line of a reply.
pub fn parse_meta_action(reply: &str) -> Result<MetaAction, ParseError> {
    let toks = find_line(reply, "ACTION")?;
    let Some((kind, rest)) = toks.split_first() else {
        return Err(ParseError::Malformed(String::new()));
    };
    let ids = rest
        .iter()
        .filter(|t| !t.trim_matches(',').is_empty())
        .map(|t| parse_uav_id(t))
        .collect::<Result<Vec<_>, _>>()?;
    match kind.to_ascii_lowercase().as_str() {
        "idle" if ids.is_empty() => Ok(MetaAction::Idle),
        "offload" if !ids.is_empty() => Ok(MetaAction::Offload(ids)),
        "recall" if !ids.is_empty() => Ok(MetaAction::Recall(ids)),
        "idle" | "offload" | "recall" => Err(ParseError::Malformed(toks.join(" "))),
        _ => Err(ParseError::UnknownToken(kind.to_string())),
    }
}
