//! Semantic backends for each tier.

use skylane::cognition::policy::CallCounts;
use skylane::cognition::{
    BackendConfig, BackendMode, HeuristicPolicy, HttpPolicy, Metered, PolicyError, PolicyTier,
    SemanticPolicy,
};
use skylane::meta_controller::MetaMode;

/// One optional policy per tier. A missing policy means the tier runs
/// without a backend: the UAV keeps its directive, the HAPS tier uses its
/// rules, and reflections fall back to the configured text.
#[derive(Default)]
pub struct PolicySet {
    pub uav: Option<Box<dyn SemanticPolicy>>,
    pub haps: Option<Box<dyn SemanticPolicy>>,
    pub reflection: Option<Box<dyn SemanticPolicy>>,
}

impl PolicySet {
    pub fn from_config(cfg: &BackendConfig) -> Result<Self, PolicyError> {
        let heuristic = || Some(Box::new(HeuristicPolicy) as Box<dyn SemanticPolicy>);
        Ok(match cfg.mode {
            BackendMode::Rule => Self {
                uav: heuristic(),
                haps: None,
                reflection: heuristic(),
            },
            BackendMode::Mock => Self {
                uav: heuristic(),
                haps: heuristic(),
                reflection: heuristic(),
            },
            BackendMode::Llm => {
                let http = |tier| {
                    HttpPolicy::from_config(cfg, tier)
                        .map(|p| Some(Box::new(p) as Box<dyn SemanticPolicy>))
                };
                Self {
                    uav: http(PolicyTier::Uav)?,
                    haps: http(PolicyTier::Haps)?,
                    reflection: http(PolicyTier::Reflection)?,
                }
            }
        })
    }

    /// Wrap every policy in a counter shared across tiers.
    pub fn metered(self) -> (Self, CallCounts) {
        let counts = CallCounts::default();
        let wrap = |p: Option<Box<dyn SemanticPolicy>>| {
            p.map(|p| Box::new(Metered::with_counts(p, counts.clone())) as Box<dyn SemanticPolicy>)
        };
        let set = Self {
            uav: wrap(self.uav),
            haps: wrap(self.haps),
            reflection: wrap(self.reflection),
        };
        (set, counts)
    }
}

/// HAPS-tier mode implied by the backend.
pub fn meta_mode(mode: BackendMode) -> MetaMode {
    match mode {
        BackendMode::Rule => MetaMode::Rule,
        BackendMode::Mock | BackendMode::Llm => MetaMode::Semantic,
    }
}

pub(crate) fn slot(p: &mut Option<Box<dyn SemanticPolicy>>) -> Option<&mut dyn SemanticPolicy> {
    match p {
        Some(b) => Some(b.as_mut()),
        None => None,
    }
}
