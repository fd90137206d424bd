//! Scenario file schema (JSON) and loading.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::berth::BerthMode;
use crate::des::{Side, MINUTES_PER_YEAR};
use crate::dist::DistributionSpec;
use crate::screening::{DetectionProfile, DrmEntry, LoadModifier, RateTarget};

use super::Model;

pub const HOURS_PER_WEEK: usize = 168;

/// The shipped default scenario.
pub const CALAIS_DEFAULT_JSON: &str = include_str!("../../../../scenarios/calais-default.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub arrivals: ArrivalSpec,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub edges: Vec<EdgeSpec>,
    #[serde(default)]
    pub jumps: Vec<JumpSpec>,
    pub drm: DrmSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub berth: Option<BerthSpec>,
    #[serde(default)]
    pub run: RunSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalSpec {
    /// Lorries per hour before the weekly profile is applied.
    pub base_rate: f64,
    /// 168 hourly multipliers, Monday 00:00 first.
    #[serde(default = "flat_profile")]
    pub profile: Vec<f64>,
    pub clandestine_probability: f64,
    pub soft_fraction: f64,
    pub commodity_mix: BTreeMap<String, f64>,
}

fn flat_profile() -> Vec<f64> {
    vec![1.0; HOURS_PER_WEEK]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub kind: NodeKindSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum NodeKindSpec {
    Source {
        /// Relative share of the arrival stream entering here.
        #[serde(default = "one")]
        share: f64,
    },
    ServiceShed(ServiceShedSpec),
    ProbRouter,
    ShortestQueueRouter,
    Jump {
        target: String,
    },
    Berth,
    Sink,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceShedSpec {
    /// `None` for stations that consume time without screening (passport booths).
    #[serde(default)]
    pub sensor: Option<String>,
    /// `None` means unbounded.
    #[serde(default)]
    pub queue_capacity: Option<u32>,
    pub servers: u32,
    pub service_time: DistributionSpec,
    #[serde(default = "two")]
    pub exit_buffers: u32,
    #[serde(default)]
    pub applies_to: SideFilter,
    #[serde(default)]
    pub full_policy: FullPolicy,
    /// Optional label for scenario-level detection-rate lookups.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
}

fn two() -> u32 {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SideFilter {
    Soft,
    Hard,
    #[default]
    Both,
}

impl SideFilter {
    pub fn matches(self, side: Side) -> bool {
        match self {
            SideFilter::Both => true,
            SideFilter::Soft => side == Side::Soft,
            SideFilter::Hard => side == Side::Hard,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FlagFilter {
    #[default]
    Any,
    Flagged,
    Clear,
}

impl FlagFilter {
    pub fn matches(self, flagged: bool) -> bool {
        match self {
            FlagFilter::Any => true,
            FlagFilter::Flagged => flagged,
            FlagFilter::Clear => !flagged,
        }
    }
}

/// What an upstream element does when this shed's entrance queue is full.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FullPolicy {
    #[default]
    Block,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub from: i64,
    pub to: i64,
    /// Omitted means 1.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probability: Option<f64>,
    #[serde(default)]
    pub side: SideFilter,
    #[serde(default)]
    pub flag: FlagFilter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JumpSpec {
    pub label: String,
    pub target: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrmSpec {
    pub default: DetectionProfile,
    #[serde(default)]
    pub entries: Vec<DrmEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_modifier: Option<LoadModifier>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BerthSpec {
    pub mode: BerthMode,
    pub dwell_time: DistributionSpec,
    pub squads: Vec<SquadSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquadSpec {
    pub check_interval: DistributionSpec,
    #[serde(default = "default_soft_sensor")]
    pub soft_sensor: String,
    #[serde(default = "default_hard_action")]
    pub hard_action: String,
}

fn default_soft_sensor() -> String {
    "CO2-mobile".to_string()
}

fn default_hard_action() -> String {
    "Visual".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_replications")]
    pub replications: u32,
    /// Observation window length for time series, minutes.
    #[serde(default = "default_sample_interval")]
    pub sample_interval: f64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    /// Stop generating lorries after this many arrivals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_arrivals: Option<u64>,
}

fn default_horizon() -> f64 {
    MINUTES_PER_YEAR
}

fn default_replications() -> u32 {
    20
}

fn default_sample_interval() -> f64 {
    1440.0
}

fn default_confidence() -> f64 {
    0.95
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            seed: None,
            replications: default_replications(),
            sample_interval: default_sample_interval(),
            confidence: default_confidence(),
            max_arrivals: None,
        }
    }
}

/// A single rule violation found while validating a scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub node: Option<i64>,
    pub rule: String,
}

impl Violation {
    pub fn at(node: i64, rule: impl Into<String>) -> Self {
        Self {
            node: Some(node),
            rule: rule.into(),
        }
    }

    pub fn global(rule: impl Into<String>) -> Self {
        Self {
            node: None,
            rule: rule.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Some(id) => write!(f, "node {id}: {}", self.rule),
            None => write!(f, "{}", self.rule),
        }
    }
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("scenario has {} violation(s):\n{}", .0.len(), .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
}

impl ScenarioError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            ScenarioError::Invalid(v) => v,
            _ => &[],
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn calais_default() -> Self {
        Self::from_json(CALAIS_DEFAULT_JSON).expect("shipped scenario parses")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("scenario serializes");
        let digest = Sha256::digest(&canonical);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Validates and compiles into a runnable model.
    pub fn validate(&self) -> Result<Model, ScenarioError> {
        Model::compile(self.clone())
    }

    /// Replaces every detection rate selected by `target` with `p`.
    pub fn with_common_rate(&self, p: f64, target: RateTarget) -> Self {
        let mut s = self.clone();
        let apply = |tp: &mut f64, fp: &mut f64| {
            if target.tp() {
                *tp = p;
            }
            if target.fp() {
                *fp = p;
            }
        };
        apply(&mut s.drm.default.tp, &mut s.drm.default.fp);
        for e in &mut s.drm.entries {
            apply(&mut e.tp, &mut e.fp);
        }
        s
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.run.horizon = horizon;
        self
    }

    pub fn with_berth_mode(mut self, mode: BerthMode) -> Self {
        if let Some(b) = self.berth.as_mut() {
            b.mode = mode;
        }
        self
    }
}

/// Loads, validates and compiles a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Model, ScenarioError> {
    Scenario::from_path(path)?.validate()
}
