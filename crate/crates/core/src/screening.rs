//! Detection Rate Matrix with hierarchical fallback, plus the stochastic
//! resolution of a single screening into one of the four outcomes.
//!
//! Entries can be stored at three specificity levels:
//!
//! | level | matched on                                             |
//! |-------|--------------------------------------------------------|
//! | 3     | containment (+ optional wall attributes), commodity, threat, sensor |
//! | 2     | commodity, threat, sensor                              |
//! | 1     | commodity, threat, sensor, scenario label              |
//!
//! A lookup tries level 3, then 2, then 1, and finally falls back to the
//! default profile.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::des::{CheckRecord, Lorry, Minutes, RandomStream, ScreeningOutcome};

pub const DEFAULT_THREAT: &str = "clandestine";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionProfile {
    /// Probability a present threat is flagged.
    pub tp: f64,
    /// Probability an absent threat is flagged.
    pub fp: f64,
}

impl DetectionProfile {
    pub fn new(tp: f64, fp: f64) -> Self {
        Self { tp, fp }
    }

    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.tp) && (0.0..=1.0).contains(&self.fp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Level {
    Scenario = 1,
    CommodityThreatSensor = 2,
    Full = 3,
}

impl TryFrom<u8> for Level {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Level::Scenario),
            2 => Ok(Level::CommodityThreatSensor),
            3 => Ok(Level::Full),
            other => Err(format!("DRM level must be 1, 2 or 3, got {other}")),
        }
    }
}

impl From<Level> for u8 {
    fn from(l: Level) -> u8 {
        l as u8
    }
}

/// Which level a lookup resolved at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MatchLevel {
    Default,
    Level(Level),
}

impl fmt::Display for MatchLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatchLevel::Default => write!(f, "default"),
            MatchLevel::Level(l) => write!(f, "{}", *l as u8),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DrmKey {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub containment: Option<String>,
    /// Millimetres.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_thickness: Option<f64>,
    /// kg/m³.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_density: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commodity: Option<String>,
    #[serde(default = "default_threat")]
    pub threat: String,
    pub sensor: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
}

fn default_threat() -> String {
    DEFAULT_THREAT.to_string()
}

impl DrmKey {
    pub fn new(sensor: impl Into<String>) -> Self {
        Self {
            threat: default_threat(),
            sensor: sensor.into(),
            ..Default::default()
        }
    }

    pub fn containment(mut self, c: impl Into<String>) -> Self {
        self.containment = Some(c.into());
        self
    }

    pub fn commodity(mut self, c: impl Into<String>) -> Self {
        self.commodity = Some(c.into());
        self
    }

    pub fn threat(mut self, t: impl Into<String>) -> Self {
        self.threat = t.into();
        self
    }

    pub fn scenario(mut self, s: impl Into<String>) -> Self {
        self.scenario = Some(s.into());
        self
    }

    pub fn walls(mut self, thickness: Option<f64>, density: Option<f64>) -> Self {
        self.wall_thickness = thickness;
        self.wall_density = density;
        self
    }
}

/// One stored row of the matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrmEntry {
    pub level: Level,
    #[serde(flatten)]
    pub key: DrmKey,
    pub tp: f64,
    pub fp: f64,
}

impl DrmEntry {
    pub fn profile(&self) -> DetectionProfile {
        DetectionProfile::new(self.tp, self.fp)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DrmError {
    #[error("DRM entry {index}: profile (tp={tp}, fp={fp}) outside [0,1]")]
    InvalidProfile { index: usize, tp: f64, fp: f64 },
    #[error("DRM default profile (tp={tp}, fp={fp}) outside [0,1]")]
    InvalidDefault { tp: f64, fp: f64 },
    #[error("DRM entry {index}: level {level} requires field `{field}`")]
    MissingField {
        index: usize,
        level: u8,
        field: &'static str,
    },
    #[error("DRM entry {index}: empty sensor or threat label")]
    EmptyLabel { index: usize },
    #[error("DRM entry {index} duplicates entry {first}")]
    Duplicate { index: usize, first: usize },
}

type ExactKey = (Option<String>, Option<String>, String, String, Option<String>);

/// Detection Rate Matrix. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Drm {
    entries: Vec<DrmEntry>,
    default_profile: DetectionProfile,
    // (level, containment, commodity, threat, sensor, scenario) -> entry indices;
    // more than one index only when wall attributes distinguish them.
    index: HashMap<(Level, ExactKey), Vec<usize>>,
}

impl Drm {
    pub fn new(default_profile: DetectionProfile, entries: Vec<DrmEntry>) -> Result<Self, Vec<DrmError>> {
        let mut errors = Vec::new();
        if !default_profile.is_valid() {
            errors.push(DrmError::InvalidDefault {
                tp: default_profile.tp,
                fp: default_profile.fp,
            });
        }
        let mut index: HashMap<(Level, ExactKey), Vec<usize>> = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            if !e.profile().is_valid() {
                errors.push(DrmError::InvalidProfile {
                    index: i,
                    tp: e.tp,
                    fp: e.fp,
                });
            }
            if e.key.sensor.is_empty() || e.key.threat.is_empty() {
                errors.push(DrmError::EmptyLabel { index: i });
            }
            let required: &[(&'static str, bool)] = match e.level {
                Level::Full => &[
                    ("containment", e.key.containment.is_some()),
                    ("commodity", e.key.commodity.is_some()),
                ],
                Level::CommodityThreatSensor => &[("commodity", e.key.commodity.is_some())],
                Level::Scenario => &[
                    ("commodity", e.key.commodity.is_some()),
                    ("scenario", e.key.scenario.is_some()),
                ],
            };
            let mut complete = true;
            for (field, present) in required {
                if !present {
                    complete = false;
                    errors.push(DrmError::MissingField {
                        index: i,
                        level: e.level as u8,
                        field,
                    });
                }
            }
            if !complete {
                continue;
            }
            let slot = index.entry((e.level, exact_key(e.level, &e.key))).or_default();
            if let Some(&first) = slot.iter().find(|&&j| same_walls(&entries[j].key, &e.key)) {
                errors.push(DrmError::Duplicate { index: i, first });
            } else {
                slot.push(i);
            }
        }
        if errors.is_empty() {
            Ok(Self {
                entries,
                default_profile,
                index,
            })
        } else {
            Err(errors)
        }
    }

    pub fn entries(&self) -> &[DrmEntry] {
        &self.entries
    }

    pub fn default_profile(&self) -> DetectionProfile {
        self.default_profile
    }

    /// Most specific matching profile and the level it matched at.
    pub fn lookup(&self, key: &DrmKey) -> (DetectionProfile, MatchLevel) {
        for level in [Level::Full, Level::CommodityThreatSensor, Level::Scenario] {
            if let Some(p) = self.lookup_level(level, key) {
                return (p, MatchLevel::Level(level));
            }
        }
        (self.default_profile, MatchLevel::Default)
    }

    fn lookup_level(&self, level: Level, key: &DrmKey) -> Option<DetectionProfile> {
        let needed = match level {
            Level::Full => key.containment.is_some() && key.commodity.is_some(),
            Level::CommodityThreatSensor => key.commodity.is_some(),
            Level::Scenario => key.commodity.is_some() && key.scenario.is_some(),
        };
        if !needed {
            return None;
        }
        let candidates = self.index.get(&(level, exact_key(level, key)))?;
        // Wall attributes on an entry must equal the query's; an entry without
        // them matches any query. Prefer the entry that pins the most attributes.
        candidates
            .iter()
            .map(|&i| &self.entries[i])
            .filter(|e| walls_match(&e.key, key))
            .max_by_key(|e| e.key.wall_thickness.is_some() as u8 + e.key.wall_density.is_some() as u8)
            .map(DrmEntry::profile)
    }

    /// Copy of this matrix with every true-positive rate (and/or false-positive
    /// rate) replaced by `p`, the default profile included.
    pub fn with_common_rate(&self, p: f64, target: RateTarget) -> Self {
        let mut out = self.clone();
        let apply = |tp: &mut f64, fp: &mut f64| {
            if target.tp() {
                *tp = p;
            }
            if target.fp() {
                *fp = p;
            }
        };
        apply(&mut out.default_profile.tp, &mut out.default_profile.fp);
        for e in &mut out.entries {
            apply(&mut e.tp, &mut e.fp);
        }
        out
    }
}

/// Which rate a sweep overrides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateTarget {
    #[default]
    Tp,
    Fp,
    Both,
}

impl RateTarget {
    pub fn tp(self) -> bool {
        matches!(self, RateTarget::Tp | RateTarget::Both)
    }

    pub fn fp(self) -> bool {
        matches!(self, RateTarget::Fp | RateTarget::Both)
    }
}

fn exact_key(level: Level, key: &DrmKey) -> ExactKey {
    let containment = match level {
        Level::Full => key.containment.clone(),
        _ => None,
    };
    let scenario = match level {
        Level::Scenario => key.scenario.clone(),
        _ => None,
    };
    (
        containment,
        key.commodity.clone(),
        key.threat.clone(),
        key.sensor.clone(),
        scenario,
    )
}

fn same_walls(a: &DrmKey, b: &DrmKey) -> bool {
    a.wall_thickness == b.wall_thickness && a.wall_density == b.wall_density
}

fn walls_match(entry: &DrmKey, query: &DrmKey) -> bool {
    entry.wall_thickness.is_none_or(|t| query.wall_thickness == Some(t))
        && entry.wall_density.is_none_or(|d| query.wall_density == Some(d))
}

pub fn drm_lookup(drm: &Drm, key: &DrmKey) -> (DetectionProfile, MatchLevel) {
    drm.lookup(key)
}

/// Keys from `universe` that resolve only to the default profile.
pub fn drm_gaps(drm: &Drm, universe: &[DrmKey]) -> Vec<DrmKey> {
    universe
        .iter()
        .filter(|k| drm.lookup(k).1 == MatchLevel::Default)
        .cloned()
        .collect()
}

/// Linear degradation of sensitivity once the entrance queue exceeds `q0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadModifier {
    /// Fractional loss of sensitivity per queued lorry beyond the threshold.
    pub alpha: f64,
    pub q0: u32,
    pub floor: f64,
}

impl Default for LoadModifier {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            q0: 0,
            floor: 0.0,
        }
    }
}

impl LoadModifier {
    pub fn is_valid(&self) -> bool {
        self.alpha >= 0.0 && (0.0..=1.0).contains(&self.floor)
    }

    pub fn is_inert(&self) -> bool {
        self.alpha == 0.0
    }
}

pub fn effective_tp(base: DetectionProfile, queue_len: usize, m: &LoadModifier) -> f64 {
    if m.is_inert() {
        return base.tp;
    }
    let excess = queue_len.saturating_sub(m.q0 as usize) as f64;
    let degraded = base.tp * (1.0 - m.alpha * excess);
    // a floor above the base rate never raises it
    degraded.clamp(m.floor.min(base.tp), base.tp)
}

/// Resolves one screening of `lorry`.
///
/// A true positive removes the clandestines; any positive flags the lorry for
/// diversion and any negative clears the flag. Exactly one uniform is drawn.
pub fn resolve_screening(
    lorry: &mut Lorry,
    profile: DetectionProfile,
    node: i64,
    sensor: &Arc<str>,
    now: Minutes,
    rng: &mut RandomStream,
) -> ScreeningOutcome {
    let outcome = if lorry.clandestine_aboard {
        if rng.chance(profile.tp) {
            ScreeningOutcome::TruePositive
        } else {
            ScreeningOutcome::FalseNegative
        }
    } else if rng.chance(profile.fp) {
        ScreeningOutcome::FalsePositive
    } else {
        ScreeningOutcome::TrueNegative
    };
    if outcome == ScreeningOutcome::TruePositive {
        lorry.clandestine_aboard = false;
        lorry.detected = true;
    }
    lorry.flagged = outcome.is_positive();
    lorry.record_check(CheckRecord {
        node,
        sensor: Arc::clone(sensor),
        outcome,
        time: now,
    });
    outcome
}
