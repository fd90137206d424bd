//! Mobile squads checking lorries parked at the Berth before departure.
//!
//! Squads are recurring events: each tick picks one eligible parked lorry
//! uniformly at random and checks it. Soft-sided lorries get the squad's
//! probe sensor, hard-sided ones are opened. In `CheckOnce` mode a checked
//! lorry goes on an ignore list; in `Recheck` mode every parked lorry stays
//! eligible.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::des::{Lorry, Minutes, RandomStream, ScreeningOutcome, Side};
use crate::dist::Dist;
use crate::error::ModelError;
use crate::network::StationScreening;
use crate::screening::resolve_screening;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BerthMode {
    CheckOnce,
    Recheck,
}

#[derive(Debug, Clone)]
pub struct CompiledSquad {
    pub interval: Dist,
    pub soft: StationScreening,
    pub hard: StationScreening,
}

/// Result of one squad tick that found a lorry to check.
#[derive(Debug, Clone, PartialEq)]
pub struct SquadCheck {
    pub lorry: u64,
    pub side: Side,
    pub outcome: ScreeningOutcome,
    /// The lorry, when a true positive took it off the Berth.
    pub released: Option<Lorry>,
}

#[derive(Debug, Clone)]
pub struct BerthState {
    mode: BerthMode,
    node_id: i64,
    parked: HashMap<u64, Lorry>,
    eligible: Vec<u64>,
    position: HashMap<u64, usize>,
    ignore_list: HashSet<u64>,
    pub ticks: u64,
    pub checks: u64,
}

impl BerthState {
    pub fn new(mode: BerthMode, node_id: i64) -> Self {
        Self {
            mode,
            node_id,
            parked: HashMap::new(),
            eligible: Vec::new(),
            position: HashMap::new(),
            ignore_list: HashSet::new(),
            ticks: 0,
            checks: 0,
        }
    }

    pub fn mode(&self) -> BerthMode {
        self.mode
    }

    pub fn parked_len(&self) -> usize {
        self.parked.len()
    }

    pub fn eligible_len(&self) -> usize {
        self.eligible.len()
    }

    pub fn is_parked(&self, id: u64) -> bool {
        self.parked.contains_key(&id)
    }

    pub fn is_ignored(&self, id: u64) -> bool {
        self.ignore_list.contains(&id)
    }

    pub fn lorries(&self) -> impl Iterator<Item = &Lorry> {
        self.parked.values()
    }

    /// Parks `lorry`. The caller schedules its departure at `now + dwell`;
    /// the departure time is returned for convenience.
    pub fn arrive(&mut self, lorry: Lorry, now: Minutes, dwell: Minutes) -> Result<Minutes, ModelError> {
        let id = lorry.id;
        if self.parked.contains_key(&id) {
            return Err(ModelError::AlreadyParked(id));
        }
        self.parked.insert(id, lorry);
        self.position.insert(id, self.eligible.len());
        self.eligible.push(id);
        Ok(now + dwell)
    }

    fn make_ineligible(&mut self, id: u64) {
        if let Some(i) = self.position.remove(&id) {
            self.eligible.swap_remove(i);
            if let Some(&moved) = self.eligible.get(i) {
                self.position.insert(moved, i);
            }
        }
    }

    /// One squad tick. `None` when there is nobody to check.
    pub fn squad_check(&mut self, squad: &CompiledSquad, rng: &mut RandomStream, now: Minutes) -> Option<SquadCheck> {
        self.ticks += 1;
        if self.eligible.is_empty() {
            return None;
        }
        let id = self.eligible[rng.index(self.eligible.len())];
        let lorry = self.parked.get_mut(&id).expect("eligible lorry is parked");
        let station = match lorry.side {
            Side::Soft => &squad.soft,
            Side::Hard => &squad.hard,
        };
        let profile = station.profile(lorry.side, lorry.commodity);
        let side = lorry.side;
        let outcome = resolve_screening(lorry, profile, self.node_id, &station.sensor, now, rng);
        self.checks += 1;
        if self.mode == BerthMode::CheckOnce {
            self.make_ineligible(id);
            self.ignore_list.insert(id);
        }
        let released = (outcome == ScreeningOutcome::TruePositive).then(|| self.remove(id).expect("parked"));
        Some(SquadCheck {
            lorry: id,
            side,
            outcome,
            released,
        })
    }

    fn remove(&mut self, id: u64) -> Option<Lorry> {
        let lorry = self.parked.remove(&id)?;
        self.make_ineligible(id);
        self.ignore_list.remove(&id);
        Some(lorry)
    }

    /// Ferry departure: the lorry leaves the Berth.
    pub fn depart(&mut self, id: u64) -> Result<Lorry, ModelError> {
        self.remove(id).ok_or(ModelError::NotParked(id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::des::make_stream;
    use crate::dist::DistributionSpec;
    use crate::screening::{DetectionProfile, Drm};

    fn squad(tp: f64) -> CompiledSquad {
        let drm = Drm::new(DetectionProfile::new(tp, 0.0), vec![]).unwrap();
        let commodities = ["general".to_string()];
        CompiledSquad {
            interval: DistributionSpec::Constant { value: 10.0 }.sampler(),
            soft: StationScreening::resolve(&drm, "CO2-mobile", None, &commodities),
            hard: StationScreening::resolve(&drm, "Visual", None, &commodities),
        }
    }

    fn lorry(id: u64, side: Side, clandestine: bool) -> Lorry {
        Lorry::new(id, side, 0, clandestine, 0.0)
    }

    #[test]
    fn arrival_returns_departure_time() {
        let mut b = BerthState::new(BerthMode::CheckOnce, 99);
        assert_eq!(b.arrive(lorry(1, Side::Soft, false), 100.0, 45.0), Ok(145.0));
        b.arrive(lorry(2, Side::Hard, false), 100.0, 10.0).unwrap();
        assert_eq!(b.parked_len(), 2);
        assert_eq!(
            b.arrive(lorry(1, Side::Soft, false), 101.0, 1.0),
            Err(ModelError::AlreadyParked(1))
        );
    }

    #[test]
    fn check_once_uses_ignore_list() {
        let sq = squad(0.0);
        let mut rng = make_stream(1, 0, "berth");
        let mut b = BerthState::new(BerthMode::CheckOnce, 99);
        b.arrive(lorry(1, Side::Soft, true), 0.0, 100.0).unwrap();
        let first = b.squad_check(&sq, &mut rng, 10.0).unwrap();
        assert_eq!(first.outcome, ScreeningOutcome::FalseNegative);
        assert!(b.is_ignored(1));
        assert!(b.squad_check(&sq, &mut rng, 20.0).is_none());
        assert_eq!((b.ticks, b.checks), (2, 1));
        let l = b.depart(1).unwrap();
        assert_eq!(l.checks.len(), 1);
        assert!(!b.is_ignored(1));
    }

    #[test]
    fn recheck_detects_with_certainty() {
        let sq = squad(1.0);
        let mut rng = make_stream(1, 0, "berth");
        let mut b = BerthState::new(BerthMode::Recheck, 99);
        b.arrive(lorry(1, Side::Soft, true), 0.0, 100.0).unwrap();
        let c = b.squad_check(&sq, &mut rng, 10.0).unwrap();
        assert_eq!(c.outcome, ScreeningOutcome::TruePositive);
        let released = c.released.unwrap();
        assert!(released.detected && !released.clandestine_aboard);
        assert_eq!(b.parked_len(), 0);
        assert_eq!(b.depart(1), Err(ModelError::NotParked(1)));
    }

    #[test]
    fn hard_lorries_are_opened() {
        let sq = squad(0.5);
        let mut rng = make_stream(1, 0, "berth");
        let mut b = BerthState::new(BerthMode::Recheck, 99);
        b.arrive(lorry(1, Side::Hard, false), 0.0, 100.0).unwrap();
        b.squad_check(&sq, &mut rng, 1.0).unwrap();
        let l = b.depart(1).unwrap();
        assert_eq!(&*l.checks[0].sensor, "Visual");
        assert_eq!(l.checks[0].node, 99);
    }

    #[test]
    fn idle_when_nobody_parked() {
        let sq = squad(1.0);
        let mut rng = make_stream(1, 0, "berth");
        let mut b = BerthState::new(BerthMode::Recheck, 99);
        assert!(b.squad_check(&sq, &mut rng, 1.0).is_none());
        assert_eq!((b.ticks, b.checks), (1, 0));
    }

    #[test]
    fn recheck_geometric_law() {
        // k checks at tp = 0.5 on a single parked clandestine lorry
        let sq = squad(0.5);
        let k = 4;
        let trials = 10_000;
        let mut rng = make_stream(23, 0, "berth");
        let mut detected = 0;
        for t in 0..trials {
            let mut b = BerthState::new(BerthMode::Recheck, 99);
            b.arrive(lorry(t, Side::Soft, true), 0.0, 45.0).unwrap();
            for i in 1..=k {
                if let Some(c) = b.squad_check(&sq, &mut rng, 10.0 * i as f64) {
                    if c.released.is_some() {
                        detected += 1;
                    }
                }
            }
        }
        let p = 1.0 - 0.5f64.powi(k);
        let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
        assert!((detected as f64 - trials as f64 * p).abs() < 3.0 * sigma, "{detected}");
    }

    #[test]
    fn eligible_set_stays_consistent() {
        let sq = squad(0.0);
        let mut rng = make_stream(4, 0, "berth");
        let mut b = BerthState::new(BerthMode::CheckOnce, 99);
        for id in 0..50 {
            b.arrive(lorry(id, Side::Soft, false), 0.0, 10.0).unwrap();
        }
        for _ in 0..20 {
            b.squad_check(&sq, &mut rng, 1.0);
        }
        for id in (0..50).step_by(3) {
            b.depart(id).unwrap();
        }
        let mut seen = HashSet::new();
        while let Some(c) = b.squad_check(&sq, &mut rng, 2.0) {
            assert!(seen.insert(c.lorry), "lorry {} checked twice", c.lorry);
        }
        assert_eq!(b.eligible_len(), 0);
    }
}
