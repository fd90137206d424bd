//! The event loop tying the kernel, the process graph, screening and the
//! Berth together.
//!
//! Each run owns six random streams keyed by `(master_seed, replication)`:
//! `arrivals` (inter-arrival gaps), `lorry` (source, side, commodity and
//! payload), `routing`, `service`, `screening` (fixed sheds) and `berth`
//! (dwell, squad intervals, picks and squad screenings).

use std::collections::{BTreeMap, HashMap, VecDeque};

use crate::analysis::{RunCounters, ShedSummary, WindowSample};
use crate::berth::BerthState;
use crate::des::{make_stream, EventCalendar, Lorry, Minutes, RandomStream, ScreeningOutcome};
use crate::error::ModelError;
use crate::network::{route_probabilistic, route_shortest_queue, ExitSlot, FullPolicy, Model, NodeKind, ShedState};
use crate::screening::{effective_tp, resolve_screening};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Arrival,
    ServiceEnd { node: usize, server: usize },
    SquadCheck { squad: usize },
    BerthDeparture { lorry: u64, stay: u64 },
    StatSample,
}

struct Streams {
    arrivals: RandomStream,
    lorry: RandomStream,
    routing: RandomStream,
    service: RandomStream,
    screening: RandomStream,
    berth: RandomStream,
}

impl Streams {
    fn new(seed: u64, rep: u64) -> Self {
        Self {
            arrivals: make_stream(seed, rep, "arrivals"),
            lorry: make_stream(seed, rep, "lorry"),
            routing: make_stream(seed, rep, "routing"),
            service: make_stream(seed, rep, "service"),
            screening: make_stream(seed, rep, "screening"),
            berth: make_stream(seed, rep, "berth"),
        }
    }
}

#[derive(Default)]
struct Window {
    arrivals: u64,
    detected: u64,
    missed: u64,
}

/// One replication of a model.
pub struct Simulation<'m> {
    model: &'m Model,
    cal: EventCalendar<Event>,
    streams: Streams,
    sheds: Vec<Option<ShedState>>,
    berth: Option<BerthState>,
    /// Current Berth stay of each parked lorry; departures of older stays are stale.
    stays: HashMap<u64, u64>,
    next_stay: u64,
    /// Lorries waiting to enter a full bounded queue from a Source or the Berth.
    backlog: VecDeque<(Lorry, usize)>,
    bounded: bool,
    counters: RunCounters,
    visits: Vec<u64>,
    window: Window,
    next_id: u64,
    keep_exited: bool,
    exited: Vec<Lorry>,
    started: bool,
}

impl<'m> Simulation<'m> {
    pub fn new(model: &'m Model, master_seed: u64, replication: u64) -> Self {
        let g = &model.graph;
        let sheds: Vec<Option<ShedState>> = g
            .nodes
            .iter()
            .map(|n| match &n.kind {
                NodeKind::ServiceShed(s) => Some(ShedState::new(s)),
                _ => None,
            })
            .collect();
        let bounded = g
            .nodes
            .iter()
            .any(|n| matches!(&n.kind, NodeKind::ServiceShed(s) if s.capacity.is_some()));
        let berth = match (&model.berth, g.berth) {
            (Some(b), Some(idx)) => Some(BerthState::new(b.mode, g.nodes[idx].id)),
            _ => None,
        };
        Self {
            model,
            cal: EventCalendar::new(),
            streams: Streams::new(master_seed, replication),
            sheds,
            berth,
            stays: HashMap::new(),
            next_stay: 0,
            backlog: VecDeque::new(),
            bounded,
            counters: RunCounters {
                replication,
                ..Default::default()
            },
            visits: vec![0; g.nodes.len()],
            window: Window::default(),
            next_id: 0,
            keep_exited: false,
            exited: Vec::new(),
            started: false,
        }
    }

    /// Keep every lorry that reaches a Sink, for inspection after the run.
    pub fn keep_exited(mut self, yes: bool) -> Self {
        self.keep_exited = yes;
        self
    }

    pub fn exited(&self) -> &[Lorry] {
        &self.exited
    }

    pub fn now(&self) -> Minutes {
        self.cal.now()
    }

    fn start(&mut self) -> Result<(), ModelError> {
        self.started = true;
        if let Some(gap) = self.model.arrivals.sample_interarrival(0.0, &mut self.streams.arrivals) {
            self.cal.schedule(gap, Event::Arrival)?;
        }
        if let (Some(berth), Some(_)) = (&self.model.berth, &self.berth) {
            for (i, squad) in berth.squads.iter().enumerate() {
                let t = squad.interval.sample(&mut self.streams.berth);
                self.cal.schedule(t, Event::SquadCheck { squad: i })?;
            }
        }
        self.cal.schedule(self.model.run.sample_interval, Event::StatSample)?;
        Ok(())
    }

    /// Processes every event with fire time at or before `t_end` and reports
    /// the counters. Lorries still inside at `t_end` are in flight.
    pub fn run_until(&mut self, t_end: Minutes) -> Result<RunCounters, ModelError> {
        if !self.started {
            self.start()?;
        }
        while t_end > 0.0 && self.cal.peek_time().is_some_and(|t| t <= t_end) {
            let ev = self.cal.pop_next().expect("peeked");
            self.counters.events += 1;
            self.handle(ev.event)?;
        }
        self.cal.advance_to(t_end);
        Ok(self.finish_counters(t_end))
    }

    fn handle(&mut self, ev: Event) -> Result<(), ModelError> {
        match ev {
            Event::Arrival => self.on_arrival(),
            Event::ServiceEnd { node, server } => self.on_service_end(node, server),
            Event::SquadCheck { squad } => self.on_squad_check(squad),
            Event::BerthDeparture { lorry, stay } => self.on_berth_departure(lorry, stay),
            Event::StatSample => self.on_sample(),
        }
    }

    fn on_arrival(&mut self) -> Result<(), ModelError> {
        let model = self.model;
        let now = self.cal.now();
        let rng = &mut self.streams.lorry;
        let source = model.sample_source(rng);
        let side = model.mix.sample_side(rng);
        let commodity = model.mix.sample_commodity(rng);
        let clandestine = rng.chance(model.mix.clandestine_probability);
        let mut lorry = Lorry::new(self.next_id, side, commodity, clandestine, now);
        self.next_id += 1;
        self.counters.arrivals += 1;
        self.window.arrivals += 1;
        if clandestine {
            self.counters.clandestine_arrivals += 1;
        }
        self.visits[source] += 1;

        let target = self.resolve_target(source, &mut lorry)?;
        self.send(lorry, target)?;

        let capped = model.run.max_arrivals.is_some_and(|m| self.counters.arrivals >= m);
        if !capped {
            if let Some(gap) = model.arrivals.sample_interarrival(now, &mut self.streams.arrivals) {
                self.cal.schedule(now + gap, Event::Arrival)?;
            }
        }
        Ok(())
    }

    /// Moves `lorry` from `from` across instant nodes to the next node where
    /// time is consumed.
    fn resolve_target(&mut self, from: usize, lorry: &mut Lorry) -> Result<usize, ModelError> {
        let mut at = self.next_hop(from, lorry)?;
        self.visits[at] += 1;
        while self.model.graph.nodes[at].kind.is_instant() {
            at = self.next_hop(at, lorry)?;
            self.visits[at] += 1;
        }
        Ok(at)
    }

    fn next_hop(&mut self, from: usize, lorry: &Lorry) -> Result<usize, ModelError> {
        let g = &self.model.graph;
        let node = &g.nodes[from];
        match node.kind {
            NodeKind::Jump { target } => Ok(target),
            NodeKind::ShortestQueueRouter => {
                let candidates: Vec<usize> = g.out[from]
                    .iter()
                    .filter(|e| e.matches(lorry.side, lorry.flagged))
                    .map(|e| e.to)
                    .collect();
                if candidates.is_empty() {
                    return Err(ModelError::NoMatchingEdge {
                        node: node.id,
                        side: lorry.side,
                        flagged: lorry.flagged,
                    });
                }
                let loads: Vec<usize> = candidates
                    .iter()
                    .map(|&c| self.sheds[c].as_ref().map_or(0, |s| s.load()))
                    .collect();
                Ok(candidates[route_shortest_queue(&loads)])
            }
            _ => route_probabilistic(node.id, &g.out[from], lorry, &mut self.streams.routing),
        }
    }

    fn can_accept(&self, target: usize) -> bool {
        match &self.model.graph.nodes[target].kind {
            NodeKind::ServiceShed(s) => {
                s.full_policy == FullPolicy::Drop || self.sheds[target].as_ref().is_some_and(|st| st.has_room())
            }
            _ => true,
        }
    }

    /// Delivers from a Source or the Berth, waiting in the backlog when the
    /// target is full and blocks.
    fn send(&mut self, lorry: Lorry, target: usize) -> Result<(), ModelError> {
        let blocked_behind = self.backlog.iter().any(|(_, t)| *t == target);
        if !blocked_behind && self.can_accept(target) {
            self.deliver(lorry, target)
        } else {
            self.backlog.push_back((lorry, target));
            Ok(())
        }
    }

    /// Hands `lorry` to `target`; the caller has checked [`can_accept`].
    fn deliver(&mut self, mut lorry: Lorry, target: usize) -> Result<(), ModelError> {
        let now = self.cal.now();
        let model = self.model;
        match &model.graph.nodes[target].kind {
            NodeKind::Sink => {
                lorry.exit(now);
                self.counters.exits += 1;
                if lorry.clandestine_aboard {
                    self.counters.missed += 1;
                    self.window.missed += 1;
                }
                if self.keep_exited {
                    self.exited.push(lorry);
                }
                Ok(())
            }
            NodeKind::Berth => {
                let spec = model.berth.as_ref().ok_or(ModelError::NoBerth)?;
                let berth = self.berth.as_mut().ok_or(ModelError::NoBerth)?;
                let dwell = spec.dwell.sample(&mut self.streams.berth);
                let id = lorry.id;
                let departs = berth.arrive(lorry, now, dwell)?;
                let stay = self.next_stay;
                self.next_stay += 1;
                self.stays.insert(id, stay);
                self.cal.schedule(departs, Event::BerthDeparture { lorry: id, stay })?;
                Ok(())
            }
            NodeKind::ServiceShed(_) => {
                let state = self.sheds[target].as_mut().expect("shed state");
                match state.admit(lorry, now) {
                    Ok(()) => self.start_service(target),
                    Err(lorry) => {
                        self.counters.balked += 1;
                        if lorry.clandestine_aboard {
                            self.counters.missed += 1;
                            self.window.missed += 1;
                        }
                        Ok(())
                    }
                }
            }
            other => unreachable!("lorry delivered to instant node {}", other.name()),
        }
    }

    fn start_service(&mut self, node: usize) -> Result<(), ModelError> {
        let now = self.cal.now();
        let NodeKind::ServiceShed(shed) = &self.model.graph.nodes[node].kind else {
            unreachable!("service at non-shed node");
        };
        let state = self.sheds[node].as_mut().expect("shed state");
        while let Some(server) = state.try_start(now) {
            let dt = shed.service.sample(&mut self.streams.service);
            self.cal.schedule(now + dt, Event::ServiceEnd { node, server })?;
        }
        Ok(())
    }

    fn on_service_end(&mut self, node: usize, server: usize) -> Result<(), ModelError> {
        let now = self.cal.now();
        let model = self.model;
        let n = &model.graph.nodes[node];
        let NodeKind::ServiceShed(shed) = &n.kind else {
            unreachable!("service end at non-shed node");
        };
        let state = self.sheds[node].as_mut().expect("shed state");
        let queue_len = state.queue_len();
        let mut lorry = state.take_completed(server);

        if let Some(station) = shed.screening.as_ref().filter(|_| shed.applies_to.matches(lorry.side)) {
            let mut profile = station.profile(lorry.side, lorry.commodity);
            profile.tp = effective_tp(profile, queue_len, &model.load_modifier);
            let outcome = resolve_screening(
                &mut lorry,
                profile,
                n.id,
                &station.sensor,
                now,
                &mut self.streams.screening,
            );
            self.record_outcome(n.id, &station.sensor, outcome);
        }

        let target = self.resolve_target(node, &mut lorry)?;
        self.sheds[node]
            .as_mut()
            .expect("shed state")
            .finish(server, ExitSlot { lorry, target }, now);
        self.drain(node)?;
        self.start_service(node)?;
        if self.bounded {
            self.settle()?;
        }
        Ok(())
    }

    fn record_outcome(&mut self, node: i64, sensor: &str, outcome: ScreeningOutcome) {
        self.counters.screenings += 1;
        match outcome {
            ScreeningOutcome::TruePositive => {
                self.counters.detected += 1;
                self.window.detected += 1;
                *self.counters.detected_by.entry((node, sensor.to_string())).or_default() += 1;
            }
            ScreeningOutcome::FalsePositive => self.counters.false_positives += 1,
            _ => {}
        }
    }

    /// Passes exit-buffer lorries of `node` downstream while their targets
    /// accept them. Returns how many moved.
    fn drain(&mut self, node: usize) -> Result<usize, ModelError> {
        let now = self.cal.now();
        let mut moved = 0;
        let mut i = 0;
        loop {
            let state = self.sheds[node].as_ref().expect("shed state");
            let Some(target) = state.exit_slots().nth(i).map(|s| s.target) else {
                break;
            };
            if self.can_accept(target) {
                let slot = self.sheds[node].as_mut().expect("shed state").release_exit(i, now);
                self.deliver(slot.lorry, slot.target)?;
                moved += 1;
            } else {
                i += 1;
            }
        }
        Ok(moved)
    }

    /// Repeats draining and service starts until no lorry can move. Only
    /// needed when some queue is bounded.
    fn settle(&mut self) -> Result<(), ModelError> {
        loop {
            let mut moved = 0;
            let mut waiting = VecDeque::with_capacity(self.backlog.len());
            while let Some((lorry, target)) = self.backlog.pop_front() {
                let blocked_behind = waiting.iter().any(|(_, t): &(Lorry, usize)| *t == target);
                if !blocked_behind && self.can_accept(target) {
                    self.deliver(lorry, target)?;
                    moved += 1;
                } else {
                    waiting.push_back((lorry, target));
                }
            }
            self.backlog = waiting;
            for node in 0..self.sheds.len() {
                if self.sheds[node].is_some() {
                    moved += self.drain(node)?;
                    self.start_service(node)?;
                }
            }
            if moved == 0 {
                return Ok(());
            }
        }
    }

    fn on_squad_check(&mut self, squad: usize) -> Result<(), ModelError> {
        let now = self.cal.now();
        let model = self.model;
        let spec = model.berth.as_ref().ok_or(ModelError::NoBerth)?;
        let sq = &spec.squads[squad];
        let berth = self.berth.as_mut().ok_or(ModelError::NoBerth)?;
        let node_idx = model.graph.berth.ok_or(ModelError::NoBerth)?;
        if let Some(check) = berth.squad_check(sq, &mut self.streams.berth, now) {
            let station = match check.side {
                crate::des::Side::Soft => &sq.soft,
                crate::des::Side::Hard => &sq.hard,
            };
            self.record_outcome(model.graph.nodes[node_idx].id, &station.sensor, check.outcome);
            if let Some(mut lorry) = check.released {
                self.stays.remove(&lorry.id);
                let target = self.resolve_target(node_idx, &mut lorry)?;
                self.send(lorry, target)?;
            }
        }
        self.counters.berth_ticks = berth_ticks(&self.berth);
        let dt = sq.interval.sample(&mut self.streams.berth);
        self.cal.schedule(now + dt, Event::SquadCheck { squad })?;
        Ok(())
    }

    fn on_berth_departure(&mut self, id: u64, stay: u64) -> Result<(), ModelError> {
        if self.stays.get(&id) != Some(&stay) {
            // released earlier by a squad
            return Ok(());
        }
        self.stays.remove(&id);
        let node_idx = self.model.graph.berth.ok_or(ModelError::NoBerth)?;
        let berth = self.berth.as_mut().ok_or(ModelError::NoBerth)?;
        let mut lorry = berth.depart(id)?;
        let target = self.resolve_target(node_idx, &mut lorry)?;
        self.send(lorry, target)
    }

    fn on_sample(&mut self) -> Result<(), ModelError> {
        let now = self.cal.now();
        let queue_lengths = self
            .model
            .graph
            .shed_indices()
            .map(|i| self.sheds[i].as_ref().map_or(0, |s| s.queue_len()))
            .collect();
        let w = std::mem::take(&mut self.window);
        self.counters.windows.push(WindowSample {
            end: now,
            arrivals: w.arrivals,
            detected: w.detected,
            missed: w.missed,
            queue_lengths,
            berth_parked: self.berth.as_ref().map_or(0, |b| b.parked_len()),
        });
        self.cal
            .schedule(now + self.model.run.sample_interval, Event::StatSample)?;
        Ok(())
    }

    fn in_system(&self) -> impl Iterator<Item = &Lorry> {
        self.sheds
            .iter()
            .flatten()
            .flat_map(|s| s.lorries())
            .chain(self.berth.iter().flat_map(|b| b.lorries()))
            .chain(self.backlog.iter().map(|(l, _)| l))
    }

    fn finish_counters(&self, t_end: Minutes) -> RunCounters {
        let mut rc = self.counters.clone();
        rc.horizon = t_end;
        let (mut all, mut clandestine) = (0, 0);
        for l in self.in_system() {
            all += 1;
            if l.clandestine_aboard {
                clandestine += 1;
            }
        }
        rc.in_flight_at_end = all;
        rc.clandestine_in_flight = clandestine;
        rc.berth_ticks = berth_ticks(&self.berth);
        rc.berth_checks = self.berth.as_ref().map_or(0, |b| b.checks);
        let g = &self.model.graph;
        rc.node_visits = g
            .nodes
            .iter()
            .zip(&self.visits)
            .map(|(n, &v)| (n.id, v))
            .collect::<BTreeMap<_, _>>();
        rc.sheds = g
            .shed_indices()
            .map(|i| {
                let s = self.sheds[i].as_ref().expect("shed state");
                ShedSummary {
                    node: g.nodes[i].id,
                    name: g.nodes[i].name.clone(),
                    mean_in_system: s.mean_in_system(t_end),
                    served: s.served,
                    max_queue: s.max_queue,
                }
            })
            .collect();
        rc
    }
}

fn berth_ticks(b: &Option<BerthState>) -> u64 {
    b.as_ref().map_or(0, |b| b.ticks)
}

/// Runs replication `replication` of `model` to `t_end`.
pub fn run_until(model: &Model, master_seed: u64, replication: u64, t_end: Minutes) -> Result<RunCounters, ModelError> {
    Simulation::new(model, master_seed, replication).run_until(t_end)
}
