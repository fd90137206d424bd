//! The screening process graph: node taxonomy, validation, routing and
//! service-shed state.
//!
//! A scenario file is parsed into a [`Scenario`], then validated and compiled
//! into a [`Model`]. Node references are resolved to dense indices and every
//! detection-rate lookup a shed or Berth squad can make is resolved up front,
//! so the event loop never touches strings or hash maps.

mod arrivals;
mod routing;
mod scenario;
mod shed;

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

pub use arrivals::{sample_interarrival, ArrivalProcess};
pub use routing::{route_probabilistic, route_shortest_queue};
pub use scenario::{
    load_scenario, ArrivalSpec, BerthSpec, DrmSpec, EdgeSpec, FlagFilter, FullPolicy, JumpSpec, NodeKindSpec, NodeSpec,
    RunSettings, Scenario, ScenarioError, ServiceShedSpec, SideFilter, SquadSpec, Violation, CALAIS_DEFAULT_JSON,
    HOURS_PER_WEEK,
};
pub use shed::{ExitSlot, ShedState};

use crate::berth::{BerthMode, CompiledSquad};
use crate::des::{RandomStream, Side};
use crate::dist::{Dist, DistributionSpec};
use crate::screening::{DetectionProfile, Drm, DrmKey, LoadModifier};

const PROBABILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub to: usize,
    pub probability: f64,
    pub side: SideFilter,
    pub flag: FlagFilter,
}

impl Edge {
    pub fn matches(&self, side: Side, flagged: bool) -> bool {
        self.side.matches(side) && self.flag.matches(flagged)
    }
}

/// Detection profiles a screening station applies, by lorry side and commodity.
#[derive(Debug, Clone)]
pub struct StationScreening {
    pub sensor: Arc<str>,
    profiles: Vec<DetectionProfile>,
    commodities: usize,
}

impl StationScreening {
    pub fn resolve(drm: &Drm, sensor: &str, scenario: Option<&str>, commodities: &[String]) -> Self {
        let mut profiles = Vec::with_capacity(2 * commodities.len());
        for side in Side::ALL {
            for c in commodities {
                let mut key = DrmKey::new(sensor)
                    .containment(side.containment())
                    .commodity(c.as_str());
                if let Some(s) = scenario {
                    key = key.scenario(s);
                }
                profiles.push(drm.lookup(&key).0);
            }
        }
        Self {
            sensor: Arc::from(sensor),
            profiles,
            commodities: commodities.len(),
        }
    }

    pub fn profile(&self, side: Side, commodity: usize) -> DetectionProfile {
        let row = match side {
            Side::Soft => 0,
            Side::Hard => 1,
        };
        self.profiles[row * self.commodities + commodity]
    }
}

#[derive(Debug, Clone)]
pub struct Shed {
    pub servers: usize,
    pub capacity: Option<usize>,
    pub exit_buffers: usize,
    pub service: Dist,
    pub applies_to: SideFilter,
    pub full_policy: FullPolicy,
    pub screening: Option<StationScreening>,
}

#[derive(Debug, Clone)]
pub enum NodeKind {
    Source { share: f64 },
    ServiceShed(Shed),
    ProbRouter,
    ShortestQueueRouter,
    Jump { target: usize },
    Berth,
    Sink,
}

impl NodeKind {
    pub fn name(&self) -> &'static str {
        match self {
            NodeKind::Source { .. } => "Source",
            NodeKind::ServiceShed(_) => "ServiceShed",
            NodeKind::ProbRouter => "ProbRouter",
            NodeKind::ShortestQueueRouter => "ShortestQueueRouter",
            NodeKind::Jump { .. } => "Jump",
            NodeKind::Berth => "Berth",
            NodeKind::Sink => "Sink",
        }
    }

    /// Nodes a lorry passes through without any time elapsing.
    pub fn is_instant(&self) -> bool {
        matches!(
            self,
            NodeKind::Source { .. } | NodeKind::ProbRouter | NodeKind::ShortestQueueRouter | NodeKind::Jump { .. }
        )
    }
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: i64,
    pub name: Option<String>,
    pub kind: NodeKind,
}

impl Node {
    pub fn label(&self) -> String {
        match &self.name {
            Some(n) => format!("{} ({n})", self.id),
            None => self.id.to_string(),
        }
    }
}

/// Validated node/edge network. Indices are positions in `nodes`.
#[derive(Debug, Clone)]
pub struct ProcessGraph {
    pub nodes: Vec<Node>,
    pub out: Vec<Vec<Edge>>,
    pub entries: Vec<usize>,
    pub exits: Vec<usize>,
    pub berth: Option<usize>,
    index_of: HashMap<i64, usize>,
}

impl ProcessGraph {
    pub fn index_of(&self, id: i64) -> Option<usize> {
        self.index_of.get(&id).copied()
    }

    pub fn shed(&self, idx: usize) -> Option<&Shed> {
        match &self.nodes[idx].kind {
            NodeKind::ServiceShed(s) => Some(s),
            _ => None,
        }
    }

    pub fn shed_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| matches!(self.nodes[i].kind, NodeKind::ServiceShed(_)))
    }

    /// Successors of `idx`, following a jump to its target.
    pub fn successors(&self, idx: usize) -> Vec<usize> {
        match self.nodes[idx].kind {
            NodeKind::Jump { target } => vec![target],
            _ => self.out[idx].iter().map(|e| e.to).collect(),
        }
    }
}

/// Lorry attribute mix drawn at the source.
#[derive(Debug, Clone)]
pub struct LorryMix {
    pub clandestine_probability: f64,
    pub soft_fraction: f64,
    pub commodities: Vec<String>,
    pub commodity_weights: Vec<f64>,
    commodity_cdf: Vec<f64>,
}

impl LorryMix {
    pub fn sample_side(&self, rng: &mut RandomStream) -> Side {
        if rng.chance(self.soft_fraction) {
            Side::Soft
        } else {
            Side::Hard
        }
    }

    pub fn sample_commodity(&self, rng: &mut RandomStream) -> usize {
        if self.commodity_cdf.len() == 1 {
            return 0;
        }
        let u = rng.uniform();
        self.commodity_cdf
            .iter()
            .position(|&c| u < c)
            .unwrap_or(self.commodity_cdf.len() - 1)
    }
}

#[derive(Debug, Clone)]
pub struct CompiledBerth {
    pub mode: BerthMode,
    pub dwell: Dist,
    pub squads: Vec<CompiledSquad>,
}

/// A validated, runnable scenario.
#[derive(Debug, Clone)]
pub struct Model {
    pub scenario: Scenario,
    pub hash: String,
    pub graph: ProcessGraph,
    pub arrivals: ArrivalProcess,
    pub mix: LorryMix,
    pub drm: Drm,
    pub load_modifier: LoadModifier,
    pub berth: Option<CompiledBerth>,
    pub run: RunSettings,
    source_cdf: Vec<(usize, f64)>,
}

impl Model {
    pub fn compile(scenario: Scenario) -> Result<Self, ScenarioError> {
        let mut v = Vec::new();

        let mut index_of = HashMap::new();
        for (i, n) in scenario.nodes.iter().enumerate() {
            if index_of.insert(n.id, i).is_some() {
                v.push(Violation::at(n.id, "duplicate node id"));
            }
        }

        let mut jump_targets: HashMap<&str, usize> = HashMap::new();
        let mut seen_labels = BTreeSet::new();
        for j in &scenario.jumps {
            if !seen_labels.insert(j.label.as_str()) {
                v.push(Violation::global(format!(
                    "jump label `{}` has more than one target",
                    j.label
                )));
                continue;
            }
            match index_of.get(&j.target) {
                Some(&t) => {
                    if matches!(
                        scenario.nodes[t].kind,
                        NodeKindSpec::Source { .. } | NodeKindSpec::Jump { .. }
                    ) {
                        v.push(Violation::at(
                            j.target,
                            format!("jump label `{}` targets a Source or Jump node", j.label),
                        ));
                    }
                    jump_targets.insert(j.label.as_str(), t);
                }
                None => v.push(Violation::global(format!(
                    "jump label `{}` targets unknown node {}",
                    j.label, j.target
                ))),
            }
        }

        let arrivals = validate_arrivals(&scenario.arrivals, &mut v);
        let commodities: Vec<String> = scenario.arrivals.commodity_mix.keys().cloned().collect();

        let drm = match Drm::new(scenario.drm.default, scenario.drm.entries.clone()) {
            Ok(d) => Some(d),
            Err(errs) => {
                v.extend(errs.into_iter().map(|e| Violation::global(e.to_string())));
                None
            }
        };
        let load_modifier = scenario.drm.load_modifier.unwrap_or_default();
        if !load_modifier.is_valid() {
            v.push(Violation::global(format!(
                "load modifier requires alpha >= 0 and floor in [0,1], got {load_modifier:?}"
            )));
        }

        let mut nodes = Vec::with_capacity(scenario.nodes.len());
        for n in &scenario.nodes {
            let kind = match &n.kind {
                NodeKindSpec::Source { share } => {
                    if !(share.is_finite() && *share > 0.0) {
                        v.push(Violation::at(n.id, format!("source share {share} must be > 0")));
                    }
                    NodeKind::Source { share: *share }
                }
                NodeKindSpec::ServiceShed(spec) => {
                    validate_shed(n.id, spec, &mut v);
                    let screening = match (&spec.sensor, &drm) {
                        (Some(sensor), Some(drm)) if !sensor.is_empty() => Some(StationScreening::resolve(
                            drm,
                            sensor,
                            spec.scenario.as_deref(),
                            &commodities,
                        )),
                        _ => None,
                    };
                    NodeKind::ServiceShed(Shed {
                        servers: spec.servers.max(1) as usize,
                        capacity: spec.queue_capacity.map(|c| c as usize),
                        exit_buffers: spec.exit_buffers.max(1) as usize,
                        service: if spec.service_time.problems().is_none() {
                            spec.service_time.sampler()
                        } else {
                            Dist::Constant(0.0)
                        },
                        applies_to: spec.applies_to,
                        full_policy: spec.full_policy,
                        screening,
                    })
                }
                NodeKindSpec::ProbRouter => NodeKind::ProbRouter,
                NodeKindSpec::ShortestQueueRouter => NodeKind::ShortestQueueRouter,
                NodeKindSpec::Jump { target } => match jump_targets.get(target.as_str()) {
                    Some(&t) => NodeKind::Jump { target: t },
                    None => {
                        v.push(Violation::at(n.id, format!("jump label `{target}` has no target")));
                        NodeKind::Jump { target: usize::MAX }
                    }
                },
                NodeKindSpec::Berth => NodeKind::Berth,
                NodeKindSpec::Sink => NodeKind::Sink,
            };
            nodes.push(Node {
                id: n.id,
                name: n.name.clone(),
                kind,
            });
        }

        let mut out: Vec<Vec<Edge>> = vec![Vec::new(); nodes.len()];
        for e in &scenario.edges {
            let (from, to) = match (index_of.get(&e.from), index_of.get(&e.to)) {
                (Some(&f), Some(&t)) => (f, t),
                _ => {
                    v.push(Violation::global(format!(
                        "edge {} -> {} references an unknown node",
                        e.from, e.to
                    )));
                    continue;
                }
            };
            let p = e.probability.unwrap_or(1.0);
            if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
                v.push(Violation::at(
                    e.from,
                    format!("edge to {} has probability {p} outside [0,1]", e.to),
                ));
            }
            match nodes[from].kind {
                NodeKind::Sink => v.push(Violation::at(e.from, "Sink nodes cannot have outgoing edges")),
                NodeKind::Jump { .. } => v.push(Violation::at(e.from, "Jump nodes cannot have outgoing edges")),
                _ => {}
            }
            if matches!(nodes[to].kind, NodeKind::Source { .. }) {
                v.push(Violation::at(e.to, "Source nodes cannot have inbound edges"));
            }
            out[from].push(Edge {
                to,
                probability: p,
                side: e.side,
                flag: e.flag,
            });
        }

        for (i, node) in nodes.iter().enumerate() {
            validate_out_edges(node, &out[i], &nodes, &mut v);
        }

        let entries: Vec<usize> = (0..nodes.len())
            .filter(|&i| matches!(nodes[i].kind, NodeKind::Source { .. }))
            .collect();
        let exits: Vec<usize> = (0..nodes.len())
            .filter(|&i| matches!(nodes[i].kind, NodeKind::Sink))
            .collect();
        let berths: Vec<usize> = (0..nodes.len())
            .filter(|&i| matches!(nodes[i].kind, NodeKind::Berth))
            .collect();
        if entries.is_empty() {
            v.push(Violation::global("no Source node"));
        }
        if exits.is_empty() {
            v.push(Violation::global("no Sink node"));
        }
        if berths.len() > 1 {
            for &b in &berths[1..] {
                v.push(Violation::at(nodes[b].id, "at most one Berth node is supported"));
            }
        }

        let berth = match (&scenario.berth, berths.first()) {
            (None, Some(&b)) => {
                v.push(Violation::at(nodes[b].id, "Berth node present but no `berth` section"));
                None
            }
            (Some(spec), _) => validate_berth(spec, drm.as_ref(), &commodities, &mut v),
            (None, None) => None,
        };

        let graph_ok = v.is_empty();
        let graph = ProcessGraph {
            nodes,
            out,
            entries,
            exits,
            berth: berths.first().copied(),
            index_of,
        };
        if graph_ok {
            validate_structure(&graph, &mut v);
        }

        validate_run(&scenario.run, &mut v);

        if !v.is_empty() {
            return Err(ScenarioError::Invalid(v));
        }

        let total_share: f64 = graph
            .entries
            .iter()
            .map(|&i| match graph.nodes[i].kind {
                NodeKind::Source { share } => share,
                _ => 0.0,
            })
            .sum();
        let mut acc = 0.0;
        let source_cdf = graph
            .entries
            .iter()
            .map(|&i| {
                if let NodeKind::Source { share } = graph.nodes[i].kind {
                    acc += share / total_share;
                }
                (i, acc)
            })
            .collect();

        let weights: Vec<f64> = scenario.arrivals.commodity_mix.values().copied().collect();
        let mut acc = 0.0;
        let commodity_cdf = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        let mix = LorryMix {
            clandestine_probability: scenario.arrivals.clandestine_probability,
            soft_fraction: scenario.arrivals.soft_fraction,
            commodities,
            commodity_weights: weights,
            commodity_cdf,
        };

        Ok(Self {
            hash: scenario.hash(),
            run: scenario.run.clone(),
            arrivals: arrivals.expect("validated arrivals"),
            drm: drm.expect("validated drm"),
            scenario,
            graph,
            mix,
            load_modifier,
            berth,
            source_cdf,
        })
    }

    /// Picks the source node for a new arrival.
    pub fn sample_source(&self, rng: &mut RandomStream) -> usize {
        if self.source_cdf.len() == 1 {
            return self.source_cdf[0].0;
        }
        let u = rng.uniform();
        self.source_cdf
            .iter()
            .find(|&&(_, c)| u < c)
            .unwrap_or_else(|| self.source_cdf.last().expect("at least one source"))
            .0
    }

    pub fn source_shares(&self) -> Vec<(usize, f64)> {
        let mut prev = 0.0;
        self.source_cdf
            .iter()
            .map(|&(i, c)| {
                let s = c - prev;
                prev = c;
                (i, s)
            })
            .collect()
    }
}

fn validate_arrivals(spec: &ArrivalSpec, v: &mut Vec<Violation>) -> Option<ArrivalProcess> {
    let before = v.len();
    if !(spec.base_rate.is_finite() && spec.base_rate >= 0.0) {
        v.push(Violation::global(format!(
            "arrivals: base_rate {} must be >= 0",
            spec.base_rate
        )));
    }
    if spec.profile.len() != HOURS_PER_WEEK {
        v.push(Violation::global(format!(
            "arrivals: profile must have {HOURS_PER_WEEK} hourly factors, got {}",
            spec.profile.len()
        )));
    }
    if let Some((h, x)) = spec
        .profile
        .iter()
        .enumerate()
        .find(|(_, x)| !(x.is_finite() && **x >= 0.0))
    {
        v.push(Violation::global(format!(
            "arrivals: profile hour {h} has invalid factor {x}"
        )));
    }
    for (name, p) in [
        ("clandestine_probability", spec.clandestine_probability),
        ("soft_fraction", spec.soft_fraction),
    ] {
        if !(0.0..=1.0).contains(&p) {
            v.push(Violation::global(format!("arrivals: {name} {p} outside [0,1]")));
        }
    }
    if spec.commodity_mix.is_empty() {
        v.push(Violation::global("arrivals: commodity_mix is empty"));
    } else {
        if let Some((c, w)) = spec.commodity_mix.iter().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
            v.push(Violation::global(format!(
                "arrivals: commodity `{c}` has invalid weight {w}"
            )));
        }
        let total: f64 = spec.commodity_mix.values().sum();
        if (total - 1.0).abs() > PROBABILITY_TOLERANCE {
            v.push(Violation::global(format!(
                "arrivals: commodity_mix sums to {total}, expected 1"
            )));
        }
    }
    (v.len() == before).then(|| ArrivalProcess::new(spec))
}

fn validate_shed(id: i64, spec: &ServiceShedSpec, v: &mut Vec<Violation>) {
    if spec.servers == 0 {
        v.push(Violation::at(id, "servers must be >= 1"));
    }
    if spec.exit_buffers == 0 {
        v.push(Violation::at(id, "exit_buffers must be >= 1"));
    }
    if spec.queue_capacity == Some(0) {
        v.push(Violation::at(
            id,
            "queue_capacity must be >= 1 or omitted for unbounded",
        ));
    }
    if let Some(p) = spec.service_time.problems() {
        v.push(Violation::at(id, format!("service_time: {p}")));
    }
    if spec.sensor.as_deref() == Some("") {
        v.push(Violation::at(id, "sensor label is empty"));
    }
}

fn validate_out_edges(node: &Node, edges: &[Edge], nodes: &[Node], v: &mut Vec<Violation>) {
    match node.kind {
        NodeKind::Sink | NodeKind::Jump { .. } => return,
        NodeKind::ShortestQueueRouter => {
            for e in edges {
                if !matches!(nodes[e.to].kind, NodeKind::ServiceShed(_)) {
                    v.push(Violation::at(
                        node.id,
                        format!("shortest-queue candidate {} is not a ServiceShed", nodes[e.to].id),
                    ));
                }
            }
        }
        _ => {}
    }
    if edges.is_empty() {
        v.push(Violation::at(
            node.id,
            format!("{} node has no outgoing edges", node.kind.name()),
        ));
        return;
    }
    let mut uncovered = Vec::new();
    let mut bad_sums: Vec<(String, f64)> = Vec::new();
    for side in Side::ALL {
        for flagged in [false, true] {
            let class = format!("{}/{}", side.containment(), if flagged { "flagged" } else { "clear" });
            let matching: Vec<&Edge> = edges.iter().filter(|e| e.matches(side, flagged)).collect();
            if matching.is_empty() {
                uncovered.push(class);
                continue;
            }
            if !matches!(node.kind, NodeKind::ShortestQueueRouter) {
                let sum: f64 = matching.iter().map(|e| e.probability).sum();
                if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
                    bad_sums.push((class, sum));
                }
            }
        }
    }
    if !uncovered.is_empty() {
        v.push(Violation::at(
            node.id,
            format!("no outgoing edge matches {} lorries", uncovered.join(", ")),
        ));
    }
    if !bad_sums.is_empty() {
        let detail: Vec<String> = bad_sums.iter().map(|(c, s)| format!("{c}: {s}")).collect();
        v.push(Violation::at(
            node.id,
            format!(
                "{} outgoing probabilities do not sum to 1 ({})",
                node.kind.name(),
                detail.join(", ")
            ),
        ));
    }
}

fn validate_berth(
    spec: &BerthSpec,
    drm: Option<&Drm>,
    commodities: &[String],
    v: &mut Vec<Violation>,
) -> Option<CompiledBerth> {
    let before = v.len();
    if let Some(p) = spec.dwell_time.problems() {
        v.push(Violation::global(format!("berth: dwell_time: {p}")));
    }
    for (i, s) in spec.squads.iter().enumerate() {
        if let Some(p) = s.check_interval.problems_strictly_positive() {
            v.push(Violation::global(format!("berth: squad {i} check_interval: {p}")));
        }
        if s.soft_sensor.is_empty() || s.hard_action.is_empty() {
            v.push(Violation::global(format!("berth: squad {i} has an empty sensor label")));
        }
    }
    if v.len() != before {
        return None;
    }
    let drm = drm?;
    Some(CompiledBerth {
        mode: spec.mode,
        dwell: spec.dwell_time.sampler(),
        squads: spec
            .squads
            .iter()
            .map(|s| CompiledSquad {
                interval: s.check_interval.sampler(),
                soft: StationScreening::resolve(drm, &s.soft_sensor, None, commodities),
                hard: StationScreening::resolve(drm, &s.hard_action, None, commodities),
            })
            .collect(),
    })
}

fn validate_structure(g: &ProcessGraph, v: &mut Vec<Violation>) {
    let n = g.nodes.len();

    let mut reached = vec![false; n];
    let mut queue: VecDeque<usize> = g.entries.iter().copied().collect();
    for &e in &g.entries {
        reached[e] = true;
    }
    while let Some(i) = queue.pop_front() {
        for j in g.successors(i) {
            if !reached[j] {
                reached[j] = true;
                queue.push_back(j);
            }
        }
    }
    for (i, r) in reached.iter().enumerate() {
        if !r {
            v.push(Violation::at(g.nodes[i].id, "not reachable from any Source"));
        }
    }

    // reverse reachability from sinks
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in g.successors(i) {
            preds[j].push(i);
        }
    }
    let mut reaches_exit = vec![false; n];
    let mut queue: VecDeque<usize> = g.exits.iter().copied().collect();
    for &x in &g.exits {
        reaches_exit[x] = true;
    }
    while let Some(j) = queue.pop_front() {
        for &i in &preds[j] {
            if !reaches_exit[i] {
                reaches_exit[i] = true;
                queue.push_back(i);
            }
        }
    }
    for &e in &g.entries {
        if !reaches_exit[e] {
            v.push(Violation::at(g.nodes[e].id, "Source cannot reach any Sink"));
        }
    }

    if let Some(cycle) = find_cycle(g, |i| !matches!(g.nodes[i].kind, NodeKind::Berth)) {
        let ids: Vec<String> = cycle.iter().map(|&i| g.nodes[i].id.to_string()).collect();
        v.push(Violation::at(
            g.nodes[cycle[0]].id,
            format!("cycle outside the Berth: {}", ids.join(" -> ")),
        ));
    }
}

/// Finds a directed cycle among nodes accepted by `keep`, if any.
pub(crate) fn find_cycle(g: &ProcessGraph, keep: impl Fn(usize) -> bool) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let n = g.nodes.len();
    let mut mark = vec![Mark::New; n];
    let mut parent = vec![usize::MAX; n];
    for root in 0..n {
        if mark[root] != Mark::New || !keep(root) {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        mark[root] = Mark::Open;
        while let Some(&mut (i, ref mut k)) = stack.last_mut() {
            let succ = g.successors(i);
            if *k < succ.len() {
                let j = succ[*k];
                *k += 1;
                if !keep(j) {
                    continue;
                }
                match mark[j] {
                    Mark::New => {
                        mark[j] = Mark::Open;
                        parent[j] = i;
                        stack.push((j, 0));
                    }
                    Mark::Open => {
                        let mut path = Vec::new();
                        let mut c = i;
                        while c != j {
                            path.push(c);
                            c = parent[c];
                        }
                        path.push(j);
                        path.reverse();
                        path.push(j);
                        return Some(path);
                    }
                    Mark::Done => {}
                }
            } else {
                mark[i] = Mark::Done;
                stack.pop();
            }
        }
    }
    None
}

fn validate_run(run: &RunSettings, v: &mut Vec<Violation>) {
    if !(run.horizon.is_finite() && run.horizon >= 0.0) {
        v.push(Violation::global(format!("run: horizon {} must be >= 0", run.horizon)));
    }
    if !(run.sample_interval.is_finite() && run.sample_interval > 0.0) {
        v.push(Violation::global(format!(
            "run: sample_interval {} must be > 0",
            run.sample_interval
        )));
    }
    if !(run.confidence > 0.0 && run.confidence < 1.0) {
        v.push(Violation::global(format!(
            "run: confidence {} must be in (0,1)",
            run.confidence
        )));
    }
    if run.replications == 0 {
        v.push(Violation::global("run: replications must be >= 1"));
    }
}

impl Model {
    pub fn calais_default() -> Self {
        Scenario::calais_default()
            .validate()
            .expect("shipped scenario validates")
    }

    pub fn berth_mode(&self) -> Option<BerthMode> {
        self.berth.as_ref().map(|b| b.mode)
    }
}

/// Shorthand used by tests and examples to build a shed spec.
pub fn shed_spec(sensor: Option<&str>, servers: u32, service_time: DistributionSpec) -> ServiceShedSpec {
    ServiceShedSpec {
        sensor: sensor.map(str::to_string),
        queue_capacity: None,
        servers,
        service_time,
        exit_buffers: 2,
        applies_to: SideFilter::Both,
        full_policy: FullPolicy::Block,
        scenario: None,
    }
}

#[cfg(test)]
mod tests;
