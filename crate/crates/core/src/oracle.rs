//! Exact detection probability on acyclic screening networks.
//!
//! Two independent evaluations are provided. [`analytic_detection`] walks
//! every root-to-sink path a clandestine lorry can take before it is caught
//! and sums `P(path) * (1 - prod(1 - tp))`. Because any screening that misses
//! clears the flag, such a lorry only ever follows edges open to clear
//! lorries. [`outcome_tree_detection`] instead expands every screening
//! outcome, including flagged diversions after a catch and false positives,
//! and adds up the probability of the leaves on which a catch happened.
//!
//! A scenario is reduced to one net per (side, commodity) class with
//! [`reduce`]. Shortest-queue routers become uniform splits over their
//! candidates, the Berth becomes a pass-through node, and sheds without a
//! sensor (or not applying to the class's side) become non-screening nodes.

use std::fmt;

use thiserror::Error;

use crate::des::Side;
use crate::network::{FlagFilter, Model, NodeKind};
use crate::screening::DetectionProfile;

pub const DEFAULT_PATH_CAP: usize = 1_000_000;
const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("network is cyclic: {}", .0.join(" -> "))]
    Cyclic(Vec<String>),
    #[error("more than {0} paths to enumerate")]
    PathCapExceeded(usize),
    #[error("invalid network: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticEdge {
    pub to: usize,
    pub probability: f64,
    pub flag: FlagFilter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticNode {
    pub label: String,
    /// `None` for nodes that do not screen.
    pub screening: Option<DetectionProfile>,
    /// Empty for sinks.
    pub edges: Vec<AnalyticEdge>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AnalyticNet {
    pub nodes: Vec<AnalyticNode>,
    pub root: usize,
}

impl AnalyticNet {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, label: &str, screening: Option<DetectionProfile>) -> usize {
        self.nodes.push(AnalyticNode {
            label: label.to_string(),
            screening,
            edges: Vec::new(),
        });
        self.nodes.len() - 1
    }

    /// A screening stage with the given sensitivity and no false positives.
    pub fn stage(&mut self, label: &str, tp: f64) -> usize {
        self.push(label, Some(DetectionProfile::new(tp, 0.0)))
    }

    pub fn stage_with_fp(&mut self, label: &str, tp: f64, fp: f64) -> usize {
        self.push(label, Some(DetectionProfile::new(tp, fp)))
    }

    /// A node that routes without screening (router, passport booth, sink).
    pub fn split(&mut self, label: &str) -> usize {
        self.push(label, None)
    }

    pub fn sink(&mut self, label: &str) -> usize {
        self.push(label, None)
    }

    pub fn edge(&mut self, from: usize, to: usize, probability: f64) {
        self.flag_edge(from, to, probability, FlagFilter::Any);
    }

    pub fn flag_edge(&mut self, from: usize, to: usize, probability: f64, flag: FlagFilter) {
        self.nodes[from].edges.push(AnalyticEdge { to, probability, flag });
    }

    pub fn set_root(&mut self, root: usize) {
        self.root = root;
    }

    /// Copy with every stage's tp replaced by `p`.
    pub fn with_common_tp(&self, p: f64) -> Self {
        let mut net = self.clone();
        for n in &mut net.nodes {
            if let Some(s) = &mut n.screening {
                s.tp = p;
            }
        }
        net
    }

    /// Checks acyclicity and that every non-sink node routes both clear and
    /// flagged lorries with probabilities summing to 1.
    pub fn validate(&self) -> Result<(), OracleError> {
        if self.root >= self.nodes.len() {
            return Err(OracleError::Invalid("root index out of range".into()));
        }
        for n in &self.nodes {
            if let Some(s) = n.screening {
                if !s.is_valid() {
                    return Err(OracleError::Invalid(format!("{}: rates outside [0,1]", n.label)));
                }
            }
            if n.edges.is_empty() {
                continue;
            }
            for e in &n.edges {
                if e.to >= self.nodes.len() {
                    return Err(OracleError::Invalid(format!("{}: edge to unknown node", n.label)));
                }
            }
            for flagged in [false, true] {
                let sum: f64 = n
                    .edges
                    .iter()
                    .filter(|e| e.flag.matches(flagged))
                    .map(|e| e.probability)
                    .sum();
                if (sum - 1.0).abs() > TOLERANCE {
                    let class = if flagged { "flagged" } else { "clear" };
                    return Err(OracleError::Invalid(format!(
                        "{}: {class} branch probabilities sum to {sum}",
                        n.label
                    )));
                }
            }
        }
        if let Some(cycle) = self.find_cycle() {
            return Err(OracleError::Cyclic(
                cycle.into_iter().map(|i| self.nodes[i].label.clone()).collect(),
            ));
        }
        Ok(())
    }

    fn find_cycle(&self) -> Option<Vec<usize>> {
        // iterative three-colour DFS
        let n = self.nodes.len();
        let mut mark = vec![0u8; n];
        let mut parent = vec![usize::MAX; n];
        for root in 0..n {
            if mark[root] != 0 {
                continue;
            }
            mark[root] = 1;
            let mut stack = vec![(root, 0usize)];
            while let Some(top) = stack.last_mut() {
                let (i, k) = *top;
                if k < self.nodes[i].edges.len() {
                    top.1 += 1;
                    let j = self.nodes[i].edges[k].to;
                    match mark[j] {
                        0 => {
                            mark[j] = 1;
                            parent[j] = i;
                            stack.push((j, 0));
                        }
                        1 => {
                            let mut path = vec![i];
                            let mut c = i;
                            while c != j {
                                c = parent[c];
                                path.push(c);
                            }
                            path.reverse();
                            path.push(j);
                            return Some(path);
                        }
                        _ => {}
                    }
                } else {
                    mark[i] = 2;
                    stack.pop();
                }
            }
        }
        None
    }

    /// Fewest screening stages on any path a clear lorry can take.
    pub fn min_stages_per_path(&self) -> Result<usize, OracleError> {
        self.validate()?;
        let mut memo = vec![None; self.nodes.len()];
        Ok(self.min_stages(self.root, &mut memo))
    }

    fn min_stages(&self, i: usize, memo: &mut Vec<Option<usize>>) -> usize {
        if let Some(m) = memo[i] {
            return m;
        }
        let node = &self.nodes[i];
        let here = usize::from(node.screening.is_some());
        let below = node
            .edges
            .iter()
            .filter(|e| e.flag.matches(false) && e.probability > 0.0)
            .map(|e| self.min_stages(e.to, memo))
            .min()
            .unwrap_or(0);
        memo[i] = Some(here + below);
        here + below
    }
}

impl fmt::Display for AnalyticNet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, n) in self.nodes.iter().enumerate() {
            write!(f, "{i} {}", n.label)?;
            if let Some(s) = n.screening {
                write!(f, " [tp={} fp={}]", s.tp, s.fp)?;
            }
            let edges: Vec<String> = n.edges.iter().map(|e| format!("{}:{}", e.to, e.probability)).collect();
            writeln!(f, " -> {}", edges.join(", "))?;
        }
        Ok(())
    }
}

/// P(detect | clandestine aboard) by summing over clear-lorry paths.
pub fn analytic_detection(net: &AnalyticNet) -> Result<f64, OracleError> {
    analytic_detection_capped(net, DEFAULT_PATH_CAP)
}

pub fn analytic_detection_capped(net: &AnalyticNet, cap: usize) -> Result<f64, OracleError> {
    net.validate()?;
    let mut paths = 0usize;
    let mut total = 0.0;
    // (node, path probability, probability every stage so far missed)
    let mut stack = vec![(net.root, 1.0, 1.0)];
    while let Some((i, p, miss)) = stack.pop() {
        let node = &net.nodes[i];
        let miss = match node.screening {
            Some(s) => miss * (1.0 - s.tp),
            None => miss,
        };
        let clear: Vec<&AnalyticEdge> = node.edges.iter().filter(|e| e.flag.matches(false)).collect();
        if clear.is_empty() {
            paths += 1;
            if paths > cap {
                return Err(OracleError::PathCapExceeded(cap));
            }
            total += p * (1.0 - miss);
            continue;
        }
        for e in clear {
            if e.probability > 0.0 {
                stack.push((e.to, p * e.probability, miss));
            }
        }
    }
    Ok(total)
}

/// Result of full outcome-tree enumeration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeTree {
    pub detected: f64,
    /// Probability summed over every leaf; 1 up to rounding.
    pub total: f64,
    pub leaves: usize,
}

/// Expands every screening outcome of a clandestine lorry, including what
/// happens after it is caught.
pub fn outcome_tree(net: &AnalyticNet, cap: usize) -> Result<OutcomeTree, OracleError> {
    net.validate()?;
    let mut out = OutcomeTree {
        detected: 0.0,
        total: 0.0,
        leaves: 0,
    };
    // (node, probability, clandestine aboard, flagged, caught)
    let mut stack = vec![(net.root, 1.0, true, false, false)];
    while let Some((i, p, aboard, flagged, caught)) = stack.pop() {
        let node = &net.nodes[i];
        let branches: Vec<(f64, bool, bool, bool)> = match node.screening {
            Some(s) if aboard => vec![(s.tp, false, true, true), (1.0 - s.tp, true, false, caught)],
            Some(s) => vec![(s.fp, false, true, caught), (1.0 - s.fp, false, false, caught)],
            None => vec![(1.0, aboard, flagged, caught)],
        };
        for (q, aboard, flagged, caught) in branches {
            if q <= 0.0 {
                continue;
            }
            let p = p * q;
            let next: Vec<&AnalyticEdge> = node.edges.iter().filter(|e| e.flag.matches(flagged)).collect();
            if next.is_empty() {
                out.leaves += 1;
                if out.leaves > cap {
                    return Err(OracleError::PathCapExceeded(cap));
                }
                out.total += p;
                if caught {
                    out.detected += p;
                }
                continue;
            }
            for e in next {
                if e.probability > 0.0 {
                    // the outcome has been drawn; the child re-screens only its own stage
                    stack.push((e.to, p * e.probability, aboard, flagged, caught));
                }
            }
        }
    }
    Ok(out)
}

/// P(detect) by outcome-tree enumeration.
pub fn outcome_tree_detection(net: &AnalyticNet) -> Result<f64, OracleError> {
    outcome_tree(net, DEFAULT_PATH_CAP).map(|t| t.detected)
}

/// Shape of a detection curve over a grid of common tp values.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcavityVerdict {
    pub p: Vec<f64>,
    pub d: Vec<f64>,
    pub monotone: bool,
    pub concave: bool,
    /// `Some` when every path has at least two stages: whether D(p) >= p at
    /// every grid point.
    pub above_diagonal: Option<bool>,
}

impl ConcavityVerdict {
    fn from_curve(p: Vec<f64>, d: Vec<f64>, min_stages: usize) -> Self {
        const EPS: f64 = 1e-12;
        let diffs: Vec<f64> = d.windows(2).map(|w| w[1] - w[0]).collect();
        let monotone = diffs.iter().all(|&x| x >= -EPS);
        // forward differences per unit step, so uneven grids compare fairly
        let slopes: Vec<f64> = diffs
            .iter()
            .zip(p.windows(2))
            .map(|(dd, w)| dd / (w[1] - w[0]))
            .collect();
        let concave = slopes.windows(2).all(|w| w[1] <= w[0] + EPS);
        let above_diagonal = (min_stages >= 2).then(|| p.iter().zip(&d).all(|(p, d)| *d >= *p - EPS));
        Self {
            p,
            d,
            monotone,
            concave,
            above_diagonal,
        }
    }
}

/// Evaluates D(p) with every tp set to `p` for each grid value.
pub fn concavity_check(net: &AnalyticNet, p_values: &[f64]) -> Result<ConcavityVerdict, OracleError> {
    let d = p_values
        .iter()
        .map(|&p| analytic_detection(&net.with_common_tp(p)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ConcavityVerdict::from_curve(
        p_values.to_vec(),
        d,
        net.min_stages_per_path()?,
    ))
}

/// One lorry class of a reduced scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassNet {
    pub side: Side,
    pub commodity: String,
    /// Share of clandestine lorries in this class.
    pub weight: f64,
    pub net: AnalyticNet,
}

/// A scenario reduced to analytic nets, one per (side, commodity) class.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    pub classes: Vec<ClassNet>,
}

impl ReducedModel {
    pub fn detection(&self) -> Result<f64, OracleError> {
        let mut d = 0.0;
        for c in &self.classes {
            if c.weight > 0.0 {
                d += c.weight * analytic_detection(&c.net)?;
            }
        }
        Ok(d)
    }

    pub fn outcome_tree_detection(&self) -> Result<f64, OracleError> {
        let mut d = 0.0;
        for c in &self.classes {
            if c.weight > 0.0 {
                d += c.weight * outcome_tree_detection(&c.net)?;
            }
        }
        Ok(d)
    }

    pub fn with_common_tp(&self, p: f64) -> Self {
        Self {
            classes: self
                .classes
                .iter()
                .map(|c| ClassNet {
                    net: c.net.with_common_tp(p),
                    ..c.clone()
                })
                .collect(),
        }
    }

    pub fn min_stages_per_path(&self) -> Result<usize, OracleError> {
        let mut m = usize::MAX;
        for c in self.classes.iter().filter(|c| c.weight > 0.0) {
            m = m.min(c.net.min_stages_per_path()?);
        }
        Ok(if m == usize::MAX { 0 } else { m })
    }

    pub fn concavity_check(&self, p_values: &[f64]) -> Result<ConcavityVerdict, OracleError> {
        let d = p_values
            .iter()
            .map(|&p| self.with_common_tp(p).detection())
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ConcavityVerdict::from_curve(
            p_values.to_vec(),
            d,
            self.min_stages_per_path()?,
        ))
    }
}

/// Builds the analytic reduction of `model`. Load modifiers are ignored.
pub fn reduce(model: &Model) -> Result<ReducedModel, OracleError> {
    let g = &model.graph;
    if let Some(cycle) = crate::network::find_cycle(g, |_| true) {
        return Err(OracleError::Cyclic(
            cycle.into_iter().map(|i| g.nodes[i].label()).collect(),
        ));
    }
    let mut classes = Vec::new();
    for side in Side::ALL {
        let side_weight = match side {
            Side::Soft => model.mix.soft_fraction,
            Side::Hard => 1.0 - model.mix.soft_fraction,
        };
        for (c, name) in model.mix.commodities.iter().enumerate() {
            let weight = side_weight * model.mix.commodity_weights[c];
            classes.push(ClassNet {
                side,
                commodity: name.clone(),
                weight,
                net: class_net(model, side, c),
            });
        }
    }
    Ok(ReducedModel { classes })
}

fn class_net(model: &Model, side: Side, commodity: usize) -> AnalyticNet {
    let g = &model.graph;
    let mut net = AnalyticNet::new();
    for node in &g.nodes {
        let screening = match &node.kind {
            NodeKind::ServiceShed(shed) if shed.applies_to.matches(side) => {
                shed.screening.as_ref().map(|s| s.profile(side, commodity))
            }
            _ => None,
        };
        net.push(&node.label(), screening);
    }
    for (i, node) in g.nodes.iter().enumerate() {
        let matching = g.out[i].iter().filter(|e| e.side.matches(side));
        match node.kind {
            NodeKind::Jump { target } => net.edge(i, target, 1.0),
            NodeKind::ShortestQueueRouter => {
                for flagged in [false, true] {
                    let cands: Vec<usize> = g.out[i]
                        .iter()
                        .filter(|e| e.matches(side, flagged))
                        .map(|e| e.to)
                        .collect();
                    let class = if flagged {
                        FlagFilter::Flagged
                    } else {
                        FlagFilter::Clear
                    };
                    for &to in &cands {
                        net.flag_edge(i, to, 1.0 / cands.len() as f64, class);
                    }
                }
            }
            _ => {
                for e in matching {
                    net.flag_edge(i, e.to, e.probability, e.flag);
                }
            }
        }
    }
    let root = net.split("entry");
    for (src, share) in model.source_shares() {
        net.edge(root, src, share);
    }
    net.set_root(root);
    net
}
