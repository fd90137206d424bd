use crate::des::{Lorry, RandomStream};
use crate::error::ModelError;

use super::Edge;

/// Chooses an outgoing edge of a probabilistic node for `lorry`, restricted to
/// the edges whose side and flag filters match it. Returns the target index.
///
/// A lone matching edge is taken without consuming a random draw.
pub fn route_probabilistic(
    node_id: i64,
    edges: &[Edge],
    lorry: &Lorry,
    rng: &mut RandomStream,
) -> Result<usize, ModelError> {
    let mut matching = edges.iter().filter(|e| e.matches(lorry.side, lorry.flagged));
    let first = matching.next().ok_or(ModelError::NoMatchingEdge {
        node: node_id,
        side: lorry.side,
        flagged: lorry.flagged,
    })?;
    let Some(second) = matching.next() else {
        return Ok(first.to);
    };
    let u = rng.uniform();
    let mut acc = 0.0;
    let mut last = first.to;
    for e in [first, second].into_iter().chain(matching) {
        acc += e.probability;
        last = e.to;
        if u < acc {
            return Ok(e.to);
        }
    }
    // rounding: probabilities sum to 1 only within tolerance
    Ok(last)
}

/// Index into `loads` of the smallest load; ties go to the lowest index.
/// `loads` must be non-empty.
pub fn route_shortest_queue(loads: &[usize]) -> usize {
    let mut best = 0;
    for (i, &l) in loads.iter().enumerate().skip(1) {
        if l < loads[best] {
            best = i;
        }
    }
    best
}
