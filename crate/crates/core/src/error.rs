use thiserror::Error;

use crate::des::{KernelError, Side};

/// Errors raised while a model is running. Any of these indicates a bug in
/// the model definition or the engine, not a recoverable condition.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("node {node}: no outgoing edge matches a {side:?}-sided {} lorry", if *.flagged { "flagged" } else { "clear" })]
    NoMatchingEdge { node: i64, side: Side, flagged: bool },
    #[error("lorry {0} is already parked at the Berth")]
    AlreadyParked(u64),
    #[error("lorry {0} is not parked at the Berth")]
    NotParked(u64),
    #[error("lorry reached a Berth node but the scenario has no berth section")]
    NoBerth,
}
