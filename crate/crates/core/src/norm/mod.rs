//! Node-, adjacency-, graph- and batch-scope normalization and their
//! learnable unified combination.

mod gn;
mod ops;
mod running;
mod scope;

pub use gn::{
    constrain_lambda, constrain_lambda_vars, single_norm_forward, unified_gn_forward, ActiveSet,
    GnParams, GnVars,
};
pub use ops::{
    adjacency_wise_normalize, batch_wise_normalize, edge_normalize, graph_wise_normalize,
    node_wise_normalize, normalize, NormMode, NormStats, Normalized, NORM_EPSILON,
};
pub use running::{RunningStats, DEFAULT_MOMENTUM};
pub use scope::{NeighborScope, Scope, ScopeContext};

#[cfg(test)]
mod tests;
