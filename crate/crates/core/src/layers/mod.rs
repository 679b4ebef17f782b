//! Message-passing layers, task heads, losses and metrics.
//!
//! Every layer aggregates over a node's neighborhood and then combines the
//! result with the node itself:
//!
//! | layer | message from `u` | aggregation | combine with `v` |
//! |---|---|---|---|
//! | GCN | `W h_u` | mean over `{v} ∪ N(v)` | norm, activation, residual |
//! | GAT | `alpha_uv W h_u` | sum over `{v} ∪ N(v)`, softmax weights | heads, projection, norm, activation, residual |
//! | GatedGCN | `gate_uv * U h_u` | sum over `N(v)` | `W h_v +` aggregate, norm, ReLU, residual |
//!
//! Aggregations are sums or means, so reordering a neighborhood changes
//! nothing beyond floating point rounding.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::Result;

mod context;
mod gat;
mod gated;
mod gcn;
mod head;
mod loss;
mod slot;

pub use context::{EdgeContext, MessageContext};
pub use gat::{gat_attention, gat_heads, gat_layer, GatHead, GatLayer};
pub use gated::{edge_gates, gatedgcn_layer, GatedLayer, GATE_EPSILON};
pub use gcn::{gcn_layer, GcnLayer};
pub use head::{readout, readout_input, Mlp, TaskKind};
pub use loss::{
    accuracy, argmax_rows, balanced_accuracy, bce_with_logits, cross_entropy, f1_score,
    loss_and_metrics, mae_loss, mean_absolute_error, task_loss, Metrics, MetricsAccumulator,
    Targets,
};
pub use slot::{Linear, NormKind, NormSlot};

/// Nonlinearity applied after a layer's norm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Result<Var> {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Identity => Ok(x),
        }
    }
}
