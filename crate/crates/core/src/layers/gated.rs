use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EdgeContext, MessageContext, NormKind, NormSlot};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::norm::{NormMode, RunningStats};
use crate::params::{ParamId, ParamStore};

/// Default constant in the gate denominator.
pub const GATE_EPSILON: f64 = 1e-6;

/// Edge-gated convolution with residual node and edge streams.
///
/// For an edge row from `u` into `v`:
/// `e' = e + relu(norm_e(A h_v + B h_u + C e))`, gates
/// `sigmoid(e') / (sum over v's edges of sigmoid(e') + eps)` and
/// `h'_v = h_v + relu(norm(W h_v + sum gate * U h_u))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatedLayer<T> {
    pub w: T,
    pub u: T,
    pub a: T,
    pub b: T,
    pub c: T,
    pub norm: NormSlot<T>,
    pub edge_norm: NormSlot<T>,
    pub gate_epsilon: f64,
}

impl<T> GatedLayer<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> GatedLayer<U> {
        GatedLayer {
            w: f(&self.w),
            u: f(&self.u),
            a: f(&self.a),
            b: f(&self.b),
            c: f(&self.c),
            norm: self.norm.map(&mut f),
            edge_norm: self.edge_norm.map(f),
            gate_epsilon: self.gate_epsilon,
        }
    }
}

impl GatedLayer<ParamId> {
    /// The edge stream gets its own parameters of the same norm kind.
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        norm: NormKind,
        rng: &mut R,
    ) -> Self {
        let mut m = |name: &str| store.add_glorot(format!("{prefix}.{name}"), dim, dim, rng);
        let (w, u, a, b, c) = (m("w"), m("u"), m("a"), m("b"), m("c"));
        GatedLayer {
            w,
            u,
            a,
            b,
            c,
            norm: NormSlot::init(store, &format!("{prefix}.norm"), norm, dim),
            edge_norm: NormSlot::init(store, &format!("{prefix}.edge_norm"), norm, dim),
            gate_epsilon: GATE_EPSILON,
        }
    }
}

/// Gates from edge features: `sigmoid(e)` divided by the per-receiver sum
/// plus `epsilon`.
pub fn edge_gates(tape: &mut Tape, e: Var, edges: &EdgeContext, epsilon: f64) -> Result<Var> {
    if epsilon <= 0.0 {
        return Err(Error::Config("gate epsilon must be positive".into()));
    }
    let s = tape.sigmoid(e)?;
    let total = tape.segment_sum(s, &edges.by_dst)?;
    let total = tape.add_scalar(total, epsilon)?;
    let total = tape.gather_rows(total, &edges.dst)?;
    tape.div(s, total)
}

/// Returns the updated node and edge features.
#[allow(clippy::too_many_arguments)]
pub fn gatedgcn_layer(
    tape: &mut Tape,
    h: Var,
    e: Var,
    ctx: &MessageContext,
    layer: &GatedLayer<Var>,
    mode: NormMode,
    running: &mut RunningStats,
    edge_running: &mut RunningStats,
) -> Result<(Var, Var)> {
    let edges = ctx.edges()?;
    let (n, d) = tape.shape(h);
    let (m, de) = tape.shape(e);
    if de != d || m != edges.num_edges() || n != ctx.num_nodes() {
        return Err(Error::shape(
            "gatedgcn_layer",
            format!(
                "h {n}x{d}, e {m}x{de}, context {} nodes {} edges",
                ctx.num_nodes(),
                edges.num_edges()
            ),
        ));
    }

    let ah = tape.matmul(h, layer.a)?;
    let ah = tape.gather_rows(ah, &edges.dst)?;
    let bh = tape.matmul(h, layer.b)?;
    let bh = tape.gather_rows(bh, &edges.src)?;
    let ce = tape.matmul(e, layer.c)?;
    let pre = tape.add(ah, bh)?;
    let pre = tape.add(pre, ce)?;
    let pre = layer
        .edge_norm
        .apply(tape, pre, &edges.scopes, mode, edge_running)?;
    let pre = tape.relu(pre)?;
    let e_out = tape.add(e, pre)?;

    let gates = edge_gates(tape, e_out, edges, layer.gate_epsilon)?;
    let uh = tape.matmul(h, layer.u)?;
    let uh = tape.gather_rows(uh, &edges.src)?;
    let messages = tape.mul(gates, uh)?;
    let agg = tape.segment_sum(messages, &edges.by_dst)?;
    let wh = tape.matmul(h, layer.w)?;
    let pre = tape.add(wh, agg)?;
    let pre = layer.norm.apply(tape, pre, &ctx.nodes, mode, running)?;
    let pre = tape.relu(pre)?;
    let h_out = tape.add(h, pre)?;
    Ok((h_out, e_out))
}
