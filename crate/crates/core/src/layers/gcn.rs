use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, MessageContext, NormKind, NormSlot};
use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::norm::{NormMode, RunningStats};
use crate::params::{ParamId, ParamStore};

/// Mean aggregation over the self-inclusive neighborhood.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnLayer<T> {
    pub weight: T,
    pub norm: NormSlot<T>,
}

impl<T> GcnLayer<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> GcnLayer<U> {
        GcnLayer {
            weight: f(&self.weight),
            norm: self.norm.map(f),
        }
    }
}

impl GcnLayer<ParamId> {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        norm: NormKind,
        rng: &mut R,
    ) -> Self {
        GcnLayer {
            weight: store.add_glorot(format!("{prefix}.weight"), dim, dim, rng),
            norm: NormSlot::init(store, &format!("{prefix}.norm"), norm, dim),
        }
    }
}

/// Neighborhood mean of `h W`, then norm, activation and optional residual.
#[allow(clippy::too_many_arguments)]
pub fn gcn_layer(
    tape: &mut Tape,
    h: Var,
    ctx: &MessageContext,
    layer: &GcnLayer<Var>,
    activation: Activation,
    residual: bool,
    mode: NormMode,
    running: &mut RunningStats,
) -> Result<Var> {
    let z = tape.matmul(h, layer.weight)?;
    let messages = tape.gather_rows(z, ctx.nodes.neighbors.member())?;
    let agg = tape.segment_mean(messages, ctx.nodes.neighbors.owner())?;
    let normed = layer.norm.apply(tape, agg, &ctx.nodes, mode, running)?;
    let out = activation.apply(tape, normed)?;
    add_residual(tape, h, out, residual)
}

pub(crate) fn add_residual(tape: &mut Tape, h: Var, out: Var, residual: bool) -> Result<Var> {
    if residual && tape.shape(h) == tape.shape(out) {
        tape.add(h, out)
    } else {
        Ok(out)
    }
}
