use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gcn::add_residual;
use super::{Activation, MessageContext, NormKind, NormSlot};
use crate::autodiff::{Tape, Var, DEFAULT_LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::norm::{NormMode, RunningStats};
use crate::params::{ParamId, ParamStore};

/// One attention head: a `d x d` transform and a `2d x 1` score vector
/// applied to `[W h_u || W h_v]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatHead<T> {
    pub weight: T,
    pub attention: T,
}

impl<T> GatHead<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> GatHead<U> {
        GatHead {
            weight: f(&self.weight),
            attention: f(&self.attention),
        }
    }
}

/// Attention aggregation with one or more heads. With several heads the
/// concatenated outputs are projected back to `d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatLayer<T> {
    pub heads: Vec<GatHead<T>>,
    pub projection: Option<T>,
    pub norm: NormSlot<T>,
    pub leaky_slope: f64,
}

impl<T> GatLayer<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> GatLayer<U> {
        GatLayer {
            heads: self.heads.iter().map(|h| h.map(&mut f)).collect(),
            projection: self.projection.as_ref().map(&mut f),
            norm: self.norm.map(f),
            leaky_slope: self.leaky_slope,
        }
    }
}

impl GatLayer<ParamId> {
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        dim: usize,
        num_heads: usize,
        norm: NormKind,
        rng: &mut R,
    ) -> Result<Self> {
        if num_heads == 0 {
            return Err(Error::Config("GAT needs at least one head".into()));
        }
        let heads = (0..num_heads)
            .map(|k| GatHead {
                weight: store.add_glorot(format!("{prefix}.head{k}.weight"), dim, dim, rng),
                attention: store.add_glorot(format!("{prefix}.head{k}.attention"), 2 * dim, 1, rng),
            })
            .collect();
        let projection = (num_heads > 1)
            .then(|| store.add_glorot(format!("{prefix}.projection"), num_heads * dim, dim, rng));
        Ok(GatLayer {
            heads,
            projection,
            norm: NormSlot::init(store, &format!("{prefix}.norm"), norm, dim),
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        })
    }
}

fn attention_from(
    tape: &mut Tape,
    z: Var,
    ctx: &MessageContext,
    attention: Var,
    slope: f64,
) -> Result<Var> {
    let neighbors = &ctx.nodes.neighbors;
    let z_u = tape.gather_rows(z, neighbors.member())?;
    let z_v = tape.gather_rows(z, &ctx.owner_index)?;
    let pair = tape.concat_cols(&[z_u, z_v])?;
    let score = tape.matmul(pair, attention)?;
    let score = tape.leaky_relu(score, slope)?;
    let max = tape.segment_max_constant(score, neighbors.owner())?;
    let shifted = tape.sub(score, max)?;
    let weights = tape.exp(shifted)?;
    let total = tape.segment_sum(weights, neighbors.owner())?;
    let total = tape.gather_rows(total, &ctx.owner_index)?;
    tape.div(weights, total)
}

/// Attention coefficients of one head, one per neighborhood entry, aligned
/// with `ctx.nodes.neighbors.member()`. They sum to one over each node's
/// neighborhood.
pub fn gat_attention(
    tape: &mut Tape,
    h: Var,
    ctx: &MessageContext,
    head: &GatHead<Var>,
    slope: f64,
) -> Result<Var> {
    let z = tape.matmul(h, head.weight)?;
    attention_from(tape, z, ctx, head.attention, slope)
}

/// Attention-weighted aggregation of every head, concatenated: `n x (K d)`.
pub fn gat_heads(
    tape: &mut Tape,
    h: Var,
    ctx: &MessageContext,
    layer: &GatLayer<Var>,
) -> Result<Var> {
    let mut outputs = Vec::with_capacity(layer.heads.len());
    for head in &layer.heads {
        let z = tape.matmul(h, head.weight)?;
        let alpha = attention_from(tape, z, ctx, head.attention, layer.leaky_slope)?;
        let z_u = tape.gather_rows(z, ctx.nodes.neighbors.member())?;
        let weighted = tape.mul(z_u, alpha)?;
        outputs.push(tape.segment_sum(weighted, ctx.nodes.neighbors.owner())?);
    }
    if outputs.len() == 1 {
        Ok(outputs[0])
    } else {
        tape.concat_cols(&outputs)
    }
}

/// Heads, projection, norm, activation and optional residual.
#[allow(clippy::too_many_arguments)]
pub fn gat_layer(
    tape: &mut Tape,
    h: Var,
    ctx: &MessageContext,
    layer: &GatLayer<Var>,
    activation: Activation,
    residual: bool,
    mode: NormMode,
    running: &mut RunningStats,
) -> Result<Var> {
    let mut agg = gat_heads(tape, h, ctx, layer)?;
    if let Some(p) = layer.projection {
        agg = tape.matmul(agg, p)?;
    }
    let normed = layer.norm.apply(tape, agg, &ctx.nodes, mode, running)?;
    let out = activation.apply(tape, normed)?;
    add_residual(tape, h, out, residual)
}
