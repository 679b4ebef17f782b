use std::sync::Arc;

use super::{NeighborScope, RunningStats, Scope, ScopeContext};
use crate::autodiff::{Segments, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Added to every standard deviation before dividing.
pub const NORM_EPSILON: f64 = 1e-5;

/// Whether batch statistics come from the current batch (and update the
/// running statistics) or from the running statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    Training,
    Inference,
}

/// Statistics used by one normalization call.
///
/// Shapes: node and adjacency scope `rows x 1`, graph scope
/// `graphs x cols`, batch scope `1 x cols`. `std` is the biased standard
/// deviation; the divisor actually applied is `std + epsilon`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub scope: Scope,
    pub mean: Tensor,
    pub std: Tensor,
    pub epsilon: f64,
}

impl NormStats {
    /// The divisor `std + epsilon`, elementwise.
    pub fn divisor(&self) -> Tensor {
        self.std.map(|s| s + self.epsilon)
    }
}

/// A normalized tensor together with the statistics that produced it.
#[derive(Clone, Debug)]
pub struct Normalized {
    pub output: Var,
    pub stats: NormStats,
}

fn finish(
    tape: &mut Tape,
    scope: Scope,
    diff: Var,
    mean: Var,
    std: Var,
    divisor_rows: Option<&Arc<[usize]>>,
) -> Result<Normalized> {
    let denom = tape.add_scalar(std, NORM_EPSILON)?;
    let denom = match divisor_rows {
        Some(index) => tape.gather_rows(denom, index)?,
        None => denom,
    };
    let output = tape.div(diff, denom)?;
    Ok(Normalized {
        output,
        stats: NormStats {
            scope,
            mean: tape.value(mean).clone(),
            std: tape.value(std).clone(),
            epsilon: NORM_EPSILON,
        },
    })
}

/// Standardizes each row by the mean and standard deviation of its own
/// elements.
pub fn node_wise_normalize(tape: &mut Tape, h: Var) -> Result<Normalized> {
    let mean = tape.row_mean(h)?;
    let diff = tape.sub(h, mean)?;
    let sq = tape.square(diff)?;
    let var = tape.row_mean(sq)?;
    let std = tape.sqrt(var)?;
    finish(tape, Scope::Node, diff, mean, std, None)
}

/// Standardizes each row by two scalars pooled over every element of the
/// rows in its neighborhood.
pub fn adjacency_wise_normalize(
    tape: &mut Tape,
    h: Var,
    neighbors: &NeighborScope,
) -> Result<Normalized> {
    let rows = tape.shape(h).0;
    if neighbors.num_rows() != rows {
        return Err(Error::shape(
            "adjacency_wise_normalize",
            format!(
                "scope covers {} rows, input has {rows}",
                neighbors.num_rows()
            ),
        ));
    }
    let owner = neighbors.owner();
    let owner_index: Arc<[usize]> = owner.ids().into();
    let gathered = tape.gather_rows(h, neighbors.member())?;
    let mean = tape.segment_pooled_mean(gathered, owner)?;
    let mean_per_pair = tape.gather_rows(mean, &owner_index)?;
    let centered = tape.sub(gathered, mean_per_pair)?;
    let sq = tape.square(centered)?;
    let var = tape.segment_pooled_mean(sq, owner)?;
    let std = tape.sqrt(var)?;
    let diff = tape.sub(h, mean)?;
    finish(tape, Scope::Adjacency, diff, mean, std, None)
}

/// Per-column standardization within each segment.
fn segment_normalize(
    tape: &mut Tape,
    scope: Scope,
    h: Var,
    segments: &Arc<Segments>,
) -> Result<(Normalized, Var)> {
    let rows = tape.shape(h).0;
    if segments.len() != rows {
        return Err(Error::shape(
            "graph_wise_normalize",
            format!("{} segment ids for {rows} rows", segments.len()),
        ));
    }
    let index: Arc<[usize]> = segments.ids().into();
    let mean = tape.segment_mean(h, segments)?;
    let mean_rows = tape.gather_rows(mean, &index)?;
    let diff = tape.sub(h, mean_rows)?;
    let sq = tape.square(diff)?;
    let var = tape.segment_mean(sq, segments)?;
    let std = tape.sqrt(var)?;
    Ok((finish(tape, scope, diff, mean, std, Some(&index))?, var))
}

/// Per-column standardization over the rows of each graph.
pub fn graph_wise_normalize(tape: &mut Tape, h: Var, graphs: &Arc<Segments>) -> Result<Normalized> {
    segment_normalize(tape, Scope::Graph, h, graphs).map(|(n, _)| n)
}

/// Per-column standardization over every row. Training mode uses the
/// batch's statistics and folds them into `running`; inference mode uses
/// `running` unchanged.
pub fn batch_wise_normalize(
    tape: &mut Tape,
    h: Var,
    mode: NormMode,
    running: &mut RunningStats,
) -> Result<Normalized> {
    let (rows, cols) = tape.shape(h);
    if running.dim() != cols {
        return Err(Error::shape(
            "batch_wise_normalize",
            format!(
                "running stats of width {} for {cols} columns",
                running.dim()
            ),
        ));
    }
    if rows == 0 {
        // nothing to normalize; the running statistics are left alone
        return Ok(Normalized {
            output: h,
            stats: NormStats {
                scope: Scope::Batch,
                mean: running.running_mean.clone(),
                std: running.running_var.map(f64::sqrt),
                epsilon: NORM_EPSILON,
            },
        });
    }
    match mode {
        NormMode::Training => {
            let all = Arc::new(Segments::single(rows));
            let (mut normalized, var) = segment_normalize(tape, Scope::Batch, h, &all)?;
            normalized.stats.scope = Scope::Batch;
            running.update(&normalized.stats.mean, tape.value(var))?;
            Ok(normalized)
        }
        NormMode::Inference => {
            let mean = tape.constant(running.running_mean.clone())?;
            let std = tape.constant(running.running_var.map(f64::sqrt))?;
            let diff = tape.sub(h, mean)?;
            finish(tape, Scope::Batch, diff, mean, std, None)
        }
    }
}

/// Dispatches to the normalization of `scope` using the structures in `ctx`.
///
/// Works unchanged for edge rows when `ctx` was built with
/// [`ScopeContext::for_edges`].
pub fn normalize(
    tape: &mut Tape,
    h: Var,
    scope: Scope,
    ctx: &ScopeContext,
    mode: NormMode,
    running: &mut RunningStats,
) -> Result<Normalized> {
    match scope {
        Scope::Node => node_wise_normalize(tape, h),
        Scope::Adjacency => adjacency_wise_normalize(tape, h, &ctx.neighbors),
        Scope::Graph => graph_wise_normalize(tape, h, &ctx.graphs),
        Scope::Batch => batch_wise_normalize(tape, h, mode, running),
    }
}

/// Normalizes edge features. `ctx` must be an edge context: adjacency is
/// over the line graph and graph scope over each graph's edges.
pub fn edge_normalize(
    tape: &mut Tape,
    e: Var,
    variant: Scope,
    edge_ctx: &ScopeContext,
    mode: NormMode,
    running: &mut RunningStats,
) -> Result<Normalized> {
    normalize(tape, e, variant, edge_ctx, mode, running)
}
