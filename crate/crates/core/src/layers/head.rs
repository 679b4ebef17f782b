use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Linear;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::GraphBatch;
use crate::params::{ParamId, ParamStore};

/// The prediction problem a model is trained on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    NodeClassify,
    LinkPredict,
    GraphClassify,
    GraphRegress,
}

impl TaskKind {
    pub fn is_classification(self) -> bool {
        matches!(self, TaskKind::NodeClassify | TaskKind::GraphClassify)
    }

    /// Whether a larger primary metric is better.
    pub fn higher_is_better(self) -> bool {
        self != TaskKind::GraphRegress
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::NodeClassify => "node-classify",
            TaskKind::LinkPredict => "link-predict",
            TaskKind::GraphClassify => "graph-classify",
            TaskKind::GraphRegress => "graph-regress",
        }
    }
}

/// Linear layers with ReLU between them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    pub layers: Vec<Linear<T>>,
}

impl<T> Mlp<T> {
    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> Mlp<U> {
        Mlp {
            layers: self.layers.iter().map(|l| l.map(&mut f)).collect(),
        }
    }
}

impl Mlp<ParamId> {
    /// `widths` lists input, hidden and output widths.
    pub fn init<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        widths: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Config("an MLP needs input and output widths".into()));
        }
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::init(store, &format!("{prefix}.{i}"), w[0], w[1], rng))
            .collect();
        Ok(Mlp { layers })
    }
}

impl Mlp<Var> {
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let mut x = x;
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                x = tape.relu(x)?;
            }
            x = layer.forward(tape, x)?;
        }
        Ok(x)
    }
}

/// Input rows of the prediction MLP: node rows, concatenated endpoint
/// rows of each candidate link, or the mean of each graph's rows.
pub fn readout_input(tape: &mut Tape, kind: TaskKind, h: Var, batch: &GraphBatch) -> Result<Var> {
    match kind {
        TaskKind::NodeClassify => Ok(h),
        TaskKind::LinkPredict => {
            let links = batch
                .labels
                .links
                .as_ref()
                .ok_or_else(|| Error::Validation("batch has no candidate links".into()))?;
            let u: Arc<[usize]> = links.iter().map(|l| l.u).collect();
            let v: Arc<[usize]> = links.iter().map(|l| l.v).collect();
            let hu = tape.gather_rows(h, &u)?;
            let hv = tape.gather_rows(h, &v)?;
            tape.concat_cols(&[hu, hv])
        }
        TaskKind::GraphClassify | TaskKind::GraphRegress => tape.segment_mean(h, &batch.segment),
    }
}

/// Predictions of `head` for the rows selected by `kind`.
pub fn readout(
    tape: &mut Tape,
    kind: TaskKind,
    h: Var,
    batch: &GraphBatch,
    head: &Mlp<Var>,
) -> Result<Var> {
    let x = readout_input(tape, kind, h, batch)?;
    head.forward(tape, x)
}
