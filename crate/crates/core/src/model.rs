use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::GraphBatch;
use crate::layers::{
    gat_layer, gatedgcn_layer, gcn_layer, readout, Activation, GatLayer, GatedLayer, GcnLayer,
    Linear, MessageContext, Mlp, NormKind, NormSlot, TaskKind,
};
use crate::norm::{NormMode, RunningStats, Scope};
use crate::params::{ParamId, ParamStore};

/// Message-passing layer family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Gcn,
    Gat,
    GatedGcn,
}

impl Arch {
    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Gcn => "gcn",
            Arch::Gat => "gat",
            Arch::GatedGcn => "gatedgcn",
        }
    }

    pub fn uses_edges(self) -> bool {
        self == Arch::GatedGcn
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(Arch::Gcn),
            "gat" => Ok(Arch::Gat),
            "gatedgcn" => Ok(Arch::GatedGcn),
            _ => Err(Error::Config(format!(
                "unknown arch '{s}', expected gcn, gat or gatedgcn"
            ))),
        }
    }
}

/// Shape of a model. Everything else is derived from it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    pub task: TaskKind,
    pub depth: usize,
    pub hidden: usize,
    pub in_dim: usize,
    /// Required by GatedGCN.
    pub edge_in_dim: Option<usize>,
    /// Classes for classification, 1 otherwise.
    pub out_dim: usize,
    pub norm: NormKind,
    pub heads: usize,
    pub residual: bool,
    pub activation: Activation,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.depth == 0 {
            return bad("depth must be at least 1".into());
        }
        if self.hidden == 0 || self.in_dim == 0 || self.out_dim == 0 {
            return bad("hidden, input and output widths must be positive".into());
        }
        if self.heads == 0 {
            return bad("heads must be at least 1".into());
        }
        if self.arch.uses_edges() && self.edge_in_dim.is_none() {
            return bad(format!("arch {} needs edge features", self.arch));
        }
        if !self.task.is_classification() && self.out_dim != 1 {
            return bad(format!("task {} has output width 1", self.task.as_str()));
        }
        Ok(())
    }
}

/// One message-passing layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Layer<T> {
    Gcn(GcnLayer<T>),
    Gat(GatLayer<T>),
    Gated(GatedLayer<T>),
}

impl<T> Layer<T> {
    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Layer<U> {
        match self {
            Layer::Gcn(l) => Layer::Gcn(l.map(f)),
            Layer::Gat(l) => Layer::Gat(l.map(f)),
            Layer::Gated(l) => Layer::Gated(l.map(f)),
        }
    }

    /// Node-stream slot, then the edge-stream slot if there is one.
    pub fn norm_slots(&self) -> Vec<(&'static str, &NormSlot<T>)> {
        match self {
            Layer::Gcn(l) => vec![("node", &l.norm)],
            Layer::Gat(l) => vec![("node", &l.norm)],
            Layer::Gated(l) => vec![("node", &l.norm), ("edge", &l.edge_norm)],
        }
    }
}

/// Running statistics of one layer's node and edge streams.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRunning {
    pub node: RunningStats,
    pub edge: Option<RunningStats>,
}

/// Averaged constrained gate weights of one normalization slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaRow {
    pub layer: usize,
    pub stream: String,
    /// Mean over feature dimensions, in scope order n, a, g, b.
    pub lambda: [f64; 4],
}

impl LambdaRow {
    pub fn get(&self, scope: Scope) -> f64 {
        self.lambda[scope.index()]
    }
}

/// Embedding, message-passing stack and prediction head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub embed: Linear<ParamId>,
    pub edge_embed: Option<Linear<ParamId>>,
    pub layers: Vec<Layer<ParamId>>,
    pub head: Mlp<ParamId>,
    pub running: Vec<LayerRunning>,
}

impl Model {
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.hidden;
        let mut store = ParamStore::new();
        let embed = Linear::init(&mut store, "embed", config.in_dim, d, rng);
        let edge_embed = match (config.arch.uses_edges(), config.edge_in_dim) {
            (true, Some(de)) => Some(Linear::init(&mut store, "edge_embed", de, d, rng)),
            _ => None,
        };
        let mut layers = Vec::with_capacity(config.depth);
        let mut running = Vec::with_capacity(config.depth);
        for i in 0..config.depth {
            let prefix = format!("layer{i}");
            let layer = match config.arch {
                Arch::Gcn => Layer::Gcn(GcnLayer::init(&mut store, &prefix, d, config.norm, rng)),
                Arch::Gat => Layer::Gat(GatLayer::init(
                    &mut store,
                    &prefix,
                    d,
                    config.heads,
                    config.norm,
                    rng,
                )?),
                Arch::GatedGcn => {
                    Layer::Gated(GatedLayer::init(&mut store, &prefix, d, config.norm, rng))
                }
            };
            layers.push(layer);
            running.push(LayerRunning {
                node: RunningStats::new(d),
                edge: config.arch.uses_edges().then(|| RunningStats::new(d)),
            });
        }
        let head_in = if config.task == TaskKind::LinkPredict {
            2 * d
        } else {
            d
        };
        let head = Mlp::init(&mut store, "head", &[head_in, d, config.out_dim], rng)?;
        Ok(Model {
            config,
            store,
            embed,
            edge_embed,
            layers,
            head,
            running,
        })
    }

    /// Checks that `batch` fits the model's input widths.
    pub fn check_batch(&self, batch: &GraphBatch) -> Result<()> {
        if batch.features.cols() != self.config.in_dim {
            return Err(Error::Validation(format!(
                "feature dim {} does not match model input dim {}",
                batch.features.cols(),
                self.config.in_dim
            )));
        }
        if self.config.arch.uses_edges() {
            let de = batch.edge_features.as_ref().map(|e| e.cols());
            if de != self.config.edge_in_dim {
                return Err(Error::Validation(format!(
                    "edge feature dim {de:?} does not match model edge dim {:?}",
                    self.config.edge_in_dim
                )));
            }
        }
        Ok(())
    }

    /// Message context suited to this model's layers.
    pub fn context(&self, batch: &GraphBatch) -> Result<MessageContext> {
        MessageContext::new(batch, self.config.arch.uses_edges())
    }

    /// Predictions for `batch`, with parameters bound as `vars` and inputs
    /// given as tape handles. Training mode updates `running`.
    #[allow(clippy::too_many_arguments)]
    pub fn forward_with(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        x: Var,
        e: Option<Var>,
        batch: &GraphBatch,
        ctx: &MessageContext,
        mode: NormMode,
        running: &mut [LayerRunning],
    ) -> Result<Var> {
        let p = |id: &ParamId| vars[id.0];
        let mut h = self.embed.map(p).forward(tape, x)?;
        let mut e = match (&self.edge_embed, e) {
            (Some(embed), Some(e)) => Some(embed.map(p).forward(tape, e)?),
            (Some(_), None) => return Err(Error::Validation("model needs edge features".into())),
            _ => None,
        };
        let cfg = &self.config;
        for (layer, stats) in self.layers.iter().zip(running.iter_mut()) {
            match layer.map(p) {
                Layer::Gcn(l) => {
                    h = gcn_layer(
                        tape,
                        h,
                        ctx,
                        &l,
                        cfg.activation,
                        cfg.residual,
                        mode,
                        &mut stats.node,
                    )?
                }
                Layer::Gat(l) => {
                    h = gat_layer(
                        tape,
                        h,
                        ctx,
                        &l,
                        cfg.activation,
                        cfg.residual,
                        mode,
                        &mut stats.node,
                    )?
                }
                Layer::Gated(l) => {
                    let edge_stats = stats.edge.as_mut().ok_or_else(|| {
                        Error::Validation("missing edge running statistics".into())
                    })?;
                    let e_in = e.expect("edge stream embedded");
                    let (h2, e2) =
                        gatedgcn_layer(tape, h, e_in, ctx, &l, mode, &mut stats.node, edge_stats)?;
                    h = h2;
                    e = Some(e2);
                }
            }
        }
        readout(tape, cfg.task, h, batch, &self.head.map(p))
    }

    /// Binds the parameters and inputs, runs the model and returns the
    /// prediction handle and the parameter handles.
    pub fn forward(
        &mut self,
        tape: &mut Tape,
        batch: &GraphBatch,
        ctx: &MessageContext,
        mode: NormMode,
    ) -> Result<(Var, Vec<Var>)> {
        self.check_batch(batch)?;
        let vars = self.store.bind(tape)?;
        let x = tape.constant(batch.features.clone())?;
        let e = match (&self.edge_embed, &batch.edge_features) {
            (Some(_), Some(ef)) => Some(tape.constant(ef.clone())?),
            _ => None,
        };
        let mut running = std::mem::take(&mut self.running);
        let out = self.forward_with(tape, &vars, x, e, batch, ctx, mode, &mut running);
        self.running = running;
        Ok((out?, vars))
    }

    /// Inference-mode predictions; the model is not changed.
    pub fn predict(
        &self,
        tape: &mut Tape,
        batch: &GraphBatch,
        ctx: &MessageContext,
    ) -> Result<Var> {
        self.check_batch(batch)?;
        let vars = self.store.bind(tape)?;
        let x = tape.constant(batch.features.clone())?;
        let e = match (&self.edge_embed, &batch.edge_features) {
            (Some(_), Some(ef)) => Some(tape.constant(ef.clone())?),
            _ => None,
        };
        let mut running = self.running.clone();
        self.forward_with(
            tape,
            &vars,
            x,
            e,
            batch,
            ctx,
            NormMode::Inference,
            &mut running,
        )
    }

    /// Per-slot constrained gate weights averaged over the feature
    /// dimensions, in layer order. Empty when no layer uses unified norm.
    pub fn lambda_distribution(&self) -> Result<Vec<LambdaRow>> {
        let mut rows = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for (stream, slot) in layer.norm_slots() {
                let Some(lambda) = slot.lambda(&self.store) else {
                    continue;
                };
                let lambda = lambda?;
                let avg = |t: &crate::tensor::Tensor| t.data().iter().sum::<f64>() / t.len() as f64;
                rows.push(LambdaRow {
                    layer: i,
                    stream: stream.to_string(),
                    lambda: std::array::from_fn(|k| avg(&lambda[k])),
                });
            }
        }
        Ok(rows)
    }

    pub fn has_unified_norm(&self) -> bool {
        self.config.norm.is_unified()
    }
}
