//! Finite-difference checks of every differentiable building block on
//! small random graphs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{gradient_check, GradientCheck, Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphBatch, Labels, LinkPair};
use crate::layers::{
    bce_with_logits, cross_entropy, gat_layer, gatedgcn_layer, gcn_layer, mae_loss, readout,
    Activation, GatLayer, GatedLayer, GcnLayer, MessageContext, Mlp, NormKind, TaskKind,
};
use crate::model::{Arch, Model, ModelConfig};
use crate::norm::{
    adjacency_wise_normalize, batch_wise_normalize, constrain_lambda_vars, edge_normalize,
    graph_wise_normalize, node_wise_normalize, unified_gn_forward, ActiveSet, GnVars, NormMode,
    RunningStats, Scope,
};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

pub const GRADCHECK_TOLERANCE: f64 = 1e-5;
pub const GRADCHECK_STEP: f64 = 1e-6;

/// Names accepted by [`gradcheck_suite`], in run order.
pub const CHECK_NAMES: [&str; 15] = [
    "node_wise_normalize",
    "adjacency_wise_normalize",
    "graph_wise_normalize",
    "batch_wise_normalize",
    "edge_normalize",
    "constrain_lambda",
    "unified_gn_forward",
    "gcn_layer",
    "gat_layer",
    "gatedgcn_layer",
    "cross_entropy",
    "bce_with_logits",
    "mae_loss",
    "readout",
    "model",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub tolerance: f64,
    pub entries: Vec<CheckEntry>,
}

impl SuiteReport {
    pub fn passes(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckEntry> {
        self.entries.iter().filter(|e| !e.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("op,max_rel_error,checked,skipped,pass\n");
        for e in &self.entries {
            out += &format!(
                "{},{:.16e},{},{},{}\n",
                e.name, e.max_rel_error, e.checked, e.skipped, e.pass
            );
        }
        out
    }
}

/// Runs the named check (or all of them for `None`) over `trials` random
/// instances each.
pub fn gradcheck_suite(name: Option<&str>, trials: usize, seed: u64) -> Result<SuiteReport> {
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let names: Vec<&str> = match name {
        None | Some("all") => CHECK_NAMES.to_vec(),
        Some(n) if CHECK_NAMES.contains(&n) => vec![n],
        Some(n) => {
            return Err(Error::Config(format!(
                "unknown gradcheck scope '{n}', expected all or one of {}",
                CHECK_NAMES.join(", ")
            )))
        }
    };
    let mut entries = Vec::with_capacity(names.len());
    for (k, &n) in names.iter().enumerate() {
        let mut total = GradientCheck::default();
        for t in 0..trials {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((k as u64) << 32) | t as u64);
            total.merge(&run_check(n, &mut rng)?);
        }
        entries.push(CheckEntry {
            name: n.to_string(),
            max_rel_error: total.max_rel_error,
            checked: total.checked,
            skipped: total.skipped,
            pass: total.passes(GRADCHECK_TOLERANCE),
        });
    }
    Ok(SuiteReport {
        tolerance: GRADCHECK_TOLERANCE,
        entries,
    })
}

/// Two graphs of 2 to 6 nodes with random edges, features and edge features.
fn random_batch(rng: &mut ChaCha8Rng, d: usize) -> Result<GraphBatch> {
    let mut graphs = Vec::new();
    for _ in 0..2 {
        let n = rng.random_range(2..=6);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if rng.random_bool(0.5) {
                    edges.push((u, v));
                }
            }
        }
        let labels = Labels {
            node: Some((0..n).map(|_| rng.random_range(0..2)).collect()),
            links: Some(vec![
                LinkPair {
                    u: 0,
                    v: n - 1,
                    label: true,
                },
                LinkPair {
                    u: 1,
                    v: 0,
                    label: false,
                },
            ]),
            ..Labels::default()
        };
        let features = Tensor::uniform(n, d, 1.0, rng);
        let edge_features = Tensor::uniform(edges.len(), d, 1.0, rng);
        graphs.push(Graph::new(n, edges, features, Some(edge_features), labels)?);
    }
    GraphBatch::concat(&graphs.iter().collect::<Vec<_>>())
}

/// `sum(out * w)` with fixed random weights, so every output element matters.
fn weighted_sum(tape: &mut Tape, out: Var, weights: &Tensor) -> Result<Var> {
    let w = tape.constant(weights.clone())?;
    let p = tape.mul(out, w)?;
    tape.sum_all(p)
}

fn weights_like(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::uniform(rows, cols, 1.0, rng)
}

/// Raw gate weights at least 0.2 away from the clip point, some negative.
fn raw_lambda(d: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..d)
        .map(|_| {
            if rng.random_bool(0.2) {
                -rng.random_range(0.2..1.0)
            } else {
                rng.random_range(0.2..1.5)
            }
        })
        .collect();
    Tensor::new(1, d, data).expect("sized")
}

/// A parameter store whose norm parameters are moved off their initial values.
fn jitter_norm_params(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let name = store.name(id).to_string();
        let d = store.get(id).cols();
        if name.contains(".lambda_") {
            *store.get_mut(id) = raw_lambda(d, rng);
        } else if name.ends_with("norm.gamma") || name.ends_with("norm.beta") {
            *store.get_mut(id) = Tensor::uniform(1, d, 1.0, rng);
        }
    }
}

fn store_check(
    store: &ParamStore,
    extra: Vec<Tensor>,
    build: impl Fn(&mut Tape, &[Var], &[Var]) -> Result<Var>,
) -> Result<GradientCheck> {
    let n = store.len();
    let mut inputs = store.values().to_vec();
    inputs.extend(extra);
    gradient_check(&inputs, GRADCHECK_STEP, |tape, v| {
        build(tape, &v[..n], &v[n..])
    })
}

fn run_check(name: &str, rng: &mut ChaCha8Rng) -> Result<GradientCheck> {
    let d = rng.random_range(2..=4);
    let batch = random_batch(rng, d)?;
    let n = batch.num_nodes();
    let x = batch.features.clone();
    let w = weights_like(n, d, rng);
    let ctx = MessageContext::new(&batch, true)?;
    let edges = ctx.edges.clone().expect("edge context");
    // both directions of an edge carry the same features, which can put a
    // scope exactly at zero variance; independent rows avoid that point
    let e = Tensor::uniform(batch.num_edges(), d, 1.0, rng);
    let we = weights_like(e.rows(), d, rng);

    match name {
        "node_wise_normalize" => gradient_check(&[x], GRADCHECK_STEP, |t, v| {
            let out = node_wise_normalize(t, v[0])?.output;
            weighted_sum(t, out, &w)
        }),
        "adjacency_wise_normalize" => gradient_check(&[x], GRADCHECK_STEP, |t, v| {
            let out = adjacency_wise_normalize(t, v[0], &ctx.nodes.neighbors)?.output;
            weighted_sum(t, out, &w)
        }),
        "graph_wise_normalize" => gradient_check(&[x], GRADCHECK_STEP, |t, v| {
            let out = graph_wise_normalize(t, v[0], &batch.segment)?.output;
            weighted_sum(t, out, &w)
        }),
        "batch_wise_normalize" => gradient_check(&[x], GRADCHECK_STEP, |t, v| {
            let mut running = RunningStats::new(d);
            let out = batch_wise_normalize(t, v[0], NormMode::Training, &mut running)?.output;
            weighted_sum(t, out, &w)
        }),
        "edge_normalize" => {
            let mut total = GradientCheck::default();
            for scope in Scope::ALL {
                let r = gradient_check(std::slice::from_ref(&e), GRADCHECK_STEP, |t, v| {
                    let mut running = RunningStats::new(d);
                    let out = edge_normalize(
                        t,
                        v[0],
                        scope,
                        &edges.scopes,
                        NormMode::Training,
                        &mut running,
                    )?;
                    weighted_sum(t, out.output, &we)
                })?;
                total.merge(&r);
            }
            Ok(total)
        }
        "constrain_lambda" => {
            let raws: Vec<Tensor> = (0..4).map(|_| raw_lambda(d, rng)).collect();
            let wl: Vec<Tensor> = (0..4).map(|_| weights_like(1, d, rng)).collect();
            gradient_check(&raws, GRADCHECK_STEP, |t, v| {
                let lambda =
                    constrain_lambda_vars(t, &[Some(v[0]), Some(v[1]), Some(v[2]), Some(v[3])])?;
                let mut acc = None;
                for (l, wl) in lambda.iter().zip(&wl) {
                    let s = weighted_sum(t, l.expect("active"), wl)?;
                    acc = Some(match acc {
                        Some(a) => t.add(a, s)?,
                        None => s,
                    });
                }
                Ok(acc.expect("four scopes"))
            })
        }
        "unified_gn_forward" => {
            let mut inputs = vec![x];
            inputs.extend((0..4).map(|_| raw_lambda(d, rng)));
            inputs.push(Tensor::uniform(1, d, 1.5, rng));
            inputs.push(Tensor::uniform(1, d, 1.0, rng));
            let active = ActiveSet::ALL;
            gradient_check(&inputs, GRADCHECK_STEP, |t, v| {
                let mut raw = [None; 4];
                for s in active.scopes() {
                    raw[s.index()] = Some(v[1 + s.index()]);
                }
                let vars = GnVars {
                    raw_lambda: raw,
                    gamma: v[5],
                    beta: v[6],
                };
                let mut running = RunningStats::new(d);
                let out = unified_gn_forward(
                    t,
                    v[0],
                    &ctx.nodes,
                    &vars,
                    NormMode::Training,
                    &mut running,
                )?;
                weighted_sum(t, out, &w)
            })
        }
        "gcn_layer" | "gat_layer" => {
            let mut store = ParamStore::new();
            let gn = NormKind::Unified(ActiveSet::ALL);
            let gcn = GcnLayer::init(&mut store, "gcn", d, gn, rng);
            let gat = GatLayer::init(&mut store, "gat", d, 2, gn, rng)?;
            jitter_norm_params(&mut store, rng);
            let is_gcn = name == "gcn_layer";
            store_check(&store, vec![x], |t, p, inp| {
                let mut running = RunningStats::new(d);
                let out = if is_gcn {
                    let l = gcn.map(|id| p[id.0]);
                    gcn_layer(
                        t,
                        inp[0],
                        &ctx,
                        &l,
                        Activation::Relu,
                        true,
                        NormMode::Training,
                        &mut running,
                    )?
                } else {
                    let l = gat.map(|id| p[id.0]);
                    gat_layer(
                        t,
                        inp[0],
                        &ctx,
                        &l,
                        Activation::Relu,
                        true,
                        NormMode::Training,
                        &mut running,
                    )?
                };
                weighted_sum(t, out, &w)
            })
        }
        "gatedgcn_layer" => {
            let mut store = ParamStore::new();
            let layer = GatedLayer::init(
                &mut store,
                "gated",
                d,
                NormKind::Unified(ActiveSet::ALL),
                rng,
            );
            jitter_norm_params(&mut store, rng);
            store_check(&store, vec![x, e], |t, p, inp| {
                let l = layer.map(|id| p[id.0]);
                let (mut r1, mut r2) = (RunningStats::new(d), RunningStats::new(d));
                let (h, e) = gatedgcn_layer(
                    t,
                    inp[0],
                    inp[1],
                    &ctx,
                    &l,
                    NormMode::Training,
                    &mut r1,
                    &mut r2,
                )?;
                let a = weighted_sum(t, h, &w)?;
                let b = weighted_sum(t, e, &we)?;
                t.add(a, b)
            })
        }
        "cross_entropy" => {
            let labels = batch.labels.node.clone().expect("node labels");
            let logits = Tensor::uniform(n, 3, 2.0, rng);
            gradient_check(&[logits], GRADCHECK_STEP, |t, v| {
                cross_entropy(t, v[0], &labels)
            })
        }
        "bce_with_logits" => {
            let y: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
            let logits = Tensor::uniform(n, 1, 3.0, rng);
            gradient_check(&[logits], GRADCHECK_STEP, |t, v| {
                bce_with_logits(t, v[0], &y)
            })
        }
        "mae_loss" => {
            // predictions stay at least 0.1 away from their targets
            let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let pred: Vec<f64> = y
                .iter()
                .map(|&t| {
                    t + if rng.random_bool(0.5) { 1.0 } else { -1.0 } * rng.random_range(0.1..1.0)
                })
                .collect();
            gradient_check(&[Tensor::column_vector(&pred)], GRADCHECK_STEP, |t, v| {
                mae_loss(t, v[0], &y)
            })
        }
        "readout" => {
            let mut total = GradientCheck::default();
            for kind in [
                TaskKind::NodeClassify,
                TaskKind::LinkPredict,
                TaskKind::GraphRegress,
            ] {
                let mut store = ParamStore::new();
                let width = if kind == TaskKind::LinkPredict {
                    2 * d
                } else {
                    d
                };
                let mlp = Mlp::init(&mut store, "head", &[width, 3, 2], rng)?;
                let rows = match kind {
                    TaskKind::NodeClassify => n,
                    TaskKind::LinkPredict => batch.labels.links.as_ref().map_or(0, Vec::len),
                    _ => batch.num_graphs(),
                };
                let wo = weights_like(rows, 2, rng);
                let r = store_check(&store, vec![x.clone()], |t, p, inp| {
                    let out = readout(t, kind, inp[0], &batch, &mlp.map(|id| p[id.0]))?;
                    weighted_sum(t, out, &wo)
                })?;
                total.merge(&r);
            }
            Ok(total)
        }
        "model" => {
            let mut total = GradientCheck::default();
            for arch in [Arch::Gcn, Arch::Gat, Arch::GatedGcn] {
                for depth in [1, 2] {
                    let config = ModelConfig {
                        arch,
                        task: TaskKind::NodeClassify,
                        depth,
                        hidden: d,
                        in_dim: d,
                        edge_in_dim: Some(d),
                        out_dim: 2,
                        norm: NormKind::Unified(ActiveSet::ALL),
                        heads: 1,
                        residual: true,
                        activation: Activation::Relu,
                    };
                    let mut model = Model::new(config, rng)?;
                    jitter_norm_params(&mut model.store, rng);
                    let mctx = model.context(&batch)?;
                    let labels = batch.labels.node.clone().expect("node labels");
                    let r = store_check(&model.store, vec![x.clone(), e.clone()], |t, p, inp| {
                        let mut running = model.running.clone();
                        let e_in = arch.uses_edges().then_some(inp[1]);
                        let out = model.forward_with(
                            t,
                            p,
                            inp[0],
                            e_in,
                            &batch,
                            &mctx,
                            NormMode::Training,
                            &mut running,
                        )?;
                        cross_entropy(t, out, &labels)
                    })?;
                    total.merge(&r);
                }
            }
            Ok(total)
        }
        _ => Err(Error::Config(format!("unknown gradcheck scope '{name}'"))),
    }
}
