use std::sync::Arc;

use super::*;
use crate::autodiff::{gradient_check, Segments, Tape};
use crate::graph::{Graph, GraphBatch, GraphTopology, Labels};
use crate::tensor::Tensor;

const EPS: f64 = NORM_EPSILON;

fn rows(r: &[&[f64]]) -> Tensor {
    Tensor::from_rows(&r.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn batch_of(n: usize, edges: &[(usize, usize)], features: Tensor) -> GraphBatch {
    let g = Graph::new(n, edges.to_vec(), features, None, Labels::default()).unwrap();
    GraphBatch::concat(&[&g]).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn node_wise_examples() {
    let mut tape = Tape::new();
    let h = tape.constant(rows(&[&[1.0, 3.0]])).unwrap();
    let out = node_wise_normalize(&mut tape, h).unwrap();
    let s = 1.0 + EPS;
    assert_eq!(tape.value(out.output).data(), &[-1.0 / s, 1.0 / s]);
    assert_eq!(out.stats.mean.data(), &[2.0]);
    assert_eq!(out.stats.std.data(), &[1.0]);
    assert_eq!(out.stats.scope, Scope::Node);

    let c = tape.constant(rows(&[&[5.0, 5.0, 5.0]])).unwrap();
    let out = node_wise_normalize(&mut tape, c).unwrap();
    assert_eq!(tape.value(out.output).data(), &[0.0, 0.0, 0.0]);
    assert!(out.stats.divisor().data().iter().all(|&d| d >= EPS));
}

#[test]
fn adjacency_wise_path_example() {
    let batch = batch_of(
        3,
        &[(0, 1), (1, 2)],
        Tensor::column_vector(&[0.0, 1.0, 2.0]),
    );
    let ctx = ScopeContext::for_nodes(&batch, true);
    let mut tape = Tape::new();
    let h = tape.constant(batch.features.clone()).unwrap();
    let out = adjacency_wise_normalize(&mut tape, h, &ctx.neighbors).unwrap();
    assert_eq!(out.stats.mean.data()[0], 0.5);
    assert_eq!(out.stats.std.data()[0], 0.5);
    assert_eq!(out.stats.mean.data()[1], 1.0);
    let v = tape.value(out.output).data();
    assert!((v[0] + 0.5 / (0.5 + EPS)).abs() < 1e-15);
    assert_eq!(v[1], 0.0);
}

#[test]
fn adjacency_wise_isolated_node_matches_node_wise() {
    for inclusive in [true, false] {
        let batch = batch_of(1, &[], rows(&[&[1.0, 3.0]]));
        let ctx = ScopeContext::for_nodes(&batch, inclusive);
        let mut tape = Tape::new();
        let h = tape.constant(batch.features.clone()).unwrap();
        let a = adjacency_wise_normalize(&mut tape, h, &ctx.neighbors).unwrap();
        let n = node_wise_normalize(&mut tape, h).unwrap();
        assert_eq!(tape.value(a.output), tape.value(n.output));
    }
}

#[test]
fn adjacency_wise_constant_complete_graph_is_zero() {
    let edges: Vec<_> = (0..4)
        .flat_map(|u| ((u + 1)..4).map(move |v| (u, v)))
        .collect();
    let batch = batch_of(4, &edges, Tensor::full(4, 3, 2.5));
    let ctx = ScopeContext::for_nodes(&batch, true);
    let mut tape = Tape::new();
    let h = tape.constant(batch.features.clone()).unwrap();
    let out = adjacency_wise_normalize(&mut tape, h, &ctx.neighbors).unwrap();
    assert!(tape.value(out.output).data().iter().all(|&v| v == 0.0));
}

#[test]
fn exclusive_scope_omits_self() {
    let topo = GraphTopology::build(3, &[(0, 1), (1, 2)], true).unwrap();
    let inc = NeighborScope::from_topology(&topo, true);
    let exc = NeighborScope::from_topology(&topo, false);
    assert_eq!(inc.members_of(1), &[0, 1, 2]);
    assert_eq!(exc.members_of(1), &[0, 2]);
    assert_eq!(inc.members_of(0), &[0, 1]);
}

#[test]
fn graph_wise_examples() {
    let mut tape = Tape::new();
    let h = tape.constant(Tensor::column_vector(&[0.0, 2.0])).unwrap();
    let one = Arc::new(Segments::single(2));
    let out = graph_wise_normalize(&mut tape, h, &one).unwrap();
    let s = 1.0 + EPS;
    assert_eq!(tape.value(out.output).data(), &[-1.0 / s, 1.0 / s]);

    let h = tape
        .constant(Tensor::column_vector(&[0.0, 2.0, 10.0, 12.0]))
        .unwrap();
    let two = Arc::new(Segments::from_sizes(&[2, 2]));
    let out = graph_wise_normalize(&mut tape, h, &two).unwrap();
    assert_eq!(
        tape.value(out.output).data(),
        &[-1.0 / s, 1.0 / s, -1.0 / s, 1.0 / s]
    );
    assert_eq!(out.stats.mean.shape(), (2, 1));

    let h = tape.constant(rows(&[&[4.0, -7.0]])).unwrap();
    let single = Arc::new(Segments::single(1));
    let out = graph_wise_normalize(&mut tape, h, &single).unwrap();
    assert_eq!(tape.value(out.output).data(), &[0.0, 0.0]);
}

#[test]
fn batch_wise_training_equals_graph_wise_on_one_graph() {
    let h0 = rows(&[&[0.3, -1.0], &[2.0, 0.5], &[-0.7, 4.0]]);
    let mut tape = Tape::new();
    let h = tape.constant(h0).unwrap();
    let mut running = RunningStats::new(2);
    let b = batch_wise_normalize(&mut tape, h, NormMode::Training, &mut running).unwrap();
    let g = graph_wise_normalize(&mut tape, h, &Arc::new(Segments::single(3))).unwrap();
    assert_eq!(tape.value(b.output), tape.value(g.output));
    assert_eq!(running.update_count, 1);
    assert_eq!(b.stats.mean.shape(), (1, 2));
}

#[test]
fn batch_wise_inference_uses_running_stats() {
    let h0 = rows(&[&[1.0, -2.0], &[3.0, 0.5]]);
    let mut tape = Tape::new();
    let h = tape.constant(h0.clone()).unwrap();
    let mut running = RunningStats::new(2);
    let out = batch_wise_normalize(&mut tape, h, NormMode::Inference, &mut running).unwrap();
    let expected = h0.map(|v| v / (1.0 + EPS));
    assert_eq!(tape.value(out.output), &expected);
    assert_eq!(running.update_count, 0);
}

#[test]
fn edge_variants() {
    // two nodes, one undirected edge => two directed edge rows
    let g = Graph::new(
        2,
        vec![(0, 1)],
        Tensor::zeros(2, 1),
        Some(rows(&[&[1.0, 3.0]])),
        Labels::default(),
    )
    .unwrap();
    let batch = GraphBatch::concat(&[&g]).unwrap();
    let ctx = ScopeContext::for_edges(&batch, true).unwrap();
    let mut tape = Tape::new();
    let e = tape.constant(batch.edge_features.clone().unwrap()).unwrap();
    let mut running = RunningStats::new(2);
    let out = edge_normalize(
        &mut tape,
        e,
        Scope::Node,
        &ctx,
        NormMode::Training,
        &mut running,
    )
    .unwrap();
    let s = 1.0 + EPS;
    assert_eq!(tape.value(out.output).row(0), &[-1.0 / s, 1.0 / s]);

    let tri = Graph::new(
        3,
        vec![(0, 1), (1, 2), (0, 2)],
        Tensor::zeros(3, 1),
        Some(Tensor::full(3, 2, 0.25)),
        Labels::default(),
    )
    .unwrap();
    let batch = GraphBatch::concat(&[&tri]).unwrap();
    let ctx = ScopeContext::for_edges(&batch, true).unwrap();
    let e = tape.constant(batch.edge_features.clone().unwrap()).unwrap();
    let out = edge_normalize(
        &mut tape,
        e,
        Scope::Graph,
        &ctx,
        NormMode::Training,
        &mut running,
    )
    .unwrap();
    assert!(tape.value(out.output).data().iter().all(|&v| v == 0.0));
}

#[test]
fn constrain_examples() {
    let mut p = GnParams::new(1, ActiveSet::ALL);
    p.raw_lambda = [2.0, -1.0, 1.0, 1.0].map(Tensor::scalar);
    let l = constrain_lambda(&p).unwrap();
    assert_eq!(l.each_ref().map(|t| t.data()[0]), [0.5, 0.0, 0.25, 0.25]);

    let p = GnParams::new(3, ActiveSet::ALL);
    let l = constrain_lambda(&p).unwrap();
    assert!(l.iter().all(|t| t.data().iter().all(|&v| v == 0.25)));

    let mut p = GnParams::new(1, ActiveSet::parse("g,b").unwrap());
    p.raw_lambda = [7.0, 7.0, 1.0, 3.0].map(Tensor::scalar);
    let l = constrain_lambda(&p).unwrap();
    assert_eq!(l.each_ref().map(|t| t.data()[0]), [0.0, 0.0, 0.25, 0.75]);
}

#[test]
fn constrain_all_clipped_falls_back_to_uniform() {
    let mut p = GnParams::new(2, ActiveSet::parse("n,a,b").unwrap());
    p.raw_lambda = [
        Tensor::row_vector(&[-1.0, 2.0]),
        Tensor::row_vector(&[-0.5, 2.0]),
        Tensor::row_vector(&[9.0, 9.0]),
        Tensor::row_vector(&[0.0, 0.0]),
    ];
    let l = constrain_lambda(&p).unwrap();
    let third = 1.0 / 3.0;
    assert_eq!(l[0].data(), &[third, 0.5]);
    assert_eq!(l[1].data(), &[third, 0.5]);
    assert_eq!(l[2].data(), &[0.0, 0.0]);
    assert_eq!(l[3].data(), &[third, 0.0]);
}

#[test]
fn active_set_parsing() {
    assert_eq!(ActiveSet::parse("g,b").unwrap().len(), 2);
    assert_eq!(ActiveSet::parse("nagb").unwrap(), ActiveSet::ALL);
    assert!(ActiveSet::parse("").is_err());
    assert!(ActiveSet::parse("x").is_err());
    assert!(ActiveSet::parse("g,g").is_err());
    assert_eq!(ActiveSet::parse("b,g").unwrap().to_string(), "g,b");
}

fn sample_batch() -> GraphBatch {
    let f = rows(&[
        &[0.3, -1.2, 2.0],
        &[1.1, 0.4, -0.6],
        &[-0.9, 0.8, 0.1],
        &[2.2, -0.3, 1.4],
        &[0.5, 1.7, -1.1],
    ]);
    batch_of(5, &[(0, 1), (1, 2), (2, 3), (1, 4)], f)
}

#[test]
fn one_hot_lambda_reproduces_single_normalizer() {
    let batch = sample_batch();
    let ctx = ScopeContext::for_nodes(&batch, true);
    for scope in Scope::ALL {
        let mut params = GnParams::new(3, ActiveSet::ALL);
        for s in Scope::ALL {
            params.raw_lambda[s.index()] = Tensor::full(1, 3, if s == scope { 1.0 } else { 0.0 });
        }
        let mut tape = Tape::new();
        let h = tape.constant(batch.features.clone()).unwrap();
        let vars = params.bind(&mut tape).unwrap();
        let mut r1 = RunningStats::new(3);
        let out =
            unified_gn_forward(&mut tape, h, &ctx, &vars, NormMode::Training, &mut r1).unwrap();
        let mut r2 = RunningStats::new(3);
        let single = normalize(&mut tape, h, scope, &ctx, NormMode::Training, &mut r2).unwrap();
        assert_eq!(tape.value(out), tape.value(single.output), "{scope:?}");
    }
}

#[test]
fn uniform_lambda_single_graph_substitution() {
    let batch = sample_batch();
    let ctx = ScopeContext::for_nodes(&batch, true);
    let mut params = GnParams::new(3, ActiveSet::ALL);
    params.gamma = Tensor::row_vector(&[1.5, -0.5, 2.0]);
    params.beta = Tensor::row_vector(&[0.1, 0.2, -0.3]);
    let mut tape = Tape::new();
    let h = tape.constant(batch.features.clone()).unwrap();
    let vars = params.bind(&mut tape).unwrap();
    let mut running = RunningStats::new(3);
    let out =
        unified_gn_forward(&mut tape, h, &ctx, &vars, NormMode::Training, &mut running).unwrap();

    let mut r = RunningStats::new(3);
    let n = normalize(&mut tape, h, Scope::Node, &ctx, NormMode::Training, &mut r)
        .unwrap()
        .output;
    let a = normalize(
        &mut tape,
        h,
        Scope::Adjacency,
        &ctx,
        NormMode::Training,
        &mut r,
    )
    .unwrap()
    .output;
    let g = normalize(&mut tape, h, Scope::Graph, &ctx, NormMode::Training, &mut r)
        .unwrap()
        .output;
    let (n, a, g) = (tape.value(n), tape.value(a), tape.value(g));
    let mut expected = Tensor::zeros(5, 3);
    for r in 0..5 {
        for c in 0..3 {
            let mix = 0.25 * n.get(r, c) + 0.25 * a.get(r, c) + 0.5 * g.get(r, c);
            expected.set(r, c, params.gamma.get(0, c) * mix + params.beta.get(0, c));
        }
    }
    assert!(close(tape.value(out).data(), expected.data(), 1e-12));
}

#[test]
fn zero_gamma_yields_beta() {
    let batch = sample_batch();
    let ctx = ScopeContext::for_nodes(&batch, true);
    let mut params = GnParams::new(3, ActiveSet::ALL);
    params.gamma = Tensor::zeros(1, 3);
    params.beta = Tensor::row_vector(&[0.5, -1.0, 2.0]);
    let mut tape = Tape::new();
    let h = tape.constant(batch.features.clone()).unwrap();
    let vars = params.bind(&mut tape).unwrap();
    let mut running = RunningStats::new(3);
    let out =
        unified_gn_forward(&mut tape, h, &ctx, &vars, NormMode::Training, &mut running).unwrap();
    for r in 0..5 {
        assert_eq!(tape.value(out).row(r), params.beta.data());
    }
}

#[test]
fn unified_gradients_match_finite_differences() {
    let batch = sample_batch();
    let ctx = ScopeContext::for_nodes(&batch, true);
    let inputs = vec![
        batch.features.clone(),
        Tensor::row_vector(&[0.9, 0.2, 1.3]),
        Tensor::row_vector(&[0.4, -0.5, 0.7]),
        Tensor::row_vector(&[1.2, 0.8, 0.3]),
        Tensor::row_vector(&[0.6, 1.1, 0.5]),
        Tensor::row_vector(&[1.3, -0.7, 0.9]),
        Tensor::row_vector(&[0.2, 0.1, -0.4]),
    ];
    let weights = Tensor::new(
        5,
        3,
        (0..15)
            .map(|i| ((i * 37) % 11) as f64 / 5.0 - 1.0)
            .collect(),
    )
    .unwrap();
    let report = gradient_check(&inputs, 1e-6, |tape, v| {
        let vars = GnVars {
            raw_lambda: [Some(v[1]), Some(v[2]), Some(v[3]), Some(v[4])],
            gamma: v[5],
            beta: v[6],
        };
        let mut running = RunningStats::new(3);
        let out = unified_gn_forward(tape, v[0], &ctx, &vars, NormMode::Training, &mut running)?;
        let w = tape.constant(weights.clone())?;
        let p = tape.mul(out, w)?;
        tape.sum_all(p)
    })
    .unwrap();
    assert!(report.passes(1e-5), "{report:?}");
    // the clipped entry at -0.5 contributes a zero gradient that is also checked
    assert_eq!(report.skipped, 0);
}

#[test]
fn batch_wise_empty_input_is_a_no_op() {
    let mut tape = Tape::new();
    let h = tape.constant(Tensor::zeros(0, 3)).unwrap();
    let mut running = RunningStats::new(3);
    let out = batch_wise_normalize(&mut tape, h, NormMode::Training, &mut running).unwrap();
    assert_eq!(tape.shape(out.output), (0, 3));
    assert_eq!(running.update_count, 0);
}
