use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use graphnorm::autodiff::Tape;
use graphnorm::graph::{Graph, GraphBatch, Labels};
use graphnorm::layers::{gat_attention, Activation, GatLayer, MessageContext, NormKind, TaskKind};
use graphnorm::model::{Arch, Model, ModelConfig};
use graphnorm::norm::{constrain_lambda, graph_wise_normalize, ActiveSet, GnParams, Scope};
use graphnorm::params::ParamStore;
use graphnorm::Tensor;

fn graph_strategy(d: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>, Vec<f64>)> {
    (2usize..8).prop_flat_map(move |n| {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| ((u + 1)..n).map(move |v| (u, v)))
            .collect();
        let m = pairs.len();
        (
            Just(n),
            proptest::sample::subsequence(pairs, 0..=m),
            proptest::collection::vec(-3.0f64..3.0, n * d),
        )
    })
}

fn graph(n: usize, edges: Vec<(usize, usize)>, features: Vec<f64>, d: usize) -> Graph {
    let e = Tensor::full(edges.len(), 1, 1.0);
    Graph::new(
        n,
        edges,
        Tensor::new(n, d, features).unwrap(),
        Some(e),
        Labels::default(),
    )
    .unwrap()
}

fn predict(model: &Model, g: &Graph) -> Tensor {
    let batch = GraphBatch::concat(&[g]).unwrap();
    let ctx = model.context(&batch).unwrap();
    let mut tape = Tape::inference();
    let out = model.predict(&mut tape, &batch, &ctx).unwrap();
    tape.value(out).clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn constrained_weights_form_a_simplex(
        raw in proptest::collection::vec(-2.0f64..2.0, 12),
        mask in 1u8..16,
    ) {
        let scopes: Vec<Scope> = Scope::ALL.into_iter().filter(|s| mask & (1 << s.index()) != 0).collect();
        let active = ActiveSet::new(&scopes).unwrap();
        let mut params = GnParams::new(3, active);
        for (u, t) in params.raw_lambda.iter_mut().enumerate() {
            *t = Tensor::row_vector(&raw[u * 3..u * 3 + 3]);
        }
        let lambda = constrain_lambda(&params).unwrap();
        for c in 0..3 {
            let mut sum = 0.0;
            for s in Scope::ALL {
                let w = lambda[s.index()].data()[c];
                prop_assert!(w >= 0.0);
                if !active.contains(s) {
                    prop_assert_eq!(w, 0.0);
                }
                sum += w;
            }
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn graph_wise_output_is_centered((n, edges, x) in graph_strategy(3)) {
        let g = graph(n, edges, x, 3);
        let batch = GraphBatch::concat(&[&g]).unwrap();
        let mut tape = Tape::inference();
        let h = tape.constant(batch.features.clone()).unwrap();
        let out = graph_wise_normalize(&mut tape, h, &batch.segment).unwrap();
        let y = tape.value(out.output);
        for c in 0..3 {
            let mean: f64 = (0..n).map(|r| y.get(r, c)).sum::<f64>() / n as f64;
            prop_assert!(mean.abs() < 1e-12);
        }
    }

    #[test]
    fn attention_coefficients_sum_to_one((n, edges, x) in graph_strategy(2), seed in 0u64..1000) {
        let g = graph(n, edges, x, 2);
        let batch = GraphBatch::concat(&[&g]).unwrap();
        let ctx = MessageContext::new(&batch, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let layer = GatLayer::init(&mut store, "gat", 2, 1, NormKind::None, &mut rng).unwrap();
        let mut tape = Tape::new();
        let vars = store.bind(&mut tape).unwrap();
        let layer = layer.map(|id| vars[id.0]);
        let h = tape.constant(batch.features.clone()).unwrap();
        let alpha = gat_attention(&mut tape, h, &ctx, &layer.heads[0], 0.2).unwrap();
        let alpha = tape.value(alpha);
        let owner = ctx.nodes.neighbors.owner();
        let mut sums = vec![0.0; n];
        for (k, &v) in owner.ids().iter().enumerate() {
            prop_assert!(alpha.data()[k] > 0.0);
            sums[v] += alpha.data()[k];
        }
        for s in sums {
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn relabeling_nodes_permutes_predictions(
        (n, edges, x) in graph_strategy(3),
        seed in 0u64..1000,
        arch in prop_oneof![Just(Arch::Gcn), Just(Arch::Gat), Just(Arch::GatedGcn)],
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = ModelConfig {
            arch,
            task: TaskKind::NodeClassify,
            depth: 2,
            hidden: 4,
            in_dim: 3,
            edge_in_dim: Some(1),
            out_dim: 2,
            norm: "gn".parse().unwrap(),
            heads: 2,
            residual: true,
            activation: Activation::Relu,
        };
        let model = Model::new(config, &mut rng).unwrap();
        let original = graph(n, edges.clone(), x.clone(), 3);

        // new label of old node v is (v + 1) % n
        let relabel = |v: usize| (v + 1) % n;
        let mut px = vec![0.0; n * 3];
        for v in 0..n {
            px[relabel(v) * 3..relabel(v) * 3 + 3].copy_from_slice(&x[v * 3..v * 3 + 3]);
        }
        let pe = edges.iter().map(|&(u, v)| (relabel(u), relabel(v))).collect();
        let permuted = graph(n, pe, px, 3);

        let a = predict(&model, &original);
        let b = predict(&model, &permuted);
        for v in 0..n {
            for c in 0..2 {
                prop_assert!((a.get(v, c) - b.get(relabel(v), c)).abs() < 1e-9);
            }
        }
    }
}
