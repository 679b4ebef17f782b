mod common;

use graphnorm::graph::{sbm_generate, SbmConfig, SbmTask};
use graphnorm::layers::NormKind;
use graphnorm::model::Arch;
use graphnorm::params::ParamStore;
use graphnorm::train::{
    extract_lambda_distribution, load_checkpoint, save_checkpoint, train, Dataset, Optimizer,
    OptimizerKind, TrainConfig,
};
use graphnorm::{Error, Tensor};

fn dataset(task: SbmTask, graphs: usize, seed: u64) -> Dataset {
    let g = sbm_generate(&SbmConfig {
        num_graphs: graphs,
        nodes_min: 10,
        nodes_max: 16,
        seed,
        task,
        ..SbmConfig::default()
    })
    .unwrap();
    let a = graphs * 8 / 10;
    let b = a + graphs / 10;
    Dataset {
        train: g[..a].to_vec(),
        val: g[a..b].to_vec(),
        test: g[b..].to_vec(),
    }
}

fn quick(norm: &str, epochs: usize) -> TrainConfig {
    TrainConfig {
        norm: norm.parse().unwrap(),
        epochs,
        depth: 2,
        hidden: 8,
        batch_size: 4,
        ..TrainConfig::default()
    }
}

fn store_of(values: &[f64]) -> ParamStore {
    let mut s = ParamStore::new();
    s.add("p", Tensor::row_vector(values));
    s
}

#[test]
fn sgd_step_example() {
    let mut s = store_of(&[1.0]);
    Optimizer::sgd(0.1)
        .step(&mut s, &[Tensor::row_vector(&[2.0])])
        .unwrap();
    assert!((s.values()[0].data()[0] - 0.8).abs() < 1e-15);
}

#[test]
fn zero_gradient_leaves_parameters() {
    for mut opt in [Optimizer::sgd(0.1), Optimizer::adam(1e-3, 0.9, 0.999, 1e-8)] {
        let mut s = store_of(&[1.5, -2.0]);
        opt.step(&mut s, &[Tensor::zeros(1, 2)]).unwrap();
        assert_eq!(s.values()[0].data(), &[1.5, -2.0]);
    }
}

#[test]
fn adam_first_step_moves_by_learning_rate() {
    let mut s = store_of(&[0.0]);
    let mut opt = Optimizer::adam(1e-3, 0.9, 0.999, 1e-8);
    opt.step(&mut s, &[Tensor::row_vector(&[1.0])]).unwrap();
    let moved = -s.values()[0].data()[0];
    assert!((moved - 1e-3).abs() < 1e-10, "{moved}");
}

#[test]
fn non_finite_gradient_aborts_the_step() {
    let mut s = store_of(&[1.0]);
    let err = Optimizer::sgd(0.1)
        .step(&mut s, &[Tensor::row_vector(&[f64::NAN])])
        .unwrap_err();
    assert!(matches!(err, Error::NonFiniteGradient(ref name) if name == "p"));
    assert_eq!(s.values()[0].data(), &[1.0]);
}

#[test]
fn zero_epochs_reports_initial_metrics_only() {
    let data = dataset(SbmTask::NodeCluster, 20, 1);
    let out = train(&data, &quick("gn", 0)).unwrap();
    assert_eq!(out.report.epochs.len(), 1);
    assert_eq!(out.report.best_epoch, 0);
    assert!(out.report.diverged.is_none());
}

#[test]
fn same_seed_gives_identical_reports() {
    let data = dataset(SbmTask::NodeCluster, 20, 2);
    let a = train(&data, &quick("gn", 3)).unwrap();
    let b = train(&data, &quick("gn", 3)).unwrap();
    assert_eq!(a.report.without_timing(), b.report.without_timing());
    assert_eq!(a.model, b.model);
    let c = train(
        &data,
        &TrainConfig {
            seed: 9,
            ..quick("gn", 3)
        },
    )
    .unwrap();
    assert_ne!(a.report.without_timing(), c.report.without_timing());
}

#[test]
fn lambda_stays_on_the_simplex() {
    let data = dataset(SbmTask::NodeCluster, 20, 3);
    let out = train(
        &data,
        &TrainConfig {
            learning_rate: 0.05,
            ..quick("gn:n,g,b", 4)
        },
    )
    .unwrap();
    for record in &out.report.epochs {
        for row in &record.lambda {
            assert!((row.lambda.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert_eq!(row.lambda[1], 0.0);
        }
    }
}

#[test]
fn huge_learning_rate_diverges_with_partial_report() {
    let data = dataset(SbmTask::NodeCluster, 20, 4);
    let config = TrainConfig {
        optimizer: OptimizerKind::Sgd,
        learning_rate: 1e300,
        ..quick("none", 5)
    };
    let out = train(&data, &config).unwrap();
    assert!(
        out.report.diverged.is_some(),
        "{:?}",
        out.report.epochs.len()
    );
    assert!(out.report.epochs.len() < 6);
}

#[test]
fn lambda_distribution_at_initialization() {
    let data = dataset(SbmTask::NodeCluster, 20, 5);
    let all = train(&data, &quick("gn", 0)).unwrap();
    for row in extract_lambda_distribution(&all.model).unwrap() {
        assert_eq!(row.lambda, [0.25; 4]);
    }
    let gb = train(&data, &quick("gn:g,b", 0)).unwrap();
    for row in extract_lambda_distribution(&gb.model).unwrap() {
        assert_eq!(row.lambda, [0.0, 0.0, 0.5, 0.5]);
    }
    let none = train(&data, &quick("g", 0)).unwrap();
    assert!(extract_lambda_distribution(&none.model).is_err());
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let data = dataset(SbmTask::NodeCluster, 20, 6);
    let config = quick("gn", 2);
    let out = train(&data, &config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    save_checkpoint(&path, &out.model, Some(&config)).unwrap();
    let (model, cfg) = load_checkpoint(&path).unwrap();
    assert_eq!(model, out.model);
    assert_eq!(cfg, Some(config));
}

#[test]
fn every_arch_and_task_trains() {
    let tasks = [
        SbmTask::NodeCluster,
        SbmTask::GraphParity,
        SbmTask::GraphRegression,
        SbmTask::Link,
    ];
    for (k, task) in tasks.into_iter().enumerate() {
        let data = dataset(task, 20, 10 + k as u64);
        for arch in [Arch::Gcn, Arch::Gat, Arch::GatedGcn] {
            for norm in ["none", "a", "gn"] {
                let config = TrainConfig {
                    arch,
                    heads: 2,
                    ..quick(norm, 2)
                };
                let out =
                    train(&data, &config).unwrap_or_else(|e| panic!("{task:?} {arch} {norm}: {e}"));
                assert!(out.report.diverged.is_none());
                let m = &out.report.test;
                assert!(m.loss.is_finite());
                assert!(m.primary().is_finite());
            }
        }
    }
}

#[test]
fn training_loss_decreases_for_every_norm() {
    let data = dataset(SbmTask::NodeCluster, 40, 7);
    for norm in ["none", "n", "a", "g", "b", "gn", "gn:g,b"] {
        let out = train(
            &data,
            &TrainConfig {
                learning_rate: 1e-2,
                ..quick(norm, 8)
            },
        )
        .unwrap();
        let first = out.report.epochs[0].train.loss;
        let last = out.report.epochs.last().unwrap().train.loss;
        assert!(last < first, "{norm}: {first} -> {last}");
        assert_eq!(NormKind::to_string(&norm.parse().unwrap()), norm);
    }
}

#[test]
fn gatedgcn_requires_edge_features() {
    let mut data = dataset(SbmTask::NodeCluster, 20, 8);
    let strip = |gs: &mut Vec<graphnorm::graph::Graph>| {
        *gs = gs
            .iter()
            .map(|g| {
                graphnorm::graph::Graph::new(
                    g.num_nodes(),
                    g.edges().to_vec(),
                    g.features().clone(),
                    None,
                    g.labels().clone(),
                )
                .unwrap()
            })
            .collect()
    };
    strip(&mut data.train);
    strip(&mut data.val);
    strip(&mut data.test);
    let err = train(
        &data,
        &TrainConfig {
            arch: Arch::GatedGcn,
            ..quick("gn", 1)
        },
    )
    .unwrap_err();
    assert!(matches!(err, Error::Validation(_)), "{err}");
}
