//! Optimizers, the training loop, evaluation and checkpoints.

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{Error, Result};
use crate::graph::{Graph, GraphBatch, Labels};
use crate::layers::{Activation, Metrics, MetricsAccumulator, NormKind, Targets, TaskKind};
use crate::model::{Arch, LambdaRow, Model, ModelConfig};
use crate::norm::NormMode;
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// Everything that determines a training run besides the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch: Arch,
    pub depth: usize,
    pub hidden: usize,
    pub norm: NormKind,
    pub heads: usize,
    pub residual: bool,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub epochs: usize,
    /// Graphs per batch.
    pub batch_size: usize,
    pub seed: u64,
    /// Stop after this many epochs without a better validation metric.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            arch: Arch::Gcn,
            depth: 4,
            hidden: 16,
            norm: NormKind::Unified(crate::norm::ActiveSet::ALL),
            heads: 1,
            residual: true,
            activation: Activation::Relu,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            epochs: 50,
            batch_size: 8,
            seed: 0,
            patience: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.depth == 0 {
            return bad("depth must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.adam_epsilon <= 0.0 {
            return bad("Adam epsilon must be positive");
        }
        Ok(())
    }
}

/// Optimizer state for every tensor of a [`ParamStore`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub steps: u64,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Optimizer {
    pub fn sgd(learning_rate: f64) -> Self {
        Optimizer {
            kind: OptimizerKind::Sgd,
            learning_rate,
            beta1: 0.0,
            beta2: 0.0,
            epsilon: 0.0,
            steps: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn adam(learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Optimizer {
            kind: OptimizerKind::Adam,
            beta1,
            beta2,
            epsilon,
            ..Optimizer::sgd(learning_rate)
        }
    }

    pub fn from_config(config: &TrainConfig) -> Self {
        match config.optimizer {
            OptimizerKind::Sgd => Optimizer::sgd(config.learning_rate),
            OptimizerKind::Adam => Optimizer::adam(
                config.learning_rate,
                config.beta1,
                config.beta2,
                config.adam_epsilon,
            ),
        }
    }

    /// Applies one update. `grads` is indexed like the store. Nothing is
    /// changed if any gradient is not finite.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != store.len() {
            return Err(Error::shape(
                "optimizer_step",
                format!("{} gradients for {} parameters", grads.len(), store.len()),
            ));
        }
        for (id, g) in store.ids().zip(grads) {
            if g.shape() != store.get(id).shape() {
                return Err(Error::shape(
                    "optimizer_step",
                    format!("gradient of {}", store.name(id)),
                ));
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(store.name(id).to_string()));
            }
        }
        if self.first.is_empty() {
            self.first = store
                .values()
                .iter()
                .map(|p| Tensor::zeros(p.rows(), p.cols()))
                .collect();
            self.second = self.first.clone();
        }
        self.steps += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (id, g) in store.ids().zip(grads) {
                    for (p, &g) in store.get_mut(id).data_mut().iter_mut().zip(g.data()) {
                        *p -= lr * g;
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2) = (self.beta1, self.beta2);
                let c1 = 1.0 - b1.powi(self.steps as i32);
                let c2 = 1.0 - b2.powi(self.steps as i32);
                for (k, (id, g)) in store.ids().zip(grads).enumerate() {
                    let m = self.first[k].data_mut();
                    let v = self.second[k].data_mut();
                    let p = store.get_mut(id).data_mut();
                    for i in 0..p.len() {
                        m[i] = b1 * m[i] + (1.0 - b1) * g.data()[i];
                        v[i] = b2 * v[i] + (1.0 - b2) * g.data()[i] * g.data()[i];
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        p[i] -= lr * m_hat / (v_hat.sqrt() + self.epsilon);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Graphs of the three splits.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub train: Vec<Graph>,
    pub val: Vec<Graph>,
    pub test: Vec<Graph>,
}

impl Dataset {
    fn all(&self) -> impl Iterator<Item = &Graph> {
        self.train.iter().chain(&self.val).chain(&self.test)
    }

    /// The task implied by the labels of the first training graph. When
    /// several label kinds are present the order is node, link, graph class,
    /// graph target.
    pub fn task(&self) -> Result<TaskKind> {
        let g = self
            .train
            .first()
            .ok_or_else(|| Error::Validation("training split is empty".into()))?;
        task_of(g.labels())
    }

    /// Number of classes (max label + 1) for classification, else 1.
    pub fn output_dim(&self, task: TaskKind) -> Result<usize> {
        let max = match task {
            TaskKind::NodeClassify => self
                .all()
                .filter_map(|g| g.labels().node.as_ref())
                .flat_map(|l| l.iter().copied())
                .max(),
            TaskKind::GraphClassify => self.all().filter_map(|g| g.labels().graph_class).max(),
            TaskKind::LinkPredict | TaskKind::GraphRegress => return Ok(1),
        };
        max.map(|m| (m + 1).max(2))
            .ok_or_else(|| Error::Validation(format!("no labels for task {}", task.as_str())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.train.is_empty() || self.val.is_empty() || self.test.is_empty() {
            return Err(Error::Validation(
                "train, val and test splits must all be nonempty".into(),
            ));
        }
        let first = &self.train[0];
        for (k, g) in self.all().enumerate() {
            if g.feature_dim() != first.feature_dim()
                || g.edge_feature_dim() != first.edge_feature_dim()
            {
                return Err(Error::Validation(format!(
                    "graph {k} has different feature widths"
                )));
            }
        }
        Ok(())
    }
}

fn task_of(labels: &Labels) -> Result<TaskKind> {
    if labels.node.is_some() {
        Ok(TaskKind::NodeClassify)
    } else if labels.links.is_some() {
        Ok(TaskKind::LinkPredict)
    } else if labels.graph_class.is_some() {
        Ok(TaskKind::GraphClassify)
    } else if labels.graph_target.is_some() {
        Ok(TaskKind::GraphRegress)
    } else {
        Err(Error::Validation("graphs carry no labels".into()))
    }
}

/// Model configuration for `config` on `data`.
pub fn model_config(config: &TrainConfig, data: &Dataset) -> Result<ModelConfig> {
    let task = data.task()?;
    let first = &data.train[0];
    if config.arch.uses_edges() && first.edge_feature_dim().is_none() {
        return Err(Error::Validation(format!(
            "arch {} needs edge features, dataset has none",
            config.arch
        )));
    }
    Ok(ModelConfig {
        arch: config.arch,
        task,
        depth: config.depth,
        hidden: config.hidden,
        in_dim: first.feature_dim(),
        edge_in_dim: first.edge_feature_dim(),
        out_dim: data.output_dim(task)?,
        norm: config.norm,
        heads: config.heads,
        residual: config.residual,
        activation: config.activation,
    })
}

/// Metrics after one epoch; epoch 0 is the untrained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: Metrics,
    pub val: Metrics,
    pub lambda: Vec<LambdaRow>,
}

/// Outcome of a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seed: u64,
    pub task: TaskKind,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Test metrics of the best-validation model.
    pub test: Metrics,
    /// Gate weights of the best-validation model.
    pub lambda: Vec<LambdaRow>,
    /// Set when training stopped on a non-finite loss or gradient.
    pub diverged: Option<String>,
    /// Excluded from determinism comparisons.
    pub wall_clock_secs: f64,
}

impl MetricsReport {
    /// The report with wall-clock time zeroed, for comparing runs.
    pub fn without_timing(&self) -> MetricsReport {
        MetricsReport {
            wall_clock_secs: 0.0,
            ..self.clone()
        }
    }
}

/// Model and report of a finished run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub report: MetricsReport,
}

fn batches<'a>(graphs: &'a [Graph], order: &[usize], size: usize) -> Vec<Vec<&'a Graph>> {
    order
        .chunks(size)
        .map(|c| c.iter().map(|&i| &graphs[i]).collect())
        .collect()
}

/// Inference-mode metrics of `model` on `graphs`. Parameters and running
/// statistics are not changed.
pub fn evaluate(model: &Model, graphs: &[Graph], batch_size: usize) -> Result<Metrics> {
    let task = model.config.task;
    let mut acc = MetricsAccumulator::new(task);
    let order: Vec<usize> = (0..graphs.len()).collect();
    for chunk in batches(graphs, &order, batch_size.max(1)) {
        let batch = GraphBatch::concat(&chunk)?;
        let ctx = model.context(&batch)?;
        let mut tape = Tape::inference();
        let pred = model.predict(&mut tape, &batch, &ctx)?;
        let targets = Targets::from_labels(task, &batch.labels, model.config.out_dim)?;
        let loss = crate::layers::task_loss(&mut tape, pred, &targets)?;
        acc.add(tape.value(loss).data()[0], tape.value(pred), &targets)?;
    }
    Ok(acc.finish())
}

fn better(task: TaskKind, candidate: f64, best: f64) -> bool {
    if task.higher_is_better() {
        candidate > best
    } else {
        candidate < best
    }
}

/// One pass over the training split; returns the training metrics.
fn train_epoch(
    model: &mut Model,
    optimizer: &mut Optimizer,
    graphs: &[Graph],
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Metrics> {
    let task = model.config.task;
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    order.shuffle(rng);
    let mut acc = MetricsAccumulator::new(task);
    for chunk in batches(graphs, &order, batch_size) {
        let batch = GraphBatch::concat(&chunk)?;
        let ctx = model.context(&batch)?;
        let mut tape = Tape::new();
        let (pred, vars) = model.forward(&mut tape, &batch, &ctx, NormMode::Training)?;
        let targets = Targets::from_labels(task, &batch.labels, model.config.out_dim)?;
        let loss = crate::layers::task_loss(&mut tape, pred, &targets)?;
        tape.backward(loss)?;
        let grads: Vec<Tensor> = vars
            .iter()
            .zip(model.store.values())
            .map(|(&v, p)| {
                tape.grad(v)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols()))
            })
            .collect();
        acc.add(tape.value(loss).data()[0], tape.value(pred), &targets)?;
        optimizer.step(&mut model.store, &grads)?;
    }
    Ok(acc.finish())
}

/// Trains a fresh model. The best-validation model (ties to the earlier
/// epoch, epoch 0 included) is returned and used for the test metrics.
pub fn train(data: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    data.validate()?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = Model::new(model_config(config, data)?, &mut init_rng)?;
    train_model(model, data, config)
}

/// Trains `model` in place of a freshly initialized one.
pub fn train_model(mut model: Model, data: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    data.validate()?;
    let started = Instant::now();
    let task = model.config.task;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
    shuffle_rng.set_stream(1);
    let mut optimizer = Optimizer::from_config(config);

    let initial = EpochRecord {
        epoch: 0,
        train: evaluate(&model, &data.train, config.batch_size)?,
        val: evaluate(&model, &data.val, config.batch_size)?,
        lambda: model.lambda_distribution()?,
    };
    let mut best = (0, initial.val.primary(), model.clone());
    let mut epochs = vec![initial];
    let mut diverged = None;

    for epoch in 1..=config.epochs {
        let mut trial = model.clone();
        let step = train_epoch(
            &mut trial,
            &mut optimizer,
            &data.train,
            config.batch_size,
            &mut shuffle_rng,
        )
        .and_then(|train| {
            if !train.loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: "training loss is not finite".into(),
                });
            }
            let val = evaluate(&trial, &data.val, config.batch_size)?;
            Ok((train, val))
        });
        let (train, val) = match step {
            Ok(r) => r,
            Err(
                e
                @ (Error::NonFinite { .. } | Error::NonFiniteGradient(_) | Error::Diverged { .. }),
            ) => {
                diverged = Some(format!("epoch {epoch}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        model = trial;
        let record = EpochRecord {
            epoch,
            train,
            val,
            lambda: model.lambda_distribution()?,
        };
        if better(task, record.val.primary(), best.1) {
            best = (epoch, record.val.primary(), model.clone());
        }
        epochs.push(record);
        if let Some(p) = config.patience {
            if epoch - best.0 >= p {
                break;
            }
        }
    }

    let best_model = best.2;
    let report = MetricsReport {
        seed: config.seed,
        task,
        epochs,
        best_epoch: best.0,
        test: evaluate(&best_model, &data.test, config.batch_size)?,
        lambda: best_model.lambda_distribution()?,
        diverged,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome {
        model: best_model,
        report,
    })
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    train_config: Option<TrainConfig>,
    model: Model,
}

/// Writes the model, its running statistics and the training config as JSON.
pub fn save_checkpoint(path: &Path, model: &Model, config: Option<&TrainConfig>) -> Result<()> {
    let ck = Checkpoint {
        version: CHECKPOINT_VERSION,
        train_config: config.cloned(),
        model: model.clone(),
    };
    let text = serde_json::to_string(&ck)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint written by [`save_checkpoint`].
pub fn load_checkpoint(path: &Path) -> Result<(Model, Option<TrainConfig>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck: Checkpoint = serde_json::from_str(&text)?;
    if ck.version != CHECKPOINT_VERSION {
        return Err(Error::Validation(format!(
            "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
            ck.version
        )));
    }
    ck.model.config.validate()?;
    ck.model.store.check_finite()?;
    Ok((ck.model, ck.train_config))
}

/// `{:.16e}` prints 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub const METRICS_CSV_HEADER: &str = "epoch,split,loss,balanced_accuracy,accuracy,f1,mae";
pub const LAMBDA_CSV_HEADER: &str = "layer,stream,lambda_n,lambda_a,lambda_g,lambda_b";

fn metrics_row(epoch: &str, split: &str, m: &Metrics) -> String {
    format!(
        "{epoch},{split},{},{},{},{},{}",
        fmt_f64(m.loss),
        fmt_opt(m.balanced_accuracy),
        fmt_opt(m.accuracy),
        fmt_opt(m.f1),
        fmt_opt(m.mae)
    )
}

/// Per-epoch train and val rows, then a `test` row for the best model.
pub fn metrics_csv(report: &MetricsReport) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for r in &report.epochs {
        out += &metrics_row(&r.epoch.to_string(), "train", &r.train);
        out.push('\n');
        out += &metrics_row(&r.epoch.to_string(), "val", &r.val);
        out.push('\n');
    }
    out += &metrics_row(&report.best_epoch.to_string(), "test", &report.test);
    out.push('\n');
    out
}

/// One row per normalization slot.
pub fn lambda_csv(rows: &[LambdaRow]) -> String {
    let mut out = String::from(LAMBDA_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let cols: Vec<String> = r.lambda.iter().map(|&x| fmt_f64(x)).collect();
        out += &format!("{},{},{}\n", r.layer, r.stream, cols.join(","));
    }
    out
}

/// Gate weights of every epoch: `epoch` followed by the lambda columns.
pub fn lambda_trajectory_csv(report: &MetricsReport) -> String {
    let mut out = format!("epoch,{LAMBDA_CSV_HEADER}\n");
    for r in &report.epochs {
        for row in &r.lambda {
            let cols: Vec<String> = row.lambda.iter().map(|&x| fmt_f64(x)).collect();
            out += &format!(
                "{},{},{},{}\n",
                r.epoch,
                row.layer,
                row.stream,
                cols.join(",")
            );
        }
    }
    out
}

/// Single-split metrics as CSV.
pub fn eval_csv(split: &str, m: &Metrics) -> String {
    format!(
        "split,loss,balanced_accuracy,accuracy,f1,mae\n{split},{},{},{},{},{}\n",
        fmt_f64(m.loss),
        fmt_opt(m.balanced_accuracy),
        fmt_opt(m.accuracy),
        fmt_opt(m.f1),
        fmt_opt(m.mae)
    )
}

/// Per-layer averaged gate weights; fails on a model without unified norm.
pub fn extract_lambda_distribution(model: &Model) -> Result<Vec<LambdaRow>> {
    if !model.has_unified_norm() {
        return Err(Error::Validation(format!(
            "model uses norm '{}', which has no gate weights",
            model.config.norm
        )));
    }
    model.lambda_distribution()
}
