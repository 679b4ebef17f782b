use serde::{Deserialize, Serialize};

use super::TaskKind;
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::BatchLabels;
use crate::tensor::Tensor;

/// Ground truth of one batch for a task.
#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    /// Link labels as 0.0 or 1.0.
    Binary(Vec<f64>),
    Values(Vec<f64>),
}

impl Targets {
    /// Extracts the labels `kind` needs, checking class ids.
    pub fn from_labels(kind: TaskKind, labels: &BatchLabels, num_classes: usize) -> Result<Self> {
        let missing =
            || Error::Validation(format!("batch has no labels for task {}", kind.as_str()));
        let targets = match kind {
            TaskKind::NodeClassify => Targets::Classes(labels.node.clone().ok_or_else(missing)?),
            TaskKind::GraphClassify => {
                Targets::Classes(labels.graph_class.clone().ok_or_else(missing)?)
            }
            TaskKind::LinkPredict => Targets::Binary(
                labels
                    .links
                    .as_ref()
                    .ok_or_else(missing)?
                    .iter()
                    .map(|l| if l.label { 1.0 } else { 0.0 })
                    .collect(),
            ),
            TaskKind::GraphRegress => {
                Targets::Values(labels.graph_target.clone().ok_or_else(missing)?)
            }
        };
        if let Targets::Classes(c) = &targets {
            if let Some(&bad) = c.iter().find(|&&c| c >= num_classes) {
                return Err(Error::Validation(format!(
                    "label {bad} out of range for {num_classes} classes"
                )));
            }
        }
        Ok(targets)
    }

    pub fn len(&self) -> usize {
        match self {
            Targets::Classes(c) => c.len(),
            Targets::Binary(v) | Targets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_rows(
    op: &'static str,
    tape: &Tape,
    x: Var,
    rows: usize,
    cols: Option<usize>,
) -> Result<()> {
    let (r, c) = tape.shape(x);
    if r != rows || cols.is_some_and(|want| want != c) {
        return Err(Error::shape(
            op,
            format!("predictions {r}x{c} for {rows} targets"),
        ));
    }
    Ok(())
}

/// Mean softmax cross-entropy of `logits` (`n x classes`).
pub fn cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    check_rows("cross_entropy", tape, logits, labels.len(), None)?;
    let classes = tape.shape(logits).1;
    let mut one_hot = Tensor::zeros(labels.len(), classes);
    for (r, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::Validation(format!(
                "label {y} out of range for {classes} classes"
            )));
        }
        one_hot.set(r, y, 1.0);
    }
    let max = tape.row_max_constant(logits)?;
    let shifted = tape.sub(logits, max)?;
    let exp = tape.exp(shifted)?;
    let total = tape.row_sum(exp)?;
    let log_total = tape.ln(total)?;
    let one_hot = tape.constant(one_hot)?;
    let picked = tape.mul(shifted, one_hot)?;
    let picked = tape.row_sum(picked)?;
    let per_row = tape.sub(log_total, picked)?;
    tape.mean_all(per_row)
}

/// Mean binary cross-entropy of `n x 1` logits, `softplus(x) - y x`.
pub fn bce_with_logits(tape: &mut Tape, logits: Var, targets: &[f64]) -> Result<Var> {
    check_rows("bce_with_logits", tape, logits, targets.len(), Some(1))?;
    let y = tape.constant(Tensor::column_vector(targets))?;
    let sp = tape.softplus(logits)?;
    let xy = tape.mul(logits, y)?;
    let per_row = tape.sub(sp, xy)?;
    tape.mean_all(per_row)
}

/// Mean absolute error of `n x 1` predictions.
pub fn mae_loss(tape: &mut Tape, pred: Var, targets: &[f64]) -> Result<Var> {
    check_rows("mae_loss", tape, pred, targets.len(), Some(1))?;
    let y = tape.constant(Tensor::column_vector(targets))?;
    let diff = tape.sub(pred, y)?;
    let abs = tape.abs(diff)?;
    tape.mean_all(abs)
}

/// The training loss matching the target kind.
pub fn task_loss(tape: &mut Tape, predictions: Var, targets: &Targets) -> Result<Var> {
    match targets {
        Targets::Classes(c) => cross_entropy(tape, predictions, c),
        Targets::Binary(y) => bce_with_logits(tape, predictions, y),
        Targets::Values(y) => mae_loss(tape, predictions, y),
    }
}

/// Index of the largest entry of each row; ties go to the lowest index.
pub fn argmax_rows(x: &Tensor) -> Vec<usize> {
    (0..x.rows())
        .map(|r| {
            let row = x.row(r);
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Mean over the classes present in `truth` of the per-class recall.
pub fn balanced_accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    let classes = truth.iter().copied().max().map_or(0, |m| m + 1);
    let mut hits = vec![0usize; classes];
    let mut totals = vec![0usize; classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        totals[t] += 1;
        if p == t {
            hits[t] += 1;
        }
    }
    let present: Vec<f64> = hits
        .iter()
        .zip(&totals)
        .filter(|(_, &n)| n > 0)
        .map(|(&h, &n)| h as f64 / n as f64)
        .collect();
    if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    }
}

/// Fraction of correct predictions, which weights each class by its size.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}

/// F1 score of the positive class; 0 when there are no true positives.
pub fn f1_score(predicted: &[bool], truth: &[bool]) -> f64 {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    if tp == 0 {
        return 0.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}

pub fn mean_absolute_error(pred: &[f64], truth: &[f64]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    pred.iter()
        .zip(truth)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / truth.len() as f64
}

/// Loss and task metrics over one or more batches.
///
/// Metrics not defined for the task are `None`. For link prediction,
/// `accuracy` is the fraction of pairs classified correctly at logit 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub loss: f64,
    pub balanced_accuracy: Option<f64>,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub mae: Option<f64>,
}

impl Metrics {
    /// Balanced accuracy, F1 or MAE, by task.
    pub fn primary(&self) -> f64 {
        self.balanced_accuracy
            .or(self.f1)
            .or(self.mae)
            .unwrap_or(f64::NAN)
    }
}

/// Collects predictions batch by batch and computes [`Metrics`] at the end.
#[derive(Clone, Debug)]
pub struct MetricsAccumulator {
    kind: TaskKind,
    loss_sum: f64,
    count: usize,
    classes: Vec<(usize, usize)>,
    binary: Vec<(bool, bool)>,
    values: Vec<(f64, f64)>,
}

impl MetricsAccumulator {
    pub fn new(kind: TaskKind) -> Self {
        MetricsAccumulator {
            kind,
            loss_sum: 0.0,
            count: 0,
            classes: Vec::new(),
            binary: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Adds one batch; `loss` is that batch's mean loss.
    pub fn add(&mut self, loss: f64, predictions: &Tensor, targets: &Targets) -> Result<()> {
        if predictions.rows() != targets.len() {
            return Err(Error::shape(
                "metrics",
                format!(
                    "{} prediction rows for {} targets",
                    predictions.rows(),
                    targets.len()
                ),
            ));
        }
        self.loss_sum += loss * targets.len() as f64;
        self.count += targets.len();
        match targets {
            Targets::Classes(t) => {
                let p = argmax_rows(predictions);
                self.classes.extend(p.into_iter().zip(t.iter().copied()));
            }
            Targets::Binary(t) => self.binary.extend(
                predictions
                    .data()
                    .iter()
                    .zip(t)
                    .map(|(&x, &y)| (x > 0.0, y > 0.5)),
            ),
            Targets::Values(t) => self
                .values
                .extend(predictions.data().iter().copied().zip(t.iter().copied())),
        }
        Ok(())
    }

    pub fn finish(&self) -> Metrics {
        let loss = if self.count > 0 {
            self.loss_sum / self.count as f64
        } else {
            0.0
        };
        let mut m = Metrics {
            loss,
            balanced_accuracy: None,
            accuracy: None,
            f1: None,
            mae: None,
        };
        match self.kind {
            TaskKind::NodeClassify | TaskKind::GraphClassify => {
                let (p, t): (Vec<usize>, Vec<usize>) = self.classes.iter().copied().unzip();
                m.balanced_accuracy = Some(balanced_accuracy(&p, &t));
                m.accuracy = Some(accuracy(&p, &t));
            }
            TaskKind::LinkPredict => {
                let (p, t): (Vec<bool>, Vec<bool>) = self.binary.iter().copied().unzip();
                m.f1 = Some(f1_score(&p, &t));
                let hits = p.iter().zip(&t).filter(|(a, b)| a == b).count();
                m.accuracy = Some(if t.is_empty() {
                    0.0
                } else {
                    hits as f64 / t.len() as f64
                });
            }
            TaskKind::GraphRegress => {
                let (p, t): (Vec<f64>, Vec<f64>) = self.values.iter().copied().unzip();
                m.mae = Some(mean_absolute_error(&p, &t));
            }
        }
        m
    }
}

/// Loss of one batch plus its metrics.
pub fn loss_and_metrics(
    tape: &mut Tape,
    predictions: Var,
    labels: &BatchLabels,
    kind: TaskKind,
    num_classes: usize,
) -> Result<(Var, Metrics)> {
    let targets = Targets::from_labels(kind, labels, num_classes)?;
    let loss = task_loss(tape, predictions, &targets)?;
    let mut acc = MetricsAccumulator::new(kind);
    acc.add(
        tape.value(loss).data()[0],
        tape.value(predictions),
        &targets,
    )?;
    Ok((loss, acc.finish()))
}
