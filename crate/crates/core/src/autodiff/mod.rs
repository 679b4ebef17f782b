//! Reverse-mode automatic differentiation over dense 2-D tensors.
//!
//! Every operation appends a record to a [`Tape`]; [`Tape::backward`] walks
//! the records in reverse creation order and accumulates gradients into the
//! leaves. All reductions sum left to right in row-major order, so repeated
//! runs with identical inputs produce bit-identical values and gradients.
//!
//! Broadcasting in the binary elementwise ops applies to the right-hand
//! operand only: it may have the left operand's shape, `1 x c` (row
//! broadcast), `r x 1` (column broadcast) or `1 x 1`.

mod backward;
mod finite_diff;
mod segments;

use std::sync::Arc;

pub use finite_diff::{finite_diff_gradient, gradient_check, FiniteDiff, GradientCheck};
pub use segments::Segments;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default LeakyReLU negative slope.
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

/// Handle to a tensor recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Recording,
    Inference,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    Row,
    Col,
    Scalar,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Add(Var, Var, Broadcast),
    Sub(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Div(Var, Var, Broadcast),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Sqrt(Var),
    Square(Var),
    Exp(Var),
    Ln(Var),
    Abs(Var),
    Softplus(Var),
    ClipMinZero(Var),
    ConcatCols(Vec<Var>),
    SegmentSum(Var, Arc<Segments>),
    SegmentMean(Var, Arc<Segments>),
    SegmentPooledMean(Var, Arc<Segments>),
    RowSum(Var),
    RowMean(Var),
    RowVar(Var),
    SumAll(Var),
    MeanAll(Var),
    GatherRows(Var, Arc<[usize]>),
    ScatterAddRows(Var, Arc<[usize]>),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// An append-only record of operations.
pub struct Tape {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Tensor>>,
    mode: Mode,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

impl Tape {
    /// A tape that records for backward.
    pub fn new() -> Self {
        Tape::with_mode(Mode::Recording)
    }

    /// A tape for forward evaluation only; [`Tape::backward`] fails on it.
    pub fn inference() -> Self {
        Tape::with_mode(Mode::Inference)
    }

    pub fn with_mode(mode: Mode) -> Self {
        Tape {
            nodes: Vec::new(),
            leaf_grads: Vec::new(),
            mode,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A trainable input; receives a gradient on backward.
    pub fn leaf(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, "leaf")
    }

    /// A fixed input; never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Constant, "constant")
    }

    /// A constant holding the current value of `v`; gradients stop here.
    pub fn detach(&mut self, v: Var) -> Result<Var> {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// Accumulated gradient of a leaf, if backward has reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.leaf_grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::UnknownVar(v.0))
        }
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite { op: name });
        }
        let needs_grad = match &op {
            Op::Leaf => true,
            Op::Constant => false,
            op => op_inputs(op).iter().any(|v| self.nodes[v.0].needs_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (x, y) = (self.value(a), self.value(b));
        if x.cols() != y.rows() {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", x.shape(), y.shape()),
            ));
        }
        let out = matmul_values(x, y);
        self.push(out, Op::MatMul(a, b), "matmul")
    }

    fn broadcast_kind(&self, op: &'static str, a: Var, b: Var) -> Result<Broadcast> {
        self.check(a)?;
        self.check(b)?;
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        Ok(if (ra, ca) == (rb, cb) {
            Broadcast::Same
        } else if (rb, cb) == (1, 1) {
            Broadcast::Scalar
        } else if rb == 1 && cb == ca {
            Broadcast::Row
        } else if cb == 1 && rb == ra {
            Broadcast::Col
        } else {
            return Err(Error::shape(
                op,
                format!("{:?} with {:?}", (ra, ca), (rb, cb)),
            ));
        })
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        make: impl FnOnce(Var, Var, Broadcast) -> Op,
    ) -> Result<Var> {
        let kind = self.broadcast_kind(name, a, b)?;
        let (x, y) = (self.value(a), self.value(b));
        let cols = x.cols();
        let mut out = Vec::with_capacity(x.len());
        for r in 0..x.rows() {
            for c in 0..cols {
                out.push(f(x.get(r, c), broadcast_get(y, kind, r, c)));
            }
        }
        let out = Tensor::new(x.rows(), cols, out)?;
        self.push(out, make(a, b, kind), name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div)
    }

    fn unary(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        self.check(a)?;
        let out = self.value(a).map(f);
        self.push(out, op, name)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.unary("scale", a, |x| x * factor, Op::Scale(a, factor))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.unary("add_scalar", a, |x| x + c, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary("relu", a, |x| x.max(0.0), Op::Relu(a))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        self.unary(
            "leaky_relu",
            a,
            |x| if x > 0.0 { x } else { slope * x },
            Op::LeakyRelu(a, slope),
        )
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.unary("sqrt", a, f64::sqrt, Op::Sqrt(a))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary("square", a, |x| x * x, Op::Square(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary("exp", a, f64::exp, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        self.unary("ln", a, f64::ln, Op::Ln(a))
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary("abs", a, f64::abs, Op::Abs(a))
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary(
            "softplus",
            a,
            |x| x.max(0.0) + (-x.abs()).exp().ln_1p(),
            Op::Softplus(a),
        )
    }

    /// `max(x, 0)`; identical values to [`Tape::relu`], kept as its own kind
    /// because it clips parameters rather than activations.
    pub fn clip_min_zero(&mut self, a: Var) -> Result<Var> {
        self.unary("clip_min", a, |x| x.max(0.0), Op::ClipMinZero(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("concat_cols", "no inputs"));
        };
        for &p in parts {
            self.check(p)?;
        }
        let rows = self.shape(first).0;
        if let Some(&bad) = parts.iter().find(|&&p| self.shape(p).0 != rows) {
            return Err(Error::shape(
                "concat_cols",
                format!("{} rows vs {rows}", self.shape(bad).0),
            ));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let out = Tensor::new(rows, cols, data)?;
        self.push(out, Op::ConcatCols(parts.to_vec()), "concat_cols")
    }

    fn check_segments(&self, op: &'static str, a: Var, seg: &Segments) -> Result<()> {
        self.check(a)?;
        if seg.len() != self.shape(a).0 {
            return Err(Error::shape(
                op,
                format!("{} segment ids for {} rows", seg.len(), self.shape(a).0),
            ));
        }
        Ok(())
    }

    /// Per-segment column sums: `count x cols`.
    pub fn segment_sum(&mut self, a: Var, seg: &Arc<Segments>) -> Result<Var> {
        self.check_segments("segment_sum", a, seg)?;
        let out = segment_sum_values(self.value(a), seg);
        self.push(out, Op::SegmentSum(a, seg.clone()), "segment_sum")
    }

    /// Per-segment column means; empty segments yield zero rows.
    pub fn segment_mean(&mut self, a: Var, seg: &Arc<Segments>) -> Result<Var> {
        self.check_segments("segment_mean", a, seg)?;
        let mut out = segment_sum_values(self.value(a), seg);
        let cols = out.cols();
        for s in 0..seg.count() {
            let n = seg.size(s);
            if n > 0 {
                let n = n as f64;
                for c in 0..cols {
                    out.set(s, c, out.get(s, c) / n);
                }
            }
        }
        self.push(out, Op::SegmentMean(a, seg.clone()), "segment_mean")
    }

    /// Per-segment mean over every element of the segment's rows: `count x 1`.
    pub fn segment_pooled_mean(&mut self, a: Var, seg: &Arc<Segments>) -> Result<Var> {
        self.check_segments("segment_pooled_mean", a, seg)?;
        let x = self.value(a);
        let cols = x.cols();
        let mut out = Vec::with_capacity(seg.count());
        for s in 0..seg.count() {
            let range = seg.range(s);
            let count = range.len() * cols;
            let mut sum = 0.0;
            for r in range {
                for &v in x.row(r) {
                    sum += v;
                }
            }
            out.push(if count > 0 { sum / count as f64 } else { 0.0 });
        }
        let out = Tensor::column_vector(&out);
        self.push(
            out,
            Op::SegmentPooledMean(a, seg.clone()),
            "segment_pooled_mean",
        )
    }

    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let x = self.value(a);
        let out: Vec<f64> = (0..x.rows()).map(|r| x.row(r).iter().sum()).collect();
        self.push(Tensor::column_vector(&out), Op::RowSum(a), "row_sum")
    }

    pub fn row_mean(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = row_means(self.value(a));
        self.push(Tensor::column_vector(&out), Op::RowMean(a), "row_mean")
    }

    /// Biased per-row variance over the columns.
    pub fn row_var(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let x = self.value(a);
        let means = row_means(x);
        let d = x.cols() as f64;
        let out: Vec<f64> = (0..x.rows())
            .map(|r| {
                let mut s = 0.0;
                for &v in x.row(r) {
                    let c = v - means[r];
                    s += c * c;
                }
                s / d
            })
            .collect();
        self.push(Tensor::column_vector(&out), Op::RowVar(a), "row_var")
    }

    pub fn sum_all(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a), "sum_all")
    }

    pub fn mean_all(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let x = self.value(a);
        if x.is_empty() {
            return Err(Error::shape("mean_all", "empty tensor"));
        }
        let s: f64 = x.data().iter().sum::<f64>() / x.len() as f64;
        self.push(Tensor::scalar(s), Op::MeanAll(a), "mean_all")
    }

    /// `out[k] = a[index[k]]`.
    pub fn gather_rows(&mut self, a: Var, index: &Arc<[usize]>) -> Result<Var> {
        self.check(a)?;
        let x = self.value(a);
        if let Some(&bad) = index.iter().find(|&&i| i >= x.rows()) {
            return Err(Error::Index {
                op: "gather_rows",
                index: bad,
                len: x.rows(),
            });
        }
        let out = x.select_rows(index);
        self.push(out, Op::GatherRows(a, index.clone()), "gather_rows")
    }

    /// `out[index[k]] += a[k]` into `out_rows` zero rows.
    pub fn scatter_add_rows(
        &mut self,
        a: Var,
        index: &Arc<[usize]>,
        out_rows: usize,
    ) -> Result<Var> {
        self.check(a)?;
        let x = self.value(a);
        if index.len() != x.rows() {
            return Err(Error::shape(
                "scatter_add_rows",
                format!("{} indices for {} rows", index.len(), x.rows()),
            ));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= out_rows) {
            return Err(Error::Index {
                op: "scatter_add_rows",
                index: bad,
                len: out_rows,
            });
        }
        let cols = x.cols();
        let mut out = Tensor::zeros(out_rows, cols);
        for (k, &i) in index.iter().enumerate() {
            for c in 0..cols {
                out.set(i, c, out.get(i, c) + x.get(k, c));
            }
        }
        self.push(
            out,
            Op::ScatterAddRows(a, index.clone()),
            "scatter_add_rows",
        )
    }

    /// Row-wise max of `a` as a constant `rows x 1` tensor.
    pub fn row_max_constant(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let x = self.value(a);
        let out: Vec<f64> = (0..x.rows())
            .map(|r| x.row(r).iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        self.constant(Tensor::column_vector(&out))
    }

    /// Per-segment max of a column vector, broadcast back to each row, as a
    /// constant. Used to stabilize segment softmax.
    pub fn segment_max_constant(&mut self, a: Var, seg: &Segments) -> Result<Var> {
        self.check_segments("segment_max", a, seg)?;
        let x = self.value(a);
        if x.cols() != 1 {
            return Err(Error::shape("segment_max", "expects a column vector"));
        }
        let mut out = vec![0.0; x.rows()];
        for s in 0..seg.count() {
            let range = seg.range(s);
            let m = range
                .clone()
                .map(|r| x.get(r, 0))
                .fold(f64::NEG_INFINITY, f64::max);
            for r in range {
                out[r] = m;
            }
        }
        self.constant(Tensor::column_vector(&out))
    }
}

fn op_inputs(op: &Op) -> Vec<Var> {
    match op {
        Op::Leaf | Op::Constant => vec![],
        Op::MatMul(a, b)
        | Op::Add(a, b, _)
        | Op::Sub(a, b, _)
        | Op::Mul(a, b, _)
        | Op::Div(a, b, _) => vec![*a, *b],
        Op::Scale(a, _)
        | Op::AddScalar(a)
        | Op::Relu(a)
        | Op::LeakyRelu(a, _)
        | Op::Sigmoid(a)
        | Op::Sqrt(a)
        | Op::Square(a)
        | Op::Exp(a)
        | Op::Ln(a)
        | Op::Abs(a)
        | Op::Softplus(a)
        | Op::ClipMinZero(a)
        | Op::SegmentSum(a, _)
        | Op::SegmentMean(a, _)
        | Op::SegmentPooledMean(a, _)
        | Op::RowSum(a)
        | Op::RowMean(a)
        | Op::RowVar(a)
        | Op::SumAll(a)
        | Op::MeanAll(a)
        | Op::GatherRows(a, _)
        | Op::ScatterAddRows(a, _) => vec![*a],
        Op::ConcatCols(parts) => parts.clone(),
    }
}

#[inline]
fn broadcast_get(y: &Tensor, kind: Broadcast, r: usize, c: usize) -> f64 {
    match kind {
        Broadcast::Same => y.get(r, c),
        Broadcast::Row => y.get(0, c),
        Broadcast::Col => y.get(r, 0),
        Broadcast::Scalar => y.get(0, 0),
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn matmul_values(x: &Tensor, y: &Tensor) -> Tensor {
    let (m, k) = x.shape();
    let n = y.cols();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let xr = x.row(i);
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &a) in xr.iter().enumerate().take(k) {
            if a == 0.0 {
                continue;
            }
            for (o, &b) in orow.iter_mut().zip(y.row(p)) {
                *o += a * b;
            }
        }
    }
    Tensor::new(m, n, out).expect("matmul shape")
}

fn segment_sum_values(x: &Tensor, seg: &Segments) -> Tensor {
    let cols = x.cols();
    let mut out = Tensor::zeros(seg.count(), cols);
    for (r, &s) in seg.ids().iter().enumerate() {
        for c in 0..cols {
            out.set(s, c, out.get(s, c) + x.get(r, c));
        }
    }
    out
}

fn row_means(x: &Tensor) -> Vec<f64> {
    let d = x.cols() as f64;
    (0..x.rows())
        .map(|r| {
            let mut s = 0.0;
            for &v in x.row(r) {
                s += v;
            }
            s / d
        })
        .collect()
}
