use super::{broadcast_get, Broadcast, Mode, Op, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

impl Tape {
    /// Propagates `d loss / d node` back to every leaf.
    ///
    /// Leaf gradients accumulate across calls until [`Tape::zero_grad`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.mode == Mode::Inference {
            return Err(Error::NotRecording);
        }
        self.check(loss)?;
        let (rows, cols) = self.shape(loss);
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarLoss { rows, cols });
        }

        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            match &node.op {
                Op::Leaf => {
                    if self.leaf_grads.len() < self.nodes.len() {
                        self.leaf_grads.resize(self.nodes.len(), None);
                    }
                    match &mut self.leaf_grads[id] {
                        Some(acc) => acc.add_assign(&g),
                        slot => *slot = Some(g),
                    }
                    continue;
                }
                Op::Constant => {}
                op => {
                    for (input, contribution) in self.input_grads(op, id, &g) {
                        if !self.nodes[input.0].needs_grad {
                            continue;
                        }
                        match &mut grads[input.0] {
                            Some(acc) => acc.add_assign(&contribution),
                            slot => *slot = Some(contribution),
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Vector-Jacobian products of one record.
    fn input_grads(&self, op: &Op, id: usize, g: &Tensor) -> Vec<(Var, Tensor)> {
        let out = &self.nodes[id].value;
        let val = |v: &Var| &self.nodes[v.0].value;
        let elementwise = |a: &Var, f: &dyn Fn(f64, f64, f64) -> f64| {
            // f(grad, input, output)
            let x = val(a);
            let data = g
                .data()
                .iter()
                .zip(x.data())
                .zip(out.data())
                .map(|((&gi, &xi), &oi)| f(gi, xi, oi))
                .collect();
            vec![(*a, Tensor::new(x.rows(), x.cols(), data).expect("shape"))]
        };

        match op {
            Op::Leaf | Op::Constant => vec![],
            Op::MatMul(a, b) => {
                let (x, y) = (val(a), val(b));
                vec![(*a, matmul_bt(g, y)), (*b, matmul_at(x, g))]
            }
            Op::Add(a, b, kind) => {
                vec![(*a, g.clone()), (*b, reduce_broadcast(g, *kind, val(b)))]
            }
            Op::Sub(a, b, kind) => {
                let neg = g.map(|v| -v);
                vec![(*a, g.clone()), (*b, reduce_broadcast(&neg, *kind, val(b)))]
            }
            Op::Mul(a, b, kind) => {
                let (x, y) = (val(a), val(b));
                let ga = zip_broadcast(g, y, *kind, |gi, yi| gi * yi);
                let gy = zip_same(g, x, |gi, xi| gi * xi);
                vec![(*a, ga), (*b, reduce_broadcast(&gy, *kind, y))]
            }
            Op::Div(a, b, kind) => {
                let y = val(b);
                let ga = zip_broadcast(g, y, *kind, |gi, yi| gi / yi);
                // d(x/y)/dy = -x / y^2 = -(x/y) / y
                let go = zip_same(g, out, |gi, oi| -gi * oi);
                let gy = zip_broadcast(&go, y, *kind, |v, yi| v / yi);
                vec![(*a, ga), (*b, reduce_broadcast(&gy, *kind, y))]
            }
            Op::Scale(a, f) => vec![(*a, g.map(|v| v * f))],
            Op::AddScalar(a) => vec![(*a, g.clone())],
            Op::Relu(a) | Op::ClipMinZero(a) => {
                elementwise(a, &|gi, xi, _| if xi > 0.0 { gi } else { 0.0 })
            }
            Op::LeakyRelu(a, slope) => {
                let slope = *slope;
                elementwise(a, &move |gi, xi, _| {
                    if xi > 0.0 {
                        gi
                    } else if xi < 0.0 {
                        gi * slope
                    } else {
                        0.0
                    }
                })
            }
            Op::Sigmoid(a) => elementwise(a, &|gi, _, oi| gi * oi * (1.0 - oi)),
            // The subgradient at sqrt(0) is taken as 0 so constant inputs stay finite.
            Op::Sqrt(a) => {
                elementwise(a, &|gi, _, oi| if oi > 0.0 { gi / (2.0 * oi) } else { 0.0 })
            }
            Op::Square(a) => elementwise(a, &|gi, xi, _| 2.0 * xi * gi),
            Op::Exp(a) => elementwise(a, &|gi, _, oi| gi * oi),
            Op::Ln(a) => elementwise(a, &|gi, xi, _| gi / xi),
            Op::Abs(a) => elementwise(a, &|gi, xi, _| {
                if xi > 0.0 {
                    gi
                } else if xi < 0.0 {
                    -gi
                } else {
                    0.0
                }
            }),
            Op::Softplus(a) => elementwise(a, &|gi, xi, _| gi * super::sigmoid(xi)),
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                parts
                    .iter()
                    .map(|p| {
                        let (rows, cols) = val(p).shape();
                        let mut data = Vec::with_capacity(rows * cols);
                        for r in 0..rows {
                            data.extend_from_slice(&g.row(r)[offset..offset + cols]);
                        }
                        offset += cols;
                        (*p, Tensor::new(rows, cols, data).expect("shape"))
                    })
                    .collect()
            }
            Op::SegmentSum(a, seg) => vec![(*a, g.select_rows(seg.ids()))],
            Op::SegmentMean(a, seg) => {
                let mut dx = g.select_rows(seg.ids());
                let cols = dx.cols();
                for (r, &s) in seg.ids().iter().enumerate() {
                    let n = seg.size(s) as f64;
                    for c in 0..cols {
                        dx.set(r, c, dx.get(r, c) / n);
                    }
                }
                vec![(*a, dx)]
            }
            Op::SegmentPooledMean(a, seg) => {
                let (rows, cols) = val(a).shape();
                let mut dx = Tensor::zeros(rows, cols);
                for (r, &s) in seg.ids().iter().enumerate() {
                    let v = g.get(s, 0) / (seg.size(s) * cols) as f64;
                    for c in 0..cols {
                        dx.set(r, c, v);
                    }
                }
                vec![(*a, dx)]
            }
            Op::RowSum(a) => {
                let (rows, cols) = val(a).shape();
                let data = (0..rows)
                    .flat_map(|r| std::iter::repeat_n(g.get(r, 0), cols))
                    .collect();
                vec![(*a, Tensor::new(rows, cols, data).expect("shape"))]
            }
            Op::RowMean(a) => {
                let (rows, cols) = val(a).shape();
                let d = cols as f64;
                let data = (0..rows)
                    .flat_map(|r| std::iter::repeat_n(g.get(r, 0) / d, cols))
                    .collect();
                vec![(*a, Tensor::new(rows, cols, data).expect("shape"))]
            }
            Op::RowVar(a) => {
                let x = val(a);
                let (rows, cols) = x.shape();
                let d = cols as f64;
                let means = super::row_means(x);
                let mut dx = Tensor::zeros(rows, cols);
                for (r, &mean) in means.iter().enumerate() {
                    for c in 0..cols {
                        dx.set(r, c, g.get(r, 0) * 2.0 * (x.get(r, c) - mean) / d);
                    }
                }
                vec![(*a, dx)]
            }
            Op::SumAll(a) => {
                let (rows, cols) = val(a).shape();
                vec![(*a, Tensor::full(rows, cols, g.get(0, 0)))]
            }
            Op::MeanAll(a) => {
                let x = val(a);
                vec![(
                    *a,
                    Tensor::full(x.rows(), x.cols(), g.get(0, 0) / x.len() as f64),
                )]
            }
            Op::GatherRows(a, index) => {
                let (rows, cols) = val(a).shape();
                let mut dx = Tensor::zeros(rows, cols);
                for (k, &i) in index.iter().enumerate() {
                    for c in 0..cols {
                        dx.set(i, c, dx.get(i, c) + g.get(k, c));
                    }
                }
                vec![(*a, dx)]
            }
            Op::ScatterAddRows(a, index) => vec![(*a, g.select_rows(index))],
        }
    }
}

/// `g * y^T`
fn matmul_bt(g: &Tensor, y: &Tensor) -> Tensor {
    let (m, n) = g.shape();
    let k = y.rows();
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let gr = g.row(i);
        for p in 0..k {
            let yr = y.row(p);
            let mut s = 0.0;
            for j in 0..n {
                s += gr[j] * yr[j];
            }
            out[i * k + p] = s;
        }
    }
    Tensor::new(m, k, out).expect("shape")
}

/// `x^T * g`
fn matmul_at(x: &Tensor, g: &Tensor) -> Tensor {
    let (m, k) = x.shape();
    let n = g.cols();
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let gr = g.row(i);
        for (p, &a) in x.row(i).iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &b) in orow.iter_mut().zip(gr) {
                *o += a * b;
            }
        }
    }
    Tensor::new(k, n, out).expect("shape")
}

fn zip_same(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::new(a.rows(), a.cols(), data).expect("shape")
}

fn zip_broadcast(g: &Tensor, y: &Tensor, kind: Broadcast, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let (rows, cols) = g.shape();
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            data.push(f(g.get(r, c), broadcast_get(y, kind, r, c)));
        }
    }
    Tensor::new(rows, cols, data).expect("shape")
}

/// Sums a full-shape gradient down to the broadcast operand's shape.
fn reduce_broadcast(g: &Tensor, kind: Broadcast, like: &Tensor) -> Tensor {
    let (rows, cols) = g.shape();
    match kind {
        Broadcast::Same => g.clone(),
        Broadcast::Scalar => Tensor::scalar(g.data().iter().sum()),
        Broadcast::Row => {
            let mut out = Tensor::zeros(1, cols);
            for r in 0..rows {
                for c in 0..cols {
                    out.set(0, c, out.get(0, c) + g.get(r, c));
                }
            }
            out
        }
        Broadcast::Col => {
            let mut out = Tensor::zeros(like.rows(), 1);
            for r in 0..rows {
                let mut s = 0.0;
                for &v in g.row(r) {
                    s += v;
                }
                out.set(r, 0, s);
            }
            out
        }
    }
}
