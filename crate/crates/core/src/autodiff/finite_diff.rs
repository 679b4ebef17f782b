use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Central-difference gradient estimate.
#[derive(Clone, Debug)]
pub struct FiniteDiff {
    pub grad: Tensor,
    /// Flat indices whose one-sided slopes disagree, i.e. the function has a
    /// kink within `h` of the evaluation point. Their estimates are not
    /// meaningful and callers should exclude them from comparisons.
    pub skipped: Vec<usize>,
}

/// Relative disagreement between forward and backward slopes above which an
/// element is treated as sitting on a kink.
const KINK_TOLERANCE: f64 = 1e-2;

/// Estimates `d f / d x` elementwise as `(f(x + h e) - f(x - h e)) / 2h`.
pub fn finite_diff_gradient<F>(mut f: F, x: &Tensor, h: f64) -> Result<FiniteDiff>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!(
            "finite-difference step must be > 0, got {h}"
        )));
    }
    let mut eval = |t: &Tensor| -> Result<f64> {
        let v = f(t)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { op: "finite_diff" })
        }
    };
    let center = eval(x)?;
    let mut probe = x.clone();
    let mut grad = Tensor::zeros(x.rows(), x.cols());
    let mut skipped = Vec::new();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = eval(&probe)?;
        probe.data_mut()[i] = orig - h;
        let minus = eval(&probe)?;
        probe.data_mut()[i] = orig;

        let slope = (plus - minus) / (2.0 * h);
        let forward = (plus - center) / h;
        let backward = (center - minus) / h;
        if (forward - backward).abs() > KINK_TOLERANCE * slope.abs().max(1.0) {
            skipped.push(i);
        }
        grad.data_mut()[i] = slope;
    }
    Ok(FiniteDiff { grad, skipped })
}

/// Outcome of comparing tape gradients against central differences.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradientCheck {
    /// `max |autodiff - fd| / max(1, |fd|)` over all compared elements.
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

impl GradientCheck {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance && self.checked > 0
    }

    pub fn merge(&mut self, other: &GradientCheck) {
        self.max_rel_error = self.max_rel_error.max(other.max_rel_error);
        self.checked += other.checked;
        self.skipped += other.skipped;
    }
}

/// Checks every input of `build` as a leaf. `build` must return a 1x1 var
/// and be a pure function of the input values.
pub fn gradient_check<B>(inputs: &[Tensor], h: f64, build: B) -> Result<GradientCheck>
where
    B: Fn(&mut super::Tape, &[super::Var]) -> Result<super::Var>,
{
    let mut tape = super::Tape::new();
    let vars = inputs
        .iter()
        .map(|t| tape.leaf(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = build(&mut tape, &vars)?;
    tape.backward(loss)?;

    let mut report = GradientCheck::default();
    for (i, input) in inputs.iter().enumerate() {
        let analytic = tape
            .grad(vars[i])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(input.rows(), input.cols()));
        let numeric = finite_diff_gradient(
            |probe| {
                let mut t = super::Tape::inference();
                let vs = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, x)| t.constant(if j == i { probe.clone() } else { x.clone() }))
                    .collect::<Result<Vec<_>>>()?;
                let out = build(&mut t, &vs)?;
                t.value(out).item().ok_or(Error::NonScalarLoss {
                    rows: t.shape(out).0,
                    cols: t.shape(out).1,
                })
            },
            input,
            h,
        )?;
        for k in 0..input.len() {
            if numeric.skipped.contains(&k) {
                report.skipped += 1;
                continue;
            }
            let fd = numeric.grad.data()[k];
            let err = (analytic.data()[k] - fd).abs() / fd.abs().max(1.0);
            report.max_rel_error = report.max_rel_error.max(err);
            report.checked += 1;
        }
    }
    Ok(report)
}
