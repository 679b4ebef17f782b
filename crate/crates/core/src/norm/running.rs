use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default momentum of the running statistics.
pub const DEFAULT_MOMENTUM: f64 = 0.9;

/// Exponentially smoothed batch statistics used at inference time:
/// `running = momentum * running + (1 - momentum) * batch`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub update_count: u64,
}

impl RunningStats {
    /// Mean 0 and variance 1 over `dim` columns.
    pub fn new(dim: usize) -> Self {
        RunningStats::with_momentum(dim, DEFAULT_MOMENTUM)
    }

    pub fn with_momentum(dim: usize, momentum: f64) -> Self {
        RunningStats {
            running_mean: Tensor::zeros(1, dim),
            running_var: Tensor::ones(1, dim),
            momentum,
            update_count: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.running_mean.cols()
    }

    /// Folds one batch's mean and biased variance (both `1 x dim`) in.
    pub fn update(&mut self, batch_mean: &Tensor, batch_var: &Tensor) -> Result<()> {
        let want = (1, self.dim());
        if batch_mean.shape() != want || batch_var.shape() != want {
            return Err(Error::shape(
                "running_stats",
                format!(
                    "{:?}/{:?} for dim {}",
                    batch_mean.shape(),
                    batch_var.shape(),
                    self.dim()
                ),
            ));
        }
        let a = self.momentum;
        for c in 0..self.dim() {
            let m = a * self.running_mean.get(0, c) + (1.0 - a) * batch_mean.get(0, c);
            let v = a * self.running_var.get(0, c) + (1.0 - a) * batch_var.get(0, c);
            self.running_mean.set(0, c, m);
            self.running_var.set(0, c, v.max(0.0));
        }
        self.update_count += 1;
        Ok(())
    }
}
