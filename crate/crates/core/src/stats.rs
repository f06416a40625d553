//! Monte Carlo summaries with compensated, fixed-order reduction.
//!
//! Replicates are evaluated in parallel but collected in replicate order and
//! reduced sequentially with Neumaier summation, so a parallel run produces
//! exactly the bytes a sequential run would.

use rayon::prelude::*;
use serde::Serialize;

/// Neumaier compensated sum over a fixed iteration order.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Evaluates `f(replicate)` for `0..replicates`, preserving replicate order.
pub fn par_replicate_map<T, F>(replicates: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..replicates).into_par_iter().map(f).collect()
}

/// Sample mean with standard error and the fraction of capped replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub replicates: u64,
    pub capped_fraction: f64,
}

impl MCEstimate {
    /// Two-pass mean and standard error over recorded replicate values.
    pub fn from_values(values: &[f64], capped: u64) -> Self {
        let n = values.len() as f64;
        assert!(n >= 1.0, "estimate requires at least one replicate");
        let mean = neumaier_sum(values.iter().copied()) / n;
        let std_err = if values.len() > 1 {
            let ss = neumaier_sum(values.iter().map(|&v| (v - mean) * (v - mean)));
            (ss.max(0.0) / (n * (n - 1.0))).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std_err,
            replicates: values.len() as u64,
            capped_fraction: capped as f64 / n,
        }
    }

    /// A deterministic value known without sampling.
    pub fn exact(value: f64, replicates: u64) -> Self {
        Self {
            mean: value,
            std_err: 0.0,
            replicates,
            capped_fraction: 0.0,
        }
    }
}

/// `|a − b|` in units of the combined standard error; zero difference is
/// zero even when both errors vanish.
pub fn z_score(a: &MCEstimate, b: &MCEstimate) -> f64 {
    let diff = (a.mean - b.mean).abs();
    if diff == 0.0 {
        return 0.0;
    }
    let combined = a.std_err.hypot(b.std_err);
    if combined == 0.0 {
        f64::INFINITY
    } else {
        diff / combined
    }
}
