//! Information-theoretic pieces of UMPIRE: the mutual-information estimator
//! and its translation into an expected-improvement bound.

use std::f64::consts::E;

use super::{lambert_w0, MediatorError};
use crate::model::{PredictiveSampleSet, ROW_SUM_TOLERANCE};

/// Shannon entropy in nats with `0 log 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// Entropy of the mean predictive minus the mean per-sample entropy.
pub fn mutual_info(samples: &PredictiveSampleSet) -> Result<f64, MediatorError> {
    let s = samples.num_samples();
    if s == 0 {
        return Err(MediatorError::EmptySamples);
    }
    let mut mean_entropy = 0.0;
    for (i, row) in samples.rows().enumerate() {
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(MediatorError::InvalidSampleRow { row: i, sum });
        }
        mean_entropy += entropy(row);
    }
    mean_entropy /= s as f64;
    // Identical rows carry no epistemic disagreement; skip the subtraction
    // so rounding in the mean cannot leave a residue.
    let first = samples.row(0);
    if samples.rows().all(|r| r == first) {
        return Ok(0.0);
    }
    let mi = entropy(&samples.mean()) - mean_entropy;
    debug_assert!(mi >= -1e-12, "mutual information {mi} below rounding slack");
    Ok(mi.max(0.0))
}

/// `g(v) = 2b (exp(W0((v - 1)/e) + 1) - 1)`, nonnegative and increasing on `v >= 0`.
pub fn g_transform(v: f64, b: f64) -> f64 {
    debug_assert!(b > 0.0);
    let w = lambert_w0((v - 1.0) / E).expect("(v - 1)/e >= -1/e for v >= 0");
    2.0 * b * ((w + 1.0).exp() - 1.0)
}

/// Tradeoff coefficient that maps the largest possible mutual information,
/// `ln m`, to exactly a zero request cost.
pub fn kappa0(m: usize, b: f64) -> f64 {
    assert!(m >= 2, "need at least two classes");
    1.0 / g_transform((m as f64).ln(), b)
}
