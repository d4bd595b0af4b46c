use serde::{Deserialize, Serialize};

/// Fallback lengthscale when every training context coincides.
const DEGENERATE_LENGTHSCALE: f64 = 1.0;

/// Kernel and likelihood settings of the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelSettings {
    /// Fixed RBF lengthscale; the median pairwise distance of the training
    /// contexts when `None`.
    pub lengthscale: Option<f64>,
    pub signal_variance: f64,
    pub jitter: f64,
    /// Dirichlet prior pseudo-count.
    pub alpha_eps: f64,
}

impl Default for KernelSettings {
    fn default() -> Self {
        Self {
            lengthscale: None,
            signal_variance: 1.0,
            jitter: 1e-6,
            alpha_eps: 0.01,
        }
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn rbf(a: &[f64], b: &[f64], lengthscale: f64, signal_variance: f64) -> f64 {
    signal_variance * (-0.5 * sq_dist(a, b) / (lengthscale * lengthscale)).exp()
}

/// Median Euclidean distance over all distinct pairs.
pub fn median_heuristic(points: &[Vec<f64>]) -> f64 {
    let mut d = Vec::with_capacity(points.len() * points.len().saturating_sub(1) / 2);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            d.push(sq_dist(&points[i], &points[j]).sqrt());
        }
    }
    if d.is_empty() {
        return DEGENERATE_LENGTHSCALE;
    }
    let mid = d.len() / 2;
    let (_, upper, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let mut med = *upper;
    if d.len() % 2 == 0 {
        let lower = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        med = 0.5 * (med + lower);
    }
    if med > 1e-12 {
        med
    } else {
        DEGENERATE_LENGTHSCALE
    }
}
