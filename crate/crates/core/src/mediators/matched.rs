//! Post-hoc request schedule matched to UMPIRE's cumulative request curve.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::MediatorError;

/// Cubic fit `C(t) = c1 u + c2 u^2 + c3 u^3`, `u = t / horizon`, of the
/// run-averaged cumulative request count, and the per-round request
/// probabilities `eps_t = clip(C(t) - C(t-1), 0, 1)` it implies.
///
/// The fit has no intercept: a cumulative count is zero before round one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedEpsilon {
    pub coefficients: [f64; 3],
    pub horizon: usize,
    /// `eps_t` for `t = 1..=horizon`.
    pub table: Vec<f64>,
}

impl MatchedEpsilon {
    pub fn cumulative(&self, t: f64) -> f64 {
        let u = t / self.horizon as f64;
        let [c1, c2, c3] = self.coefficients;
        u * (c1 + u * (c2 + u * c3))
    }

    /// Request probability at 1-based round `t`. Beyond the fitted horizon
    /// the polynomial is extrapolated.
    pub fn epsilon_at(&self, t: usize) -> f64 {
        match t.checked_sub(1).and_then(|i| self.table.get(i)) {
            Some(&e) => e,
            None => {
                let t = t as f64;
                (self.cumulative(t) - self.cumulative(t - 1.0)).clamp(0.0, 1.0)
            }
        }
    }
}

/// Fit from per-run cumulative request curves; `curves[r][t-1]` is the number
/// of requests run `r` made in rounds `1..=t`.
pub fn fit_matched_epsilon(curves: &[Vec<f64>]) -> Result<MatchedEpsilon, MediatorError> {
    let first = curves.first().ok_or(MediatorError::EmptyCurves)?;
    let n = first.len();
    if n == 0 {
        return Err(MediatorError::EmptyCurves);
    }
    if curves.iter().any(|c| c.len() != n) {
        return Err(MediatorError::RaggedCurves);
    }
    let runs = curves.len() as f64;
    let avg = DVector::from_fn(n, |i, _| curves.iter().map(|c| c[i]).sum::<f64>() / runs);
    let design = DMatrix::from_fn(n, 3, |i, j| ((i + 1) as f64 / n as f64).powi(j as i32 + 1));
    let coef = design
        .svd(true, true)
        .solve(&avg, 1e-12)
        .map_err(|_| MediatorError::EmptyCurves)?;
    let mut fit = MatchedEpsilon {
        coefficients: [coef[0], coef[1], coef[2]],
        horizon: n,
        table: Vec::new(),
    };
    fit.table = (1..=n)
        .map(|t| {
            let t = t as f64;
            (fit.cumulative(t) - fit.cumulative(t - 1.0)).clamp(0.0, 1.0)
        })
        .collect();
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_rate_is_recovered() {
        let r = 0.23;
        let curves: Vec<Vec<f64>> = (0..3).map(|_| (1..=400).map(|t| r * t as f64).collect()).collect();
        let fit = fit_matched_epsilon(&curves).unwrap();
        assert!(fit.table.iter().all(|e| (e - r).abs() < 1e-6));
    }

    #[test]
    fn zero_requests_give_zero_schedule() {
        let fit = fit_matched_epsilon(&[vec![0.0; 100]]).unwrap();
        assert!(fit.table.iter().all(|&e| e == 0.0));
        assert_eq!(fit.epsilon_at(1), 0.0);
        assert_eq!(fit.epsilon_at(500), 0.0);
    }

    #[test]
    fn sqrt_curve_total_within_five_percent() {
        let n = 500;
        let curve: Vec<f64> = (1..=n).map(|t| (t as f64).sqrt()).collect();
        let fit = fit_matched_epsilon(&[curve]).unwrap();
        let total: f64 = fit.table.iter().sum();
        let want = (n as f64).sqrt();
        assert!((total - want).abs() / want < 0.05, "total {total} vs {want}");
    }

    #[test]
    fn averaging_across_runs() {
        let a: Vec<f64> = (1..=50).map(|t| 0.1 * t as f64).collect();
        let b: Vec<f64> = (1..=50).map(|t| 0.3 * t as f64).collect();
        let fit = fit_matched_epsilon(&[a, b]).unwrap();
        assert!(fit.table.iter().all(|e| (e - 0.2).abs() < 1e-6));
    }

    #[test]
    fn rejects_empty_and_ragged_input() {
        assert!(matches!(fit_matched_epsilon(&[]), Err(MediatorError::EmptyCurves)));
        assert!(matches!(
            fit_matched_epsilon(&[vec![1.0, 2.0], vec![1.0]]),
            Err(MediatorError::RaggedCurves)
        ));
    }
}
