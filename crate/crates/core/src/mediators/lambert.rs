//! Principal branch of the Lambert W function on the real line.

use std::f64::consts::E;

use super::MediatorError;

const MAX_ITERATIONS: usize = 50;

/// Inputs this close above `-1/e` are treated as the branch point itself.
/// The f64 nearest `-1/e` is already ~1e-17 away, which moves `W` by ~1e-8.
const BRANCH_POINT_SLACK: f64 = 4.0 * f64::EPSILON;

/// `W0(x)`: the solution `w >= -1` of `w * e^w = x`, for `x >= -1/e`.
///
/// Initial guesses: the branch-point series `-1 + p - p^2/3 + 11/72 p^3` with
/// `p = sqrt(2(e x + 1))` for `x < -0.25`, `ln(1 + x)` up to `x = e`, and
/// `ln x - ln ln x` above. Refined by Halley iteration.
pub fn lambert_w0(x: f64) -> Result<f64, MediatorError> {
    if x.is_nan() {
        return Err(MediatorError::LambertDomain(x));
    }
    let branch = -1.0 / E;
    let offset = E * x + 1.0;
    if offset < -BRANCH_POINT_SLACK {
        return Err(MediatorError::LambertDomain(x));
    }
    if offset <= BRANCH_POINT_SLACK {
        return Ok(-1.0);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }

    let mut w = if x < -0.25 {
        let p = (2.0 * offset).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else if x <= E {
        x.ln_1p()
    } else {
        let l = x.ln();
        l - l.ln()
    };
    debug_assert!(x >= branch);

    for _ in 0..MAX_ITERATIONS {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        if denom == 0.0 || !denom.is_finite() {
            break;
        }
        let step = f / denom;
        w -= step;
        if step.abs() <= 4.0 * f64::EPSILON * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w.max(-1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Bisection on `w e^w = x` over `[-1, max(1, ln(1+x)+1)]`; slow but
    /// independent of the Halley path.
    fn bisect_w0(x: f64) -> f64 {
        let (mut lo, mut hi) = (-1.0f64, 1.0f64.max(x.ln_1p() + 1.0));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid.exp() < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn branch_values() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert!((lambert_w0(E).unwrap() - 1.0).abs() < 1e-12);
        assert!((lambert_w0(-1.0 / E).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn below_branch_point_is_domain_error() {
        assert!(matches!(lambert_w0(-0.4), Err(MediatorError::LambertDomain(_))));
        assert!(lambert_w0(f64::NAN).is_err());
    }

    #[test]
    fn agrees_with_bisection() {
        for i in 0..=400 {
            let x = -1.0 / E + (i as f64) * (50.0 + 1.0 / E) / 400.0;
            let w = lambert_w0(x).unwrap();
            let b = bisect_w0(x);
            assert!((w - b).abs() < 1e-9 * (1.0 + b.abs()), "x={x} w={w} b={b}");
        }
    }

    #[test]
    fn large_arguments() {
        for x in [1e3, 1e6, 1e12] {
            let w = lambert_w0(x).unwrap();
            assert!(((w * w.exp() - x) / x).abs() < 1e-14);
        }
    }
}
