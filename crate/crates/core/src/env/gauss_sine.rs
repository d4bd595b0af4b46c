use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::domain::{ActionId, Example};

/// The latent function takes values in [0, 2], so labels are {0, 1, 2}.
pub const GAUSS_SINE_CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussSineParams {
    /// Width of the uniform noise added to the latent function before rounding.
    pub noise_q: f64,
}

impl Default for GaussSineParams {
    fn default() -> Self {
        Self { noise_q: 0.0 }
    }
}

/// Label for fixed latent inputs; `noise` is the already-drawn perturbation.
pub fn gauss_sine_label(x1: f64, x2: f64, u: f64, noise: f64) -> ActionId {
    let f = (0.15 * PI * u + x1 + x2).sin() + 1.0;
    let y = (f + noise).round().clamp(0.0, (GAUSS_SINE_CLASSES - 1) as f64);
    ActionId(y as usize)
}

/// One GaussSine example. Always consumes four draws from `rng`, whatever
/// `noise_q` is, so streams stay aligned across noise levels.
pub fn gauss_sine_draw<R: Rng + ?Sized>(params: &GaussSineParams, rng: &mut R) -> Example {
    let x1: f64 = rng.sample(StandardNormal);
    let x2: f64 = rng.sample(StandardNormal);
    let u: f64 = rng.random();
    let v: f64 = rng.random();
    let noise = params.noise_q * (v - 0.5);
    (vec![x1, x2], gauss_sine_label(x1, x2, u, noise))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::{SeedSpec, StreamTag};

    fn label_freqs(q: f64, n: usize, seed: u64) -> [f64; 3] {
        let mut rng = SeedSpec::new(seed, 0).rng(StreamTag::Environment);
        let p = GaussSineParams { noise_q: q };
        let mut counts = [0usize; 3];
        for _ in 0..n {
            let (_, y) = gauss_sine_draw(&p, &mut rng);
            counts[y.0] += 1;
        }
        counts.map(|c| c as f64 / n as f64)
    }

    #[test]
    fn origin_maps_to_middle_class() {
        assert_eq!(gauss_sine_label(0.0, 0.0, 0.0, 0.0), ActionId(1));
    }

    #[test]
    fn noiseless_label_marginals() {
        let f = label_freqs(0.0, 100_000, 11);
        assert!(f.iter().all(|&p| p > 0.0), "{f:?}");
        // Reference marginals from an independent 10^6-draw NumPy simulation.
        // The positive phase shift makes class 2 the mode.
        let reference = [0.2818, 0.3419, 0.3763];
        for (got, want) in f.iter().zip(reference) {
            assert!((got - want).abs() < 0.01, "{f:?}");
        }
        assert!(f[2] > f[1] && f[1] > f[0], "{f:?}");
    }

    #[test]
    fn small_noise_is_close_to_noiseless() {
        let a = label_freqs(0.0, 100_000, 5);
        let b = label_freqs(0.01, 100_000, 5);
        let tv: f64 = 0.5 * a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>();
        assert!(tv < 0.02, "tv = {tv}");
    }

    #[test]
    fn clamping_keeps_labels_valid_under_large_noise() {
        let mut rng = SeedSpec::new(1, 0).rng(StreamTag::Environment);
        let p = GaussSineParams { noise_q: 3.0 };
        for _ in 0..10_000 {
            let (x, y) = gauss_sine_draw(&p, &mut rng);
            assert_eq!(x.len(), 2);
            assert!(y.0 < GAUSS_SINE_CLASSES);
        }
    }
}
