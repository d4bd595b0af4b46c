//! Deterministic RNG stream derivation.
//!
//! Every random quantity in a run is drawn from a ChaCha stream keyed by
//! `(master_seed, run_index)` and selected by a [`StreamTag`]. Distinct tags
//! use distinct ChaCha stream ids under the same key, so they never overlap.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamTag {
    /// Contexts, expert labels, data splits.
    Environment,
    /// Noisy-human perturbations.
    Human,
    /// Posterior sampling of the learner.
    ModelSampling,
    /// Randomized mediator choices.
    Policy,
    /// Heldout evaluation draws (kept apart so evaluation never shifts the
    /// learner's stream).
    Heldout,
    /// Posterior sampling of the oracle model.
    Oracle,
}

impl StreamTag {
    fn id(self) -> u64 {
        match self {
            StreamTag::Environment => 1,
            StreamTag::Human => 2,
            StreamTag::ModelSampling => 3,
            StreamTag::Policy => 4,
            StreamTag::Heldout => 5,
            StreamTag::Oracle => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub run_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, run_index: u64) -> Self {
        Self { master_seed, run_index }
    }

    pub fn rng(&self, tag: StreamTag) -> SimRng {
        let key = splitmix64(self.master_seed ^ splitmix64(self.run_index.wrapping_add(0x5851_f42d)));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(tag.id());
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn draw(rng: &mut SimRng) -> Vec<u64> {
        (0..16).map(|_| rng.random()).collect()
    }

    #[test]
    fn same_triple_same_stream() {
        let s = SeedSpec::new(7, 3);
        assert_eq!(draw(&mut s.rng(StreamTag::Human)), draw(&mut s.rng(StreamTag::Human)));
    }

    #[test]
    fn distinct_triples_differ() {
        let a = draw(&mut SeedSpec::new(7, 3).rng(StreamTag::Human));
        let b = draw(&mut SeedSpec::new(7, 4).rng(StreamTag::Human));
        let c = draw(&mut SeedSpec::new(8, 3).rng(StreamTag::Human));
        let d = draw(&mut SeedSpec::new(7, 3).rng(StreamTag::Policy));
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn streams_look_uniform() {
        // Crude independence check between two tags of the same run.
        let s = SeedSpec::new(0, 0);
        let mut a = s.rng(StreamTag::Environment);
        let mut b = s.rng(StreamTag::ModelSampling);
        let n = 20_000;
        let mut cov = 0.0;
        for _ in 0..n {
            let x: f64 = a.random::<f64>() - 0.5;
            let y: f64 = b.random::<f64>() - 0.5;
            cov += x * y;
        }
        cov /= n as f64;
        // var of each is 1/12; the correlation estimate has sd ~ 1/sqrt(n).
        let corr = cov * 12.0;
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr = {corr}");
    }
}
