//! Keyed, counter-based random streams.
//!
//! Every draw is a pure function of `(master seed, generation, learner,
//! counter)`, so the same learner sees the same numbers no matter which
//! worker thread evaluates it or in what order.

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::model::TeacherRule;

const GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn absorb(h: u64, word: u64) -> u64 {
    mix64(h ^ mix64(word.wrapping_add(GAMMA)).wrapping_add(GAMMA))
}

/// Hashes a master seed and a tuple of words into a new 64-bit key.
pub fn derive_seed(master_seed: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(mix64(master_seed ^ 0x6a09_e667_f3bc_c908), |h, &w| absorb(h, w))
}

/// A counter-based generator: output `k` is `mix64(key + k·γ)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    key: u64,
    counter: u64,
}

impl RngStream {
    /// Stream for one learner in one generation.
    pub fn new(master_seed: u64, generation: u64, learner: u64) -> Self {
        Self::from_key(derive_seed(master_seed, &[generation, learner]))
    }

    pub fn from_key(key: u64) -> Self {
        Self { key, counter: 0 }
    }

    /// Number of 64-bit words consumed so far.
    pub fn position(&self) -> u64 {
        self.counter
    }
}

impl RngCore for RngStream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix64(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let word = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&word[..chunk.len()]);
        }
    }
}

/// One draw from N(mean, sd²). `sd == 0` returns `mean` without consuming
/// randomness.
#[inline]
pub fn sample_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return mean;
    }
    let z: f64 = rng.sample(StandardNormal);
    mean + sd * z
}

/// Number of successes in `trials` fair coin flips, read off random bits.
pub fn fair_binomial<R: Rng + ?Sized>(rng: &mut R, trials: usize) -> usize {
    let mut left = trials;
    let mut count = 0usize;
    while left >= 64 {
        count += rng.next_u64().count_ones() as usize;
        left -= 64;
    }
    if left > 0 {
        let mask = (1u64 << left) - 1;
        count += (rng.next_u64() & mask).count_ones() as usize;
    }
    count
}

/// Teacher index (into the previous generation) for each of a learner's `n`
/// examples.
///
/// `One` repeats a single uniform draw; `Two` draws two teachers with
/// replacement and gives each example to either with probability ½; `All`
/// draws every example's teacher independently.
pub fn assign_teachers<R: Rng + ?Sized>(
    rng: &mut R,
    rule: TeacherRule,
    population: usize,
    n: usize,
) -> Vec<usize> {
    match rule {
        TeacherRule::One => vec![rng.random_range(0..population); n],
        TeacherRule::Two => {
            let pair = [rng.random_range(0..population), rng.random_range(0..population)];
            (0..n).map(|_| pair[rng.random_bool(0.5) as usize]).collect()
        }
        TeacherRule::All => (0..n).map(|_| rng.random_range(0..population)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_sequence() {
        let a: Vec<u64> = {
            let mut s = RngStream::new(7, 3, 11);
            (0..16).map(|_| s.next_u64()).collect()
        };
        let mut s = RngStream::new(7, 3, 11);
        let b: Vec<u64> = (0..16).map(|_| s.next_u64()).collect();
        assert_eq!(a, b);
        assert_ne!(RngStream::new(7, 3, 12).next_u64(), a[0]);
        assert_ne!(RngStream::new(7, 4, 11).next_u64(), a[0]);
        assert_ne!(RngStream::new(8, 3, 11).next_u64(), a[0]);
    }

    #[test]
    fn transposed_keys_differ() {
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_ne!(derive_seed(1, &[0, 0]), derive_seed(1, &[0]));
    }

    #[test]
    fn degenerate_normal_returns_mean() {
        let mut s = RngStream::new(1, 1, 1);
        assert_eq!(sample_normal(&mut s, 729.75, 0.0), 729.75);
        assert_eq!(s.position(), 0);
    }

    #[test]
    fn standard_normal_moments() {
        // 3σ bounds: mean SE = 1e-3, var SE = √2·1e-3
        let mut s = RngStream::new(2024, 0, 0);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_normal(&mut s, 0.0, 1.0)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.004, "mean {mean}");
        assert!((var - 1.0).abs() < 0.005, "var {var}");
    }

    #[test]
    fn streams_for_neighbouring_learners_are_uncorrelated() {
        let n = 200_000;
        let mut sum = 0.0;
        for learner in 0..n {
            let a = sample_normal(&mut RngStream::new(5, 10, learner), 0.0, 1.0);
            let b = sample_normal(&mut RngStream::new(5, 10, learner + 1), 0.0, 1.0);
            sum += a * b;
        }
        // correlation SE = 1/√n ≈ 0.0022
        let corr = sum / n as f64;
        assert!(corr.abs() < 0.01, "corr {corr}");
    }

    #[test]
    fn single_teacher_repeats_one_index() {
        let mut s = RngStream::new(1, 2, 3);
        let idx = assign_teachers(&mut s, TeacherRule::One, 5, 50);
        assert_eq!(idx.len(), 50);
        assert!(idx.iter().all(|&i| i == idx[0] && i < 5));
    }

    #[test]
    fn two_teachers_split_evenly() {
        let n = 100_000;
        let mut s = RngStream::new(9, 1, 1);
        let idx = assign_teachers(&mut s, TeacherRule::Two, 1 << 40, n);
        let distinct: std::collections::BTreeSet<_> = idx.iter().copied().collect();
        assert_eq!(distinct.len(), 2);
        let slot = *distinct.iter().next().unwrap();
        let count = idx.iter().filter(|&&i| i == slot).count() as i64;
        // binomial 3σ ≈ 474
        assert!((count - 50_000).abs() <= 500, "count {count}");
    }

    #[test]
    fn all_teachers_uniform() {
        let n = 100_000;
        let mut s = RngStream::new(3, 3, 3);
        let idx = assign_teachers(&mut s, TeacherRule::All, 4, n);
        let mut freq = [0usize; 4];
        for i in idx {
            freq[i] += 1;
        }
        for f in freq {
            // multinomial 3σ ≈ 411
            assert!((f as i64 - 25_000).abs() <= 450, "{freq:?}");
        }
    }

    #[test]
    fn fair_binomial_counts_bits() {
        let mut s = RngStream::new(4, 4, 4);
        let trials = 100;
        let reps = 20_000;
        let total: usize = (0..reps).map(|_| fair_binomial(&mut s, trials)).sum();
        let mean = total as f64 / reps as f64;
        // SE = 5/√20000 ≈ 0.035
        assert!((mean - 50.0).abs() < 0.15, "mean {mean}");
        assert_eq!(fair_binomial(&mut s, 0), 0);
    }
}
