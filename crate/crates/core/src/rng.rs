//! Deterministic, splittable random streams.
//!
//! Every stream is a ChaCha8 generator keyed by `(seed, stream_id)`. ChaCha
//! exposes 2^64 independent streams per key, so deriving the stream for
//! replicate `i` is O(1) and does not depend on which other replicates ran.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct RngState {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl PartialEq for RngState {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed && self.stream_id == other.stream_id && self.rng == other.rng
    }
}

impl RngState {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngState { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// `n` i.i.d. draws from Normal(mean, sd).
    pub fn normal_draws(&mut self, n: usize, mean: f64, sd: f64) -> Result<Vec<f64>> {
        check_normal_params(mean, sd)?;
        Ok((0..n).map(|_| mean + sd * self.standard_normal()).collect())
    }

    /// One draw from Normal(mean, sd).
    pub fn normal(&mut self, mean: f64, sd: f64) -> Result<f64> {
        check_normal_params(mean, sd)?;
        Ok(mean + sd * self.standard_normal())
    }

    /// A draw from the half-open interval `[lo, hi)`; `lo == hi` returns `lo`.
    pub fn uniform_draw(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::Parameter(format!("uniform bounds must be finite, got [{lo}, {hi})")));
        }
        if lo > hi {
            return Err(Error::Parameter(format!("uniform lower bound {lo} exceeds upper bound {hi}")));
        }
        if lo == hi {
            return Ok(lo);
        }
        let u: f64 = self.rng.random();
        let v = lo + (hi - lo) * u;
        // rounding can land exactly on `hi` for tiny intervals
        Ok(if v < hi { v } else { lo })
    }

    /// Uniform integer on the closed range `[lo, hi]`.
    pub fn uniform_int(&mut self, lo: i64, hi: i64) -> Result<i64> {
        if lo > hi {
            return Err(Error::Parameter(format!("integer range lower bound {lo} exceeds upper bound {hi}")));
        }
        Ok(self.rng.random_range(lo..=hi))
    }

    /// `k` indices from `0..n_total`, distinct unless `replace` is set.
    pub fn sample_indices(&mut self, n_total: usize, k: usize, replace: bool) -> Result<Vec<usize>> {
        if replace {
            if n_total == 0 && k > 0 {
                return Err(Error::Parameter("cannot sample from an empty range".into()));
            }
            return Ok((0..k).map(|_| self.rng.random_range(0..n_total)).collect());
        }
        if k > n_total {
            return Err(Error::Parameter(format!(
                "cannot draw {k} indices without replacement from {n_total}"
            )));
        }
        Ok(index::sample(&mut self.rng, n_total, k).into_vec())
    }

}

fn check_normal_params(mean: f64, sd: f64) -> Result<()> {
    if !mean.is_finite() {
        return Err(Error::Parameter(format!("normal mean must be finite, got {mean}")));
    }
    if !sd.is_finite() || sd < 0.0 {
        return Err(Error::Parameter(format!("normal sd must be finite and non-negative, got {sd}")));
    }
    Ok(())
}

/// The stream used by replicate `replicate_index` of a run keyed by `master_seed`.
pub fn derive_substream(master_seed: u64, replicate_index: u64) -> RngState {
    RngState::new(master_seed, replicate_index)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_sd(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, var.sqrt())
    }

    #[test]
    fn zero_sd_gives_constant_draws() {
        let mut rng = RngState::new(9, 0);
        assert_eq!(rng.normal_draws(5, 0.0, 0.0).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn negative_sd_is_rejected() {
        let mut rng = RngState::new(9, 0);
        assert!(matches!(rng.normal_draws(3, 0.0, -1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn same_state_same_draws() {
        let a = RngState::new(42, 3).normal_draws(3, 0.0, 1.0).unwrap();
        let b = RngState::new(42, 3).normal_draws(3, 0.0, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn normal_moments_over_twenty_seeds() {
        // 4 sigma bounds: mean sd/sqrt(n) = 0.0079, sd about sd/sqrt(2n) = 0.0056
        for seed in 0..20 {
            let v = RngState::new(seed, 0).normal_draws(100_000, 12.0, 2.5).unwrap();
            let (m, s) = mean_sd(&v);
            assert!((m - 12.0).abs() < 0.03, "seed {seed}: mean {m}");
            assert!((s - 2.5).abs() < 0.03, "seed {seed}: sd {s}");
        }
    }

    #[test]
    fn uniform_degenerate_range_and_error() {
        let mut rng = RngState::new(1, 0);
        assert_eq!(rng.uniform_draw(5.0, 5.0).unwrap(), 5.0);
        assert!(rng.uniform_draw(2.0, 1.0).is_err());
    }

    #[test]
    fn uniform_containment_and_mean() {
        let mut rng = RngState::new(1, 0);
        for _ in 0..1000 {
            let v = rng.uniform_draw(-5.0, 5.0).unwrap();
            assert!((-5.0..5.0).contains(&v));
        }
        for seed in 0..20 {
            let mut rng = RngState::new(seed, 1);
            let s: f64 = (0..100_000).map(|_| rng.uniform_draw(1.0, 100.0).unwrap()).sum();
            // sd of the mean: 99/sqrt(12 * 1e5) = 0.09
            assert!((s / 100_000.0 - 50.5).abs() < 1.0);
        }
    }

    #[test]
    fn sample_indices_permutation_and_distinctness() {
        let mut rng = RngState::new(5, 0);
        let mut perm = rng.sample_indices(5, 5, false).unwrap();
        perm.sort_unstable();
        assert_eq!(perm, vec![0, 1, 2, 3, 4]);

        let mut big = rng.sample_indices(500_000, 1000, false).unwrap();
        big.sort_unstable();
        big.dedup();
        assert_eq!(big.len(), 1000);

        let with = rng.sample_indices(5, 10, true).unwrap();
        assert_eq!(with.len(), 10);
        assert!(with.iter().all(|&i| i < 5));

        assert!(rng.sample_indices(3, 4, false).is_err());
    }

    #[test]
    fn substreams_are_distinct_and_reproducible() {
        let a = derive_substream(77, 0);
        let b = derive_substream(77, 1);
        assert_ne!(a, b);
        assert_eq!(derive_substream(77, 7), derive_substream(77, 7));

        let mut firsts: Vec<u64> = (0..1000)
            .map(|i| derive_substream(77, i).standard_normal().to_bits())
            .collect();
        firsts.sort_unstable();
        firsts.dedup();
        assert_eq!(firsts.len(), 1000);
    }

    #[test]
    fn substream_is_independent_of_evaluation_order() {
        let forward: Vec<f64> = (0..10).map(|i| derive_substream(3, i).standard_normal()).collect();
        let mut backward: Vec<f64> = (0..10).rev().map(|i| derive_substream(3, i).standard_normal()).collect();
        backward.reverse();
        assert_eq!(forward, backward);
    }
}
