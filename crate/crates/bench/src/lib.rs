//! Fixtures shared by the benchmarks.

use diffmig_core::simulate::simulate_free_ensemble;
use diffmig_core::{DiffusionLaw, DriftVector, IntervalDistribution, PathIncrements};

/// `count` noise-free tracks of `n` exponential-interval increments.
pub fn paths(count: usize, n: usize, seed: u64) -> Vec<PathIncrements> {
    let law = DiffusionLaw::constant(1.0).expect("positive diffusion");
    let beta = DriftVector::new(0.3, -0.1).expect("finite drift");
    let intervals = IntervalDistribution::Exponential { mean: 0.5 };
    simulate_free_ensemble("b", count, beta, &law, &intervals, n, (0.0, 0.0), seed)
        .expect("valid simulation")
        .iter()
        .map(|t| PathIncrements::from_track(t).expect("track has increments"))
        .collect()
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixture_shape() {
        let p = super::paths(3, 10, 1);
        assert_eq!(p.len(), 3);
        assert!(p.iter().all(|p| p.len() == 10));
    }
}
