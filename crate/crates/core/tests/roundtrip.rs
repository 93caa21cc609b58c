//! Simulate noisy tracks, then recover the generating parameters.

use diffmig_core::estimate::{
    correct_for_error, estimate_collective, fit_effective, DiffusionSum, PathIncrements,
};
use diffmig_core::simulate::{add_noise, simulate_free_ensemble};
use diffmig_core::stats::{mean, std_dev};
use diffmig_core::{DiffusionLaw, DriftVector, IntervalDistribution, NoiseModel};

const PATHS: usize = 400;
const SIGMA0: f64 = 0.3;

fn within_three_se(label: &str, deviations: &[f64]) {
    let m = mean(deviations);
    let se = std_dev(deviations) / (deviations.len() as f64).sqrt();
    assert!(m.abs() <= 3.0 * se, "{label}: mean deviation {m:e} exceeds 3 SE ({se:e})");
}

#[test]
fn noisy_irregular_tracks_recover_drift_and_diffusion() {
    let beta = DriftVector::new(0.5, -0.2).unwrap();
    let law = DiffusionLaw::constant(1.0).unwrap();
    let intervals = IntervalDistribution::Exponential { mean: 0.2 };
    let noise = NoiseModel::Gaussian { sigma: SIGMA0 };
    let tracks = simulate_free_ensemble("t", PATHS, beta, &law, &intervals, 300, (0.0, 0.0), 2024).unwrap();

    let mut dev_bx = Vec::new();
    let mut dev_by = Vec::new();
    let mut dev_dx = Vec::new();
    let mut dev_dy_true = Vec::new();
    let mut effs = Vec::new();
    for (k, tr) in tracks.iter().enumerate() {
        let noisy = add_noise(tr, &noise, 10_000 + k as u64).unwrap();
        let p = PathIncrements::from_track(&noisy).unwrap();
        let g = p.groups(0.0).unwrap();
        let e = fit_effective(&p, &g, DiffusionSum::Banded).unwrap();
        let var = SIGMA0 * SIGMA0;
        dev_bx.push(e.x.beta - 0.5);
        dev_by.push(e.y.beta + 0.2);
        dev_dx.push(e.x.d - (1.0 + var / e.duration));
        dev_dy_true.push(correct_for_error(e.y.d, var, e.duration).unwrap() - 1.0);
        effs.push(e);
    }
    within_three_se("beta_x", &dev_bx);
    within_three_se("beta_y", &dev_by);
    within_three_se("D_x + error term", &dev_dx);
    within_three_se("corrected D_y", &dev_dy_true);

    let c = estimate_collective(&effs).unwrap();
    assert!((c.x.beta - 0.5).abs() < 0.05);
    assert!((c.x.d - 1.0).abs() < 0.05);
    assert_eq!(c.paths, PATHS);
}

#[test]
fn literal_form_with_known_drift_is_unbiased() {
    let beta = DriftVector::new(0.3, 0.0).unwrap();
    let law = DiffusionLaw::constant(0.5).unwrap();
    let intervals = IntervalDistribution::Fixed {
        values: vec![0.5, 1.0, 2.0],
        weights: vec![0.25, 0.5, 0.25],
    };
    let tracks = simulate_free_ensemble("k", PATHS, beta, &law, &intervals, 100, (0.0, 0.0), 7).unwrap();
    let devs: Vec<f64> = tracks
        .iter()
        .map(|tr| {
            let p = PathIncrements::from_track(tr).unwrap();
            diffmig_core::estimate::estimate_d_eff(&p.x, 0.3, DiffusionSum::Banded).unwrap() - 0.5
        })
        .collect();
    within_three_se("banded D with known drift", &devs);
}
