//! Ground-truth generators: free drift-diffusion tracks with irregular
//! sampling, additive observation noise, reflected tracks in a rectangular
//! habitat and the Monte Carlo migration-proportion oracle.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::greens::DomainRect;
use crate::model::{DiffusionLaw, DriftVector, ErrorCumulants, TrackObservation, TrackSeries};
use crate::proportions::{AreaRect, MotionParams};
use crate::rng::{derive_seed, stream_rng};

/// Law of the sampling intervals `δt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntervalDistribution {
    /// Discrete values with probabilities summing to one.
    Fixed { values: Vec<f64>, weights: Vec<f64> },
    UniformRange { lo: f64, hi: f64 },
    Exponential { mean: f64 },
}

impl IntervalDistribution {
    pub fn constant(dt: f64) -> Result<Self> {
        let d = Self::Fixed {
            values: vec![dt],
            weights: vec![1.0],
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Fixed { values, weights } => {
                if values.is_empty() || values.len() != weights.len() {
                    return arg("fixed intervals need one weight per value");
                }
                if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return arg("interval values must be positive");
                }
                if weights.iter().any(|w| !(*w >= 0.0)) {
                    return arg("interval weights must be >= 0");
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return arg(format!("interval weights must sum to 1, got {total}"));
                }
            }
            Self::UniformRange { lo, hi } => {
                if !(*lo > 0.0 && hi >= lo && hi.is_finite()) {
                    return arg(format!("uniform interval range needs 0 < lo <= hi, got [{lo}, {hi}]"));
                }
            }
            Self::Exponential { mean } => {
                if !(*mean > 0.0 && mean.is_finite()) {
                    return arg(format!("exponential interval mean must be positive, got {mean}"));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Fixed { values, weights } => values.iter().zip(weights).map(|(v, w)| v * w).sum(),
            Self::UniformRange { lo, hi } => 0.5 * (lo + hi),
            Self::Exponential { mean } => *mean,
        }
    }

    fn sampler(&self) -> Result<IntervalSampler> {
        self.validate()?;
        Ok(match self {
            Self::Fixed { values, weights } => IntervalSampler::Fixed(
                values.clone(),
                WeightedIndex::new(weights).map_err(|e| crate::Error::Argument(e.to_string()))?,
            ),
            Self::UniformRange { lo, hi } => IntervalSampler::Uniform(*lo, *hi),
            Self::Exponential { mean } => IntervalSampler::Exponential(
                Exp::new(1.0 / mean).map_err(|e| crate::Error::Argument(e.to_string()))?,
            ),
        })
    }
}

enum IntervalSampler {
    Fixed(Vec<f64>, WeightedIndex<f64>),
    Uniform(f64, f64),
    Exponential(Exp<f64>),
}

impl IntervalSampler {
    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Fixed(values, idx) => values[idx.sample(rng)],
            Self::Uniform(lo, hi) => {
                if lo == hi {
                    *lo
                } else {
                    rng.random_range(*lo..*hi)
                }
            }
            Self::Exponential(exp) => loop {
                let dt = exp.sample(rng);
                if dt > 0.0 {
                    break dt;
                }
            },
        }
    }
}

/// Additive observation-error law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    Gaussian { sigma: f64 },
    /// Uniform on `[-a, a]`.
    Uniform { half_width: f64 },
    /// Laplace with scale `b`.
    Laplace { scale: f64 },
}

impl NoiseModel {
    pub fn none() -> Self {
        Self::Gaussian { sigma: 0.0 }
    }

    fn parameter(&self) -> f64 {
        match *self {
            Self::Gaussian { sigma } => sigma,
            Self::Uniform { half_width } => half_width,
            Self::Laplace { scale } => scale,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.parameter();
        if !(p >= 0.0 && p.is_finite()) {
            return arg(format!("noise parameter must be finite and >= 0, got {p}"));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.parameter() == 0.0
    }

    pub fn cumulants(&self) -> ErrorCumulants {
        let (k2, k4) = match *self {
            Self::Gaussian { sigma } => (sigma * sigma, 0.0),
            Self::Uniform { half_width: a } => (a * a / 3.0, -2.0 * a.powi(4) / 15.0),
            Self::Laplace { scale: b } => (2.0 * b * b, 12.0 * b.powi(4)),
        };
        ErrorCumulants {
            variance: k2,
            k3: 0.0,
            k4,
        }
    }

    pub fn variance(&self) -> f64 {
        self.cumulants().variance
    }

    /// One draw of `ε`.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Gaussian { sigma } => {
                let z: f64 = rng.sample(StandardNormal);
                sigma * z
            }
            Self::Uniform { half_width } => half_width * (2.0 * rng.random::<f64>() - 1.0),
            Self::Laplace { scale } => {
                // Inverse CDF on u in (-1/2, 1/2).
                let u = loop {
                    let u: f64 = rng.random::<f64>() - 0.5;
                    if u > -0.5 {
                        break u;
                    }
                };
                -scale * u.signum() * (-2.0 * u.abs()).ln_1p()
            }
        }
    }
}

/// Free two-dimensional track with exact Gaussian transitions: each
/// increment is `N(β δt, 2 ∫ D dt)` per axis, axes independent. Produces
/// `n` increments (`n + 1` observations) starting at `t = 0`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_free_path(
    path_id: &str,
    beta: DriftVector,
    law: &DiffusionLaw,
    intervals: &IntervalDistribution,
    n: usize,
    x0: (f64, f64),
    seed: u64,
) -> Result<TrackSeries> {
    if n < 2 {
        return arg(format!("need at least 2 increments, got {n}"));
    }
    law.validate()?;
    let sampler = intervals.sampler()?;
    let mut rng = stream_rng(seed, 0);
    let mut obs = Vec::with_capacity(n + 1);
    let (mut t, mut x, mut y) = (0.0, x0.0, x0.1);
    obs.push(TrackObservation::new(path_id, t, x, y));
    for _ in 0..n {
        let t_next = t + sampler.draw(&mut rng);
        let sd = (2.0 * law.integrate(t, t_next)?).sqrt();
        let dt = t_next - t;
        let zx: f64 = rng.sample(StandardNormal);
        let zy: f64 = rng.sample(StandardNormal);
        x += beta.beta_x * dt + sd * zx;
        y += beta.beta_y * dt + sd * zy;
        t = t_next;
        obs.push(TrackObservation::new(path_id, t, x, y));
    }
    TrackSeries::new(path_id, obs)
}

/// `count` free tracks; track `k` is `simulate_free_path` with the seed
/// `derive_seed(seed, k)` and id `"{prefix}{k}"`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_free_ensemble(
    prefix: &str,
    count: usize,
    beta: DriftVector,
    law: &DiffusionLaw,
    intervals: &IntervalDistribution,
    n: usize,
    x0: (f64, f64),
    seed: u64,
) -> Result<Vec<TrackSeries>> {
    (0..count)
        .into_par_iter()
        .map(|k| {
            simulate_free_path(
                &format!("{prefix}{k}"),
                beta,
                law,
                intervals,
                n,
                x0,
                derive_seed(seed, k as u64),
            )
        })
        .collect()
}

/// Adds i.i.d. noise to both coordinates of every observation.
pub fn add_noise(track: &TrackSeries, model: &NoiseModel, seed: u64) -> Result<TrackSeries> {
    model.validate()?;
    if model.is_zero() {
        return Ok(track.clone());
    }
    let mut rng = stream_rng(seed, 1);
    let obs = track
        .observations()
        .iter()
        .map(|o| {
            let ex = model.draw(&mut rng);
            let ey = model.draw(&mut rng);
            TrackObservation::new(o.path_id.clone(), o.t, o.x + ex, o.y + ey)
        })
        .collect();
    TrackSeries::new(track.path_id(), obs)
}

/// Sawtooth fold of `v` into `[0, l]`; handles any number of wall crossings.
#[inline]
pub fn fold_into(v: f64, l: f64) -> f64 {
    if (0.0..=l).contains(&v) {
        return v;
    }
    let m = v.rem_euclid(2.0 * l);
    if m > l {
        2.0 * l - m
    } else {
        m
    }
}

/// Largest time step satisfying the reflected-simulation step rule:
/// `√(2 D dt) ≤ L_min / 50` and `|β| dt ≤ L_min / 100` on both axes.
pub fn max_reflected_step(params: &MotionParams, domain: &DomainRect) -> f64 {
    let l = domain.min_side();
    let d = params.d_x.max(params.d_y);
    let b = params.beta_x.abs().max(params.beta_y.abs());
    let by_noise = if d > 0.0 { (l / 50.0).powi(2) / (2.0 * d) } else { f64::INFINITY };
    let by_drift = if b > 0.0 { l / (100.0 * b) } else { f64::INFINITY };
    by_noise.min(by_drift)
}

fn check_motion(params: &MotionParams) -> Result<()> {
    let ok = [params.beta_x, params.beta_y].iter().all(|b| b.is_finite())
        && [params.d_x, params.d_y].iter().all(|d| *d >= 0.0 && d.is_finite());
    if !ok {
        return arg("drift must be finite and diffusion finite and >= 0");
    }
    Ok(())
}

/// Euler step followed by a fold back into the domain.
#[inline]
fn reflected_step<R: Rng>(
    pos: &mut (f64, f64),
    params: &MotionParams,
    sd: (f64, f64),
    dt: f64,
    domain: &DomainRect,
    rng: &mut R,
) {
    let zx: f64 = rng.sample(StandardNormal);
    let zy: f64 = rng.sample(StandardNormal);
    pos.0 = fold_into(pos.0 + params.beta_x * dt + sd.0 * zx, domain.lx);
    pos.1 = fold_into(pos.1 + params.beta_y * dt + sd.1 * zy, domain.ly);
}

/// Reflected track on `[0, L_x] × [0, L_y]` recorded at every step. The
/// horizon `T` is split into `ceil(T / dt_step)` equal steps.
#[allow(clippy::too_many_arguments)]
pub fn simulate_reflected_path(
    path_id: &str,
    params: &MotionParams,
    domain: &DomainRect,
    dt_step: f64,
    horizon: f64,
    start: (f64, f64),
    seed: u64,
) -> Result<TrackSeries> {
    check_motion(params)?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return arg(format!("horizon must be positive, got {horizon}"));
    }
    let limit = max_reflected_step(params, domain);
    if !(dt_step > 0.0 && dt_step <= limit) {
        return arg(format!(
            "dt_step {dt_step} violates the step rule; use dt_step <= {limit:.6e}"
        ));
    }
    if !(0.0..=domain.lx).contains(&start.0) || !(0.0..=domain.ly).contains(&start.1) {
        return arg(format!("start ({}, {}) lies outside the domain", start.0, start.1));
    }
    let steps = (horizon / dt_step).ceil() as usize;
    let dt = horizon / steps as f64;
    let sd = ((2.0 * params.d_x * dt).sqrt(), (2.0 * params.d_y * dt).sqrt());
    let mut rng = stream_rng(seed, 0);
    let mut pos = start;
    let mut obs = Vec::with_capacity(steps + 1);
    obs.push(TrackObservation::new(path_id, 0.0, pos.0, pos.1));
    for k in 1..=steps {
        reflected_step(&mut pos, params, sd, dt, domain, &mut rng);
        obs.push(TrackObservation::new(path_id, k as f64 * dt, pos.0, pos.1));
    }
    TrackSeries::new(path_id, obs)
}

/// Monte Carlo estimate of a migration proportion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McProportion {
    pub w: f64,
    /// Binomial standard error `√(w (1 - w) / N)`.
    pub se: f64,
    pub paths: usize,
    pub steps: usize,
}

/// Fraction of reflected paths, started uniformly in `A_i`, that end in
/// `A_f` after `ΔT`. Uses the largest step allowed by the step rule; path
/// `k` draws from stream `k` of `seed`.
#[allow(clippy::too_many_arguments)]
pub fn mc_migration_proportion(
    a_i: &AreaRect,
    a_f: &AreaRect,
    params: &MotionParams,
    horizon: f64,
    domain: &DomainRect,
    n_paths: usize,
    seed: u64,
) -> Result<McProportion> {
    if n_paths < 1000 {
        return arg(format!("Monte Carlo needs at least 1000 paths, got {n_paths}"));
    }
    check_motion(params)?;
    a_i.validate_in(domain)?;
    a_f.validate_in(domain)?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return arg(format!("horizon must be positive, got {horizon}"));
    }
    let steps = (horizon / max_reflected_step(params, domain)).ceil().max(1.0) as usize;
    let dt = horizon / steps as f64;
    let sd = ((2.0 * params.d_x * dt).sqrt(), (2.0 * params.d_y * dt).sqrt());
    let hits: usize = (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = stream_rng(seed, k as u64);
            let mut pos = (
                a_i.x.lo + a_i.x.width() * rng.random::<f64>(),
                a_i.y.lo + a_i.y.width() * rng.random::<f64>(),
            );
            for _ in 0..steps {
                reflected_step(&mut pos, params, sd, dt, domain, &mut rng);
            }
            usize::from(a_f.x.contains(pos.0) && a_f.y.contains(pos.1))
        })
        .sum();
    let w = hits as f64 / n_paths as f64;
    Ok(McProportion {
        w,
        se: (w * (1.0 - w) / n_paths as f64).sqrt(),
        paths: n_paths,
        steps,
    })
}
