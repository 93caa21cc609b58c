//! Tracks, increments and the cumulant structure of noisy observed
//! increments.
//!
//! An observed coordinate is `x_obs(t_i) = x(t_i) + eps_i` with i.i.d.
//! errors, so consecutive observed increments share one error term and are
//! correlated even though the underlying diffusion increments are not. The
//! functions here give the exact covariance and higher joint cumulants of the
//! observed increments, and the cumulants of their sum over a whole path.

use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::numeric::{two_diff, ExactSum};

/// Coordinate axis. The process is separable, so every estimator runs per axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::X, Axis::Y];

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One located fix: time in days, planar coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackObservation {
    pub path_id: String,
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl TrackObservation {
    pub fn new(path_id: impl Into<String>, t: f64, x: f64, y: f64) -> Self {
        Self {
            path_id: path_id.into(),
            t,
            x,
            y,
        }
    }

    pub fn coord(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
        }
    }
}

/// A single path: at least two observations with strictly increasing time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackSeries {
    path_id: String,
    observations: Vec<TrackObservation>,
}

impl TrackSeries {
    pub fn new(path_id: impl Into<String>, observations: Vec<TrackObservation>) -> Result<Self> {
        let path_id = path_id.into();
        if observations.len() < 2 {
            return Err(Error::Data(format!(
                "path {path_id}: need at least 2 observations, got {}",
                observations.len()
            )));
        }
        for (k, obs) in observations.iter().enumerate() {
            if obs.path_id != path_id {
                return Err(Error::Data(format!(
                    "observation {k} belongs to path {} not {path_id}",
                    obs.path_id
                )));
            }
            if !(obs.t.is_finite() && obs.x.is_finite() && obs.y.is_finite()) {
                return Err(Error::Data(format!(
                    "path {path_id}: non-finite value at index {k}"
                )));
            }
        }
        check_increasing(observations.iter().map(|o| o.t))?;
        Ok(Self {
            path_id,
            observations,
        })
    }

    /// Builds a track from parallel `(t, x, y)` columns.
    pub fn from_columns(path_id: &str, t: &[f64], x: &[f64], y: &[f64]) -> Result<Self> {
        if t.len() != x.len() || t.len() != y.len() {
            return arg("column lengths differ");
        }
        let obs = t
            .iter()
            .zip(x)
            .zip(y)
            .map(|((&t, &x), &y)| TrackObservation::new(path_id, t, x, y))
            .collect();
        Self::new(path_id, obs)
    }

    pub fn path_id(&self) -> &str {
        &self.path_id
    }

    pub fn observations(&self) -> &[TrackObservation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.t).collect()
    }

    pub fn coords(&self, axis: Axis) -> Vec<f64> {
        self.observations.iter().map(|o| o.coord(axis)).collect()
    }

    pub fn first(&self) -> &TrackObservation {
        &self.observations[0]
    }

    pub fn last(&self) -> &TrackObservation {
        &self.observations[self.observations.len() - 1]
    }
}

fn check_increasing(times: impl Iterator<Item = f64>) -> Result<()> {
    let mut prev: Option<f64> = None;
    for (k, t) in times.enumerate() {
        if let Some(p) = prev {
            if t <= p {
                return Err(Error::Data(format!("non-increasing time at index {k}")));
            }
        }
        prev = Some(t);
    }
    Ok(())
}

/// One increment `(dv, dt)` between consecutive observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Increment {
    pub dv: f64,
    pub dt: f64,
}

/// Per-axis increments of one track.
///
/// Each stored difference keeps its rounding residual, so sums over the
/// series are exact and telescope to `last - first` of the source track.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementSeries {
    axis: Axis,
    increments: Vec<Increment>,
    residuals: Vec<Increment>,
}

impl IncrementSeries {
    /// Increments supplied directly (synthetic data, resampling).
    pub fn from_pairs(axis: Axis, increments: Vec<Increment>) -> Result<Self> {
        for (k, inc) in increments.iter().enumerate() {
            if !(inc.dt > 0.0 && inc.dt.is_finite()) {
                return Err(Error::Data(format!("interval {k} has non-positive length {}", inc.dt)));
            }
            if !inc.dv.is_finite() {
                return Err(Error::Data(format!("increment {k} is not finite")));
            }
        }
        let residuals = vec![Increment { dv: 0.0, dt: 0.0 }; increments.len()];
        Ok(Self {
            axis,
            increments,
            residuals,
        })
    }

    pub(crate) fn with_residuals(
        axis: Axis,
        increments: Vec<Increment>,
        residuals: Vec<Increment>,
    ) -> Self {
        debug_assert_eq!(increments.len(), residuals.len());
        Self {
            axis,
            increments,
            residuals,
        }
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn increments(&self) -> &[Increment] {
        &self.increments
    }

    pub(crate) fn residuals(&self) -> &[Increment] {
        &self.residuals
    }

    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn dts(&self) -> impl Iterator<Item = f64> + '_ {
        self.increments.iter().map(|i| i.dt)
    }

    pub fn dvs(&self) -> impl Iterator<Item = f64> + '_ {
        self.increments.iter().map(|i| i.dv)
    }

    /// Exact `Σ dv` (equals `last - first` for series extracted from a track).
    pub fn total_displacement(&self) -> f64 {
        let mut acc = ExactSum::new();
        for (inc, res) in self.increments.iter().zip(&self.residuals) {
            acc.add(inc.dv);
            acc.add(res.dv);
        }
        acc.value()
    }

    /// Exact `Σ dt`.
    pub fn duration(&self) -> f64 {
        let mut acc = ExactSum::new();
        for (inc, res) in self.increments.iter().zip(&self.residuals) {
            acc.add(inc.dt);
            acc.add(res.dt);
        }
        acc.value()
    }
}

/// Splits a track into x and y increment series.
pub fn extract_increments(track: &TrackSeries) -> Result<(IncrementSeries, IncrementSeries)> {
    check_increasing(track.observations.iter().map(|o| o.t))?;
    Ok((
        axis_increments(track, Axis::X),
        axis_increments(track, Axis::Y),
    ))
}

fn axis_increments(track: &TrackSeries, axis: Axis) -> IncrementSeries {
    let obs = track.observations();
    let mut incs = Vec::with_capacity(obs.len() - 1);
    let mut res = Vec::with_capacity(obs.len() - 1);
    for w in obs.windows(2) {
        let (dv, rv) = two_diff(w[1].coord(axis), w[0].coord(axis));
        let (dt, rt) = two_diff(w[1].t, w[0].t);
        incs.push(Increment { dv, dt });
        res.push(Increment { dv: rv, dt: rt });
    }
    IncrementSeries::with_residuals(axis, incs, res)
}

/// Large-scale summary of one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub duration: f64,
    pub dx: f64,
    pub dy: f64,
    pub n: usize,
}

pub fn summarize(track: &TrackSeries) -> Result<PathSummary> {
    let (x, y) = extract_increments(track)?;
    Ok(PathSummary {
        duration: x.duration(),
        dx: x.total_displacement(),
        dy: y.total_displacement(),
        n: x.len(),
    })
}

/// Cumulants of the additive measurement error (first cumulant is zero).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorCumulants {
    pub variance: f64,
    pub k3: f64,
    pub k4: f64,
}

impl ErrorCumulants {
    pub fn new(variance: f64, k3: f64, k4: f64) -> Result<Self> {
        if !(variance >= 0.0 && variance.is_finite()) {
            return arg(format!("error variance must be finite and >= 0, got {variance}"));
        }
        if !(k3.is_finite() && k4.is_finite()) {
            return arg("error cumulants must be finite");
        }
        Ok(Self { variance, k3, k4 })
    }

    pub fn none() -> Self {
        Self {
            variance: 0.0,
            k3: 0.0,
            k4: 0.0,
        }
    }

    pub fn gaussian(sigma: f64) -> Self {
        Self {
            variance: sigma * sigma,
            k3: 0.0,
            k4: 0.0,
        }
    }

    /// Error cumulant of order `a`, if it is specified.
    pub fn cumulant(&self, a: u32) -> Option<f64> {
        match a {
            1 => Some(0.0),
            2 => Some(self.variance),
            3 => Some(self.k3),
            4 => Some(self.k4),
            _ => None,
        }
    }
}

/// Time course of the diffusion coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiffusionLaw {
    /// Constant `D`. Zero is accepted and means deterministic motion.
    Constant { d: f64 },
    /// `values[k]` holds on `[breakpoints[k], breakpoints[k+1])`; the first
    /// value extends backwards and the last one forwards.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
}

impl DiffusionLaw {
    pub fn constant(d: f64) -> Result<Self> {
        if !(d >= 0.0 && d.is_finite()) {
            return arg(format!("diffusion coefficient must be finite and >= 0, got {d}"));
        }
        Ok(Self::Constant { d })
    }

    pub fn piecewise(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let law = Self::PiecewiseConstant {
            breakpoints,
            values,
        };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Constant { d } => {
                if !(*d >= 0.0 && d.is_finite()) {
                    return arg(format!("diffusion coefficient must be finite and >= 0, got {d}"));
                }
            }
            Self::PiecewiseConstant {
                breakpoints,
                values,
            } => {
                if breakpoints.is_empty() || breakpoints.len() != values.len() {
                    return arg("piecewise diffusion needs one value per breakpoint");
                }
                if breakpoints.iter().any(|b| !b.is_finite())
                    || breakpoints.windows(2).any(|w| w[1] <= w[0])
                {
                    return arg("breakpoints must be finite and strictly increasing");
                }
                if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return arg("piecewise diffusion values must be positive");
                }
            }
        }
        Ok(())
    }

    /// `∫_{t0}^{t1} D(t) dt`, exact for both variants.
    pub fn integrate(&self, t0: f64, t1: f64) -> Result<f64> {
        if !(t1 >= t0) {
            return arg(format!("integration bounds reversed: t0={t0}, t1={t1}"));
        }
        Ok(match self {
            Self::Constant { d } => d * (t1 - t0),
            Self::PiecewiseConstant {
                breakpoints,
                values,
            } => {
                let mut acc = ExactSum::new();
                for (k, &v) in values.iter().enumerate() {
                    let lo = if k == 0 { f64::NEG_INFINITY } else { breakpoints[k] };
                    let hi = breakpoints.get(k + 1).copied().unwrap_or(f64::INFINITY);
                    let a = t0.max(lo);
                    let b = t1.min(hi);
                    if b > a {
                        acc.add(v * (b - a));
                    }
                }
                acc.value()
            }
        })
    }
}

/// Drift vector in length per day.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DriftVector {
    pub beta_x: f64,
    pub beta_y: f64,
}

impl DriftVector {
    pub fn new(beta_x: f64, beta_y: f64) -> Result<Self> {
        if !(beta_x.is_finite() && beta_y.is_finite()) {
            return arg("drift components must be finite");
        }
        Ok(Self { beta_x, beta_y })
    }

    pub fn component(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.beta_x,
            Axis::Y => self.beta_y,
        }
    }
}

fn increment_variance(law: &DiffusionLaw, times: &[f64], k: usize) -> Result<f64> {
    Ok(2.0 * law.integrate(times[k], times[k + 1])?)
}

/// Covariance of observed increments `k` and `l` (0-based; increment `k`
/// spans `times[k]..times[k+1]`).
///
/// Diagonal: `2∫D dt + 2σ0²`. Neighbours share one error term with opposite
/// signs, giving `-σ0²`. Everything further apart is independent.
pub fn obs_increment_cov(
    k: usize,
    l: usize,
    law: &DiffusionLaw,
    err: &ErrorCumulants,
    times: &[f64],
) -> Result<f64> {
    let n = times.len().saturating_sub(1);
    if k >= n || l >= n {
        return arg(format!("increment index out of range: ({k}, {l}) with n = {n}"));
    }
    Ok(match k.abs_diff(l) {
        0 => increment_variance(law, times, k)? + 2.0 * err.variance,
        1 => -err.variance,
        _ => 0.0,
    })
}

/// Joint cumulant of order `a >= 3` with increment `i` repeated `a_i` times
/// and increment `j` repeated `a - a_i` times.
///
/// Gaussian increments have no cumulants beyond the second, so only the error
/// terms survive: `(1 + (-1)^a) k_a` on the diagonal, `(-1)^{a_i} k_a` for
/// `j = i - 1`, `(-1)^{a - a_i} k_a` for `j = i + 1`, zero otherwise.
pub fn joint_cumulant_obs(a: u32, a_i: u32, i: usize, j: usize, err: &ErrorCumulants) -> Result<f64> {
    if a < 3 {
        return arg(format!(
            "joint cumulant order must be >= 3 (got {a}); use obs_increment_cov for order 2"
        ));
    }
    if a_i > a {
        return arg(format!("multiplicity {a_i} exceeds order {a}"));
    }
    let ka = err
        .cumulant(a)
        .ok_or_else(|| Error::Argument(format!("error cumulant of order {a} is not specified")))?;
    let sign = |p: u32| if p.is_multiple_of(2) { 1.0 } else { -1.0 };
    // All copies on one increment: the pair collapses to a single index.
    if i == j || a_i == 0 || a_i == a {
        return Ok((1.0 + sign(a)) * ka);
    }
    Ok(if j + 1 == i {
        sign(a_i) * ka
    } else if j == i + 1 {
        sign(a - a_i) * ka
    } else {
        0.0
    })
}

/// Cumulants of the whole-path displacement `ΔX`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplacementCumulants {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
}

/// Cumulants of `ΔX = Σ δx_obs` for one axis.
///
/// `ΔX` telescopes to `x_n - x_0 + ε_n - ε_0`, so the interior errors cancel:
/// only two error terms contribute, whatever the number of increments.
pub fn displacement_cumulants(
    law: &DiffusionLaw,
    times: &[f64],
    beta: f64,
    err: &ErrorCumulants,
) -> Result<DisplacementCumulants> {
    if times.len() < 2 {
        return arg("need at least one increment");
    }
    check_increasing(times.iter().copied()).map_err(|e| Error::Argument(e.to_string()))?;
    let n = times.len() - 1;
    let duration = times[n] - times[0];
    let mut var = ExactSum::new();
    for k in 0..n {
        var.add(increment_variance(law, times, k)?);
    }
    var.add(2.0 * err.variance);
    Ok(DisplacementCumulants {
        k1: beta * duration,
        k2: var.value(),
        k3: 0.0,
        k4: 2.0 * err.k4,
    })
}

/// Centers and scales increments: `u = (δx - β δt) / sqrt(2 D δt + 2σ0²)`.
///
/// `error_variance = None` leaves the error term out of the scale.
pub fn standardize_increments(
    incs: &IncrementSeries,
    beta: f64,
    d_eff: f64,
    error_variance: Option<f64>,
) -> Result<Vec<f64>> {
    let residual = |inc: &Increment| inc.dv - beta * inc.dt;
    // A path that follows its drift exactly has nothing to scale.
    if d_eff == 0.0 && error_variance.unwrap_or(0.0) == 0.0 && incs.increments().iter().all(|i| residual(i) == 0.0) {
        return Ok(vec![0.0; incs.len()]);
    }
    if !(d_eff > 0.0 && d_eff.is_finite()) {
        return Err(Error::NumericalDomain(format!(
            "diffusion parameter must be positive to standardize, got {d_eff}"
        )));
    }
    let extra = match error_variance {
        Some(v) if v >= 0.0 => 2.0 * v,
        Some(v) => return arg(format!("error variance must be >= 0, got {v}")),
        None => 0.0,
    };
    Ok(incs
        .increments()
        .iter()
        .map(|inc| residual(inc) / (2.0 * d_eff * inc.dt + extra).sqrt())
        .collect())
}
