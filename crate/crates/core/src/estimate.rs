//! Effective (per path) and collective (per ensemble) drift and diffusion
//! estimators, resampling confidence intervals and the effective-versus-
//! collective comparison.
//!
//! The effective drift is `Σ_g mean_g(δx) / Σ_g δt_g` over groups of equal
//! interval length. The effective diffusion uses the banded quadratic form
//! `Σ c_i² + 2 Σ c_i c_{i+1}` of the centered increments: observed
//! increments are correlated only with their immediate neighbours, so the
//! band captures the whole expectation `2 D ΔT + 2σ0²` of `Var(ΔX)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::model::{extract_increments, standardize_increments, Axis, IncrementSeries, TrackSeries};
use crate::numeric::{two_sided_p, ExactSum};
use crate::rng::stream_rng;
use crate::stats::{quantile_sorted, quantile_weibull_sorted, sorted, std_dev};

/// Increments sharing (approximately) one interval length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalGroup {
    pub representative_dt: f64,
    /// Indices into the source series, ascending.
    pub members: Vec<usize>,
    /// `n_i / n`.
    pub weight: f64,
}

impl IntervalGroup {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn values(&self, incs: &IncrementSeries) -> Vec<f64> {
        self.members.iter().map(|&k| incs.increments()[k].dv).collect()
    }
}

/// Bins increments by interval length.
///
/// Sorted lengths are chained: a value joins the current group when it is
/// within `rel_tol · max` of its predecessor. `rel_tol = 0` groups only
/// identical lengths.
pub fn group_intervals(incs: &IncrementSeries, rel_tol: f64) -> Result<Vec<IntervalGroup>> {
    if !(rel_tol >= 0.0 && rel_tol.is_finite()) {
        return arg(format!("rel_tol must be finite and >= 0, got {rel_tol}"));
    }
    let incr = incs.increments();
    let res = incs.residuals();
    let n = incr.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| incr[a].dt.total_cmp(&incr[b].dt).then(a.cmp(&b)));

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut prev = f64::NAN;
    for k in order {
        let dt = incr[k].dt;
        match groups.last_mut() {
            Some(g) if (dt - prev).abs() <= rel_tol * dt.max(prev) => g.push(k),
            _ => groups.push(vec![k]),
        }
        prev = dt;
    }
    Ok(groups
        .into_iter()
        .map(|mut members| {
            members.sort_unstable();
            let mut acc = ExactSum::new();
            for &k in &members {
                acc.add(incr[k].dt);
                acc.add(res[k].dt);
            }
            IntervalGroup {
                representative_dt: acc.value() / members.len() as f64,
                weight: members.len() as f64 / n as f64,
                members,
            }
        })
        .collect())
}

/// How the off-diagonal terms of the diffusion quadratic form are summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionSum {
    /// Diagonal plus first off-diagonals; the only terms with non-zero mean.
    #[default]
    Banded,
    /// Every pair `(i, j)`: `(Σ c_i)² / 2ΔT`. With a drift fitted to the same
    /// increments this is identically zero, so it is only informative when
    /// the drift is known.
    Full,
}

/// Drift and diffusion for one axis of one path or ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisEstimate {
    pub beta: f64,
    pub d: f64,
    /// Set when the diffusion estimate is not positive (small samples).
    pub d_nonpositive: bool,
}

impl AxisEstimate {
    pub fn new(beta: f64, d: f64) -> Self {
        Self {
            beta,
            d,
            d_nonpositive: !(d > 0.0),
        }
    }
}

fn require_groups(incs: &IncrementSeries, groups: &[IntervalGroup]) -> Result<()> {
    let covered: usize = groups.iter().map(IntervalGroup::len).sum();
    if covered != incs.len() || groups.iter().any(|g| g.members.iter().any(|&k| k >= incs.len())) {
        return arg("interval groups do not partition the increment series");
    }
    Ok(())
}

/// Drift and diffusion of one axis from a multiset of increment indices,
/// `picks[g]` drawn from group `g`. The identity selection gives the point
/// estimate; resampled selections give bootstrap replicates.
struct Selection<'a> {
    incs: &'a IncrementSeries,
    picks: &'a [Vec<usize>],
}

struct SelectionFit {
    beta: f64,
    d: f64,
    duration: f64,
}

impl Selection<'_> {
    fn fit(&self, mode: DiffusionSum) -> SelectionFit {
        let incr = self.incs.increments();
        let res = self.incs.residuals();
        let n = incr.len();

        // Group means. Singleton groups keep their residuals so that, with
        // the identity selection, the ratio is (x_n - x_0) / (t_n - t_0)
        // correctly rounded.
        let mut num = ExactSum::new();
        let mut den = ExactSum::new();
        let mut duration = ExactSum::new();
        for g in self.picks {
            let m = g.len();
            if m == 1 {
                let k = g[0];
                num.add(incr[k].dv);
                num.add(res[k].dv);
                den.add(incr[k].dt);
                den.add(res[k].dt);
            } else {
                let mut sv = ExactSum::new();
                let mut st = ExactSum::new();
                for &k in g {
                    sv.add(incr[k].dv);
                    sv.add(res[k].dv);
                    st.add(incr[k].dt);
                    st.add(res[k].dt);
                }
                num.add(sv.value() / m as f64);
                den.add(st.value() / m as f64);
            }
            for &k in g {
                duration.add(incr[k].dt);
                duration.add(res[k].dt);
            }
        }
        let rep_sum = den.value();
        let beta = num.value() / rep_sum;
        let duration = duration.value();
        let centered = |k: usize| incr[k].dv - beta * incr[k].dt;

        let d = match mode {
            DiffusionSum::Full => {
                let mut s = ExactSum::new();
                for g in self.picks {
                    for &k in g {
                        s.add(centered(k));
                    }
                }
                let s = s.value();
                s * s / (2.0 * duration)
            }
            DiffusionSum::Banded => {
                // Weight carried by each source increment in the drift estimate.
                let mut w = vec![0.0; n];
                for g in self.picks {
                    let wk = 1.0 / (g.len() as f64 * rep_sum);
                    for &k in g {
                        w[k] += wk;
                    }
                }
                let spread: f64 = w
                    .iter()
                    .zip(incr)
                    .filter(|(wk, _)| **wk != 0.0)
                    .map(|(wk, inc)| wk * wk * 2.0 * inc.dt)
                    .sum();
                let mut q = ExactSum::new();
                let mut expect = ExactSum::new();
                for g in self.picks {
                    for &k in g {
                        let dt = incr[k].dt;
                        let ck = centered(k);
                        q.add(ck * ck);
                        expect.add(2.0 * dt - 4.0 * w[k] * dt * dt + spread * dt * dt);
                        if k + 1 < n {
                            let dtn = incr[k + 1].dt;
                            q.add(2.0 * ck * centered(k + 1));
                            expect.add(
                                -4.0 * dtn * w[k] * dt - 4.0 * dt * w[k + 1] * dtn
                                    + 2.0 * spread * dt * dtn,
                            );
                        }
                    }
                }
                // `expect` is E[q] / D when D is constant and there is no
                // error; dividing by it removes the O(1/n) shrinkage caused by
                // centering with the fitted drift. A selection that repeats a
                // single increment carries no diffusion information and has a
                // zero expectation; it falls back to the plain normaliser.
                let expect = expect.value();
                if expect > 0.0 {
                    q.value() / expect
                } else {
                    q.value() / (2.0 * duration)
                }
            }
        };
        SelectionFit { beta, d, duration }
    }
}

fn identity_picks(groups: &[IntervalGroup]) -> Vec<Vec<usize>> {
    groups.iter().map(|g| g.members.clone()).collect()
}

/// Effective drift `Σ_g mean_g(δx) / Σ_g δt_g`.
pub fn estimate_beta_eff(incs: &IncrementSeries, groups: &[IntervalGroup]) -> Result<f64> {
    if incs.is_empty() {
        return arg("cannot estimate drift from an empty series");
    }
    require_groups(incs, groups)?;
    let picks = identity_picks(groups);
    Ok(Selection { incs, picks: &picks }.fit(DiffusionSum::Full).beta)
}

/// Diffusion quadratic form centered with a given drift:
/// `[Σ c_i² + 2 Σ c_i c_{i+1}] / 2ΔT` (banded) or `(Σ c_i)² / 2ΔT` (full),
/// `c_i = δx_i - β δt_i`.
///
/// With a known drift this has mean `D + σ0²/ΔT`. When the drift was fitted
/// to the same increments prefer [`fit_axis`], which also removes the
/// centering shrinkage.
pub fn estimate_d_eff(incs: &IncrementSeries, beta: f64, mode: DiffusionSum) -> Result<f64> {
    if incs.len() < 2 {
        return arg(format!("need at least 2 increments, got {}", incs.len()));
    }
    let c: Vec<f64> = incs.increments().iter().map(|i| i.dv - beta * i.dt).collect();
    let duration = incs.duration();
    let mut q = ExactSum::new();
    match mode {
        DiffusionSum::Banded => {
            for (k, ck) in c.iter().enumerate() {
                q.add(ck * ck);
                if let Some(next) = c.get(k + 1) {
                    q.add(2.0 * ck * next);
                }
            }
            Ok(q.value() / (2.0 * duration))
        }
        DiffusionSum::Full => {
            q.extend(c.iter().copied());
            let s = q.value();
            Ok(s * s / (2.0 * duration))
        }
    }
}

/// Drift and diffusion of one axis, the diffusion centered with the fitted
/// drift and normalised by its exact expectation.
pub fn fit_axis(
    incs: &IncrementSeries,
    groups: &[IntervalGroup],
    mode: DiffusionSum,
) -> Result<AxisEstimate> {
    if incs.len() < 2 {
        return arg(format!("need at least 2 increments, got {}", incs.len()));
    }
    require_groups(incs, groups)?;
    let picks = identity_picks(groups);
    let fit = Selection { incs, picks: &picks }.fit(mode);
    Ok(AxisEstimate::new(fit.beta, fit.d))
}

/// Removes the measurement-error contribution `σ0²/ΔT` from an effective
/// diffusion estimate.
pub fn correct_for_error(d_eff: f64, error_variance: f64, duration: f64) -> Result<f64> {
    if !(duration > 0.0) {
        return arg(format!("duration must be positive, got {duration}"));
    }
    if !(error_variance >= 0.0) {
        return arg(format!("error variance must be >= 0, got {error_variance}"));
    }
    Ok(d_eff - error_variance / duration)
}

/// Both axes of one track, ready for estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct PathIncrements {
    pub path_id: String,
    pub x: IncrementSeries,
    pub y: IncrementSeries,
}

impl PathIncrements {
    pub fn from_track(track: &TrackSeries) -> Result<Self> {
        let (x, y) = extract_increments(track)?;
        Ok(Self {
            path_id: track.path_id().to_owned(),
            x,
            y,
        })
    }

    pub fn axis(&self, axis: Axis) -> &IncrementSeries {
        match axis {
            Axis::X => &self.x,
            Axis::Y => &self.y,
        }
    }

    pub fn duration(&self) -> f64 {
        self.x.duration()
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn groups(&self, rel_tol: f64) -> Result<Vec<IntervalGroup>> {
        group_intervals(&self.x, rel_tol)
    }
}

/// Effective parameters of one path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    pub path_id: String,
    pub duration: f64,
    pub n: usize,
    pub x: AxisEstimate,
    pub y: AxisEstimate,
}

impl EffectiveParams {
    pub fn axis(&self, axis: Axis) -> &AxisEstimate {
        match axis {
            Axis::X => &self.x,
            Axis::Y => &self.y,
        }
    }
}

pub fn fit_effective(
    path: &PathIncrements,
    groups: &[IntervalGroup],
    mode: DiffusionSum,
) -> Result<EffectiveParams> {
    Ok(EffectiveParams {
        path_id: path.path_id.clone(),
        duration: path.duration(),
        n: path.len(),
        x: fit_axis(&path.x, groups, mode)?,
        y: fit_axis(&path.y, groups, mode)?,
    })
}

/// Duration-weighted ensemble parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollectiveParams {
    pub x: AxisEstimate,
    pub y: AxisEstimate,
    pub duration: f64,
    pub paths: usize,
}

impl CollectiveParams {
    pub fn axis(&self, axis: Axis) -> &AxisEstimate {
        match axis {
            Axis::X => &self.x,
            Axis::Y => &self.y,
        }
    }
}

fn weighted_collective<'a>(items: impl Iterator<Item = (&'a AxisEstimate, &'a AxisEstimate, f64)>) -> CollectiveParams {
    let mut bx = ExactSum::new();
    let mut dx = ExactSum::new();
    let mut by = ExactSum::new();
    let mut dy = ExactSum::new();
    let mut total = ExactSum::new();
    let mut paths = 0;
    for (x, y, w) in items {
        bx.add(x.beta * w);
        dx.add(x.d * w);
        by.add(y.beta * w);
        dy.add(y.d * w);
        total.add(w);
        paths += 1;
    }
    let total = total.value();
    CollectiveParams {
        x: AxisEstimate::new(bx.value() / total, dx.value() / total),
        y: AxisEstimate::new(by.value() / total, dy.value() / total),
        duration: total,
        paths,
    }
}

/// `β_collect = Σ β^γ ΔT^γ / Σ ΔT^γ`, and likewise for `D`.
pub fn estimate_collective(paths: &[EffectiveParams]) -> Result<CollectiveParams> {
    if paths.is_empty() {
        return arg("collective estimate needs at least one path");
    }
    Ok(weighted_collective(paths.iter().map(|p| (&p.x, &p.y, p.duration))))
}

/// Replicate count, interval level and master seed of a percentile bootstrap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSettings {
    pub replicates: usize,
    pub level: f64,
    pub seed: u64,
}

impl BootstrapSettings {
    pub fn validate(&self) -> Result<()> {
        if self.replicates < 100 {
            return arg(format!("bootstrap needs at least 100 replicates, got {}", self.replicates));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return arg(format!("confidence level must lie in (0, 1), got {}", self.level));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCI {
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
    pub replicates: usize,
    pub seed: u64,
}

impl BootstrapCI {
    fn percentile(values: &[f64], settings: &BootstrapSettings) -> Self {
        let s = sorted(values);
        let tail = 0.5 * (1.0 - settings.level);
        Self {
            level: settings.level,
            lower: quantile_sorted(&s, tail),
            upper: quantile_sorted(&s, 1.0 - tail),
            replicates: values.len(),
            seed: settings.seed,
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Raw bootstrap replicates of the four parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Replicates {
    pub beta_x: Vec<f64>,
    pub d_x: Vec<f64>,
    pub beta_y: Vec<f64>,
    pub d_y: Vec<f64>,
}

impl Replicates {
    fn from_rows(rows: Vec<[f64; 4]>) -> Self {
        let mut r = Replicates::default();
        for [bx, dx, by, dy] in rows {
            r.beta_x.push(bx);
            r.d_x.push(dx);
            r.beta_y.push(by);
            r.d_y.push(dy);
        }
        r
    }

    pub fn get(&self, axis: Axis, parameter: Parameter) -> &[f64] {
        match (axis, parameter) {
            (Axis::X, Parameter::Beta) => &self.beta_x,
            (Axis::X, Parameter::D) => &self.d_x,
            (Axis::Y, Parameter::Beta) => &self.beta_y,
            (Axis::Y, Parameter::D) => &self.d_y,
        }
    }

    pub fn len(&self) -> usize {
        self.beta_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beta_x.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameter {
    Beta,
    D,
}

impl Parameter {
    pub const BOTH: [Parameter; 2] = [Parameter::Beta, Parameter::D];

    pub fn as_str(self) -> &'static str {
        match self {
            Parameter::Beta => "beta",
            Parameter::D => "d",
        }
    }
}

/// Percentile intervals plus the replicates they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub beta_x: BootstrapCI,
    pub d_x: BootstrapCI,
    pub beta_y: BootstrapCI,
    pub d_y: BootstrapCI,
    #[serde(skip)]
    pub replicates: Replicates,
}

impl BootstrapResult {
    fn from_replicates(replicates: Replicates, settings: &BootstrapSettings) -> Self {
        Self {
            beta_x: BootstrapCI::percentile(&replicates.beta_x, settings),
            d_x: BootstrapCI::percentile(&replicates.d_x, settings),
            beta_y: BootstrapCI::percentile(&replicates.beta_y, settings),
            d_y: BootstrapCI::percentile(&replicates.d_y, settings),
            replicates,
        }
    }

    pub fn ci(&self, axis: Axis, parameter: Parameter) -> &BootstrapCI {
        match (axis, parameter) {
            (Axis::X, Parameter::Beta) => &self.beta_x,
            (Axis::X, Parameter::D) => &self.d_x,
            (Axis::Y, Parameter::Beta) => &self.beta_y,
            (Axis::Y, Parameter::D) => &self.d_y,
        }
    }

    /// Bootstrap standard error (replicate standard deviation).
    pub fn standard_error(&self, axis: Axis, parameter: Parameter) -> f64 {
        std_dev(self.replicates.get(axis, parameter))
    }
}

/// Draws `n_g` indices with replacement from each group.
fn resample_groups<R: Rng>(groups: &[IntervalGroup], rng: &mut R) -> Vec<Vec<usize>> {
    groups
        .iter()
        .map(|g| {
            (0..g.len())
                .map(|_| g.members[rng.random_range(0..g.len())])
                .collect()
        })
        .collect()
}

fn fit_both(path: &PathIncrements, picks: &[Vec<usize>], mode: DiffusionSum) -> ([f64; 4], f64) {
    let fx = Selection { incs: &path.x, picks }.fit(mode);
    let fy = Selection { incs: &path.y, picks }.fit(mode);
    ([fx.beta, fx.d, fy.beta, fy.d], fx.duration)
}

/// Percentile bootstrap of one path's effective parameters.
///
/// Each replicate redraws increments with replacement inside every interval
/// group, keeping the group sizes. A drawn increment brings its successor
/// along for the neighbour term of the diffusion form, so the lag-one
/// error correlation survives resampling. Replicate `b` uses stream `b` of
/// the master seed.
pub fn bootstrap_effective(
    path: &PathIncrements,
    groups: &[IntervalGroup],
    settings: &BootstrapSettings,
    mode: DiffusionSum,
) -> Result<BootstrapResult> {
    settings.validate()?;
    if path.len() < 2 {
        return arg("bootstrap needs at least 2 increments");
    }
    require_groups(&path.x, groups)?;
    let rows: Vec<[f64; 4]> = (0..settings.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(settings.seed, b as u64);
            let picks = resample_groups(groups, &mut rng);
            fit_both(path, &picks, mode).0
        })
        .collect();
    Ok(BootstrapResult::from_replicates(Replicates::from_rows(rows), settings))
}

/// Two-stage percentile bootstrap of the collective parameters: paths are
/// redrawn with replacement, then increments within each drawn path.
pub fn bootstrap_collective(
    paths: &[PathIncrements],
    rel_tol: f64,
    settings: &BootstrapSettings,
    mode: DiffusionSum,
) -> Result<BootstrapResult> {
    settings.validate()?;
    if paths.len() < 2 {
        return arg(format!(
            "two-stage bootstrap needs at least 2 paths (got {}); use bootstrap_effective for a single path",
            paths.len()
        ));
    }
    if let Some(p) = paths.iter().find(|p| p.len() < 2) {
        return arg(format!("path {} has fewer than 2 increments", p.path_id));
    }
    let groups: Vec<Vec<IntervalGroup>> = paths
        .iter()
        .map(|p| p.groups(rel_tol))
        .collect::<Result<_>>()?;
    let rows: Vec<[f64; 4]> = (0..settings.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(settings.seed, b as u64);
            let fits: Vec<(AxisEstimate, AxisEstimate, f64)> = (0..paths.len())
                .map(|_| {
                    let k = rng.random_range(0..paths.len());
                    let picks = resample_groups(&groups[k], &mut rng);
                    let ([bx, dx, by, dy], duration) = fit_both(&paths[k], &picks, mode);
                    (AxisEstimate::new(bx, dx), AxisEstimate::new(by, dy), duration)
                })
                .collect();
            let c = weighted_collective(fits.iter().map(|(x, y, w)| (x, y, *w)));
            [c.x.beta, c.x.d, c.y.beta, c.y.d]
        })
        .collect();
    Ok(BootstrapResult::from_replicates(Replicates::from_rows(rows), settings))
}

/// One row of the effective-versus-collective table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub path_id: String,
    pub axis: Axis,
    pub parameter: Parameter,
    pub effective: f64,
    pub collective: f64,
    pub standard_error: f64,
    pub z: f64,
    pub p_value: f64,
}

/// z-scores `(θ_eff - θ_collect) / SE_boot(θ_eff)` with two-sided normal
/// p-values, per path, axis and parameter.
pub fn compare_models(
    paths: &[EffectiveParams],
    boots: &[BootstrapResult],
    collective: &CollectiveParams,
) -> Result<Vec<ComparisonRow>> {
    if paths.len() < 2 {
        return arg("model comparison needs at least 2 paths");
    }
    if boots.len() != paths.len() {
        return arg(format!(
            "bootstrap replicates missing: {} paths but {} replicate sets",
            paths.len(),
            boots.len()
        ));
    }
    let mut rows = Vec::with_capacity(paths.len() * 4);
    for (p, b) in paths.iter().zip(boots) {
        if b.replicates.len() < 2 {
            return arg(format!("bootstrap replicates missing for path {}", p.path_id));
        }
        for axis in Axis::BOTH {
            for parameter in Parameter::BOTH {
                let pick = |e: &AxisEstimate| match parameter {
                    Parameter::Beta => e.beta,
                    Parameter::D => e.d,
                };
                let effective = pick(p.axis(axis));
                let coll = pick(collective.axis(axis));
                let se = b.standard_error(axis, parameter);
                let diff = effective - coll;
                let z = if diff == 0.0 { 0.0 } else { diff / se };
                rows.push(ComparisonRow {
                    path_id: p.path_id.clone(),
                    axis,
                    parameter,
                    effective,
                    collective: coll,
                    standard_error: se,
                    z,
                    p_value: two_sided_p(z),
                });
            }
        }
    }
    Ok(rows)
}

/// Matched quantiles at `k / (m + 1)`, `k = 1..m`, `m = min(len)`.
pub fn qq_pairs(a: &[f64], b: &[f64]) -> Vec<(f64, f64)> {
    let m = a.len().min(b.len());
    let sa = sorted(a);
    let sb = sorted(b);
    (1..=m)
        .map(|k| {
            let p = k as f64 / (m + 1) as f64;
            (quantile_weibull_sorted(&sa, p), quantile_weibull_sorted(&sb, p))
        })
        .collect()
}

/// Pooled standardized increments of one axis under per-path parameters and
/// under the collective parameters.
pub fn standardized_pools(
    paths: &[PathIncrements],
    effective: &[EffectiveParams],
    collective: &CollectiveParams,
    axis: Axis,
    error_variance: Option<f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if paths.len() != effective.len() {
        return arg("one parameter set per path required");
    }
    let mut eff = Vec::new();
    let mut coll = Vec::new();
    let c = collective.axis(axis);
    for (p, e) in paths.iter().zip(effective) {
        let incs = p.axis(axis);
        let a = e.axis(axis);
        eff.extend(standardize_increments(incs, a.beta, a.d, error_variance).map_err(|err| {
            Error::NumericalDomain(format!("path {}: {err}", p.path_id))
        })?);
        coll.extend(standardize_increments(incs, c.beta, c.d, error_variance)?);
    }
    Ok((eff, coll))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Increment;

    fn series(pairs: &[(f64, f64)]) -> IncrementSeries {
        IncrementSeries::from_pairs(
            Axis::X,
            pairs.iter().map(|&(dv, dt)| Increment { dv, dt }).collect(),
        )
        .unwrap()
    }

    #[test]
    fn grouping_rules() {
        let g = group_intervals(&series(&[(0.0, 1.0), (0.0, 2.0), (0.0, 3.0)]), 0.0).unwrap();
        assert_eq!(g.len(), 3);
        assert!(g.iter().all(|g| (g.weight - 1.0 / 3.0).abs() < 1e-16));

        let g = group_intervals(&series(&[(0.0, 1.0), (0.0, 1.0), (0.0, 2.0)]), 0.0).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].members, vec![0, 1]);
        assert_eq!(g[0].representative_dt, 1.0);
        assert!((g[0].weight - 2.0 / 3.0).abs() < 1e-16);
        assert!((g[1].weight - 1.0 / 3.0).abs() < 1e-16);

        let g = group_intervals(&series(&[(0.0, 1.0), (0.0, 1.0005)]), 1e-3).unwrap();
        assert_eq!(g.len(), 1);
        assert!((g[0].representative_dt - 1.000_25).abs() < 1e-15);

        assert!(group_intervals(&series(&[(0.0, 1.0)]), -1.0).is_err());
    }

    #[test]
    fn drift_of_deterministic_and_still_paths() {
        let s = series(&[(0.6, 0.3), (2.2, 1.1), (0.2, 0.1), (4.0, 2.0)]);
        let g = group_intervals(&s, 0.0).unwrap();
        assert_eq!(estimate_beta_eff(&s, &g).unwrap(), 2.0);
        let still = series(&[(0.0, 0.3), (0.0, 1.1)]);
        let g = group_intervals(&still, 0.0).unwrap();
        assert_eq!(estimate_beta_eff(&still, &g).unwrap(), 0.0);
        let empty = IncrementSeries::from_pairs(Axis::X, vec![]).unwrap();
        assert!(estimate_beta_eff(&empty, &[]).is_err());
    }

    #[test]
    fn grouped_drift_uses_group_means() {
        // Groups: dt=1 {1, 3} -> mean 2; dt=2 {5} -> 5. (2 + 5) / (1 + 2).
        let s = series(&[(1.0, 1.0), (5.0, 2.0), (3.0, 1.0)]);
        let g = group_intervals(&s, 0.0).unwrap();
        assert!((estimate_beta_eff(&s, &g).unwrap() - 7.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn diffusion_of_deterministic_path_is_zero() {
        let s = series(&[(0.6, 0.3), (2.2, 1.1), (0.2, 0.1), (4.0, 2.0)]);
        let g = group_intervals(&s, 0.0).unwrap();
        let fit = fit_axis(&s, &g, DiffusionSum::Banded).unwrap();
        assert_eq!(fit.beta, 2.0);
        assert_eq!(fit.d, 0.0);
        assert!(fit.d_nonpositive);
        assert_eq!(estimate_d_eff(&s, 2.0, DiffusionSum::Banded).unwrap(), 0.0);
        assert!(estimate_d_eff(&series(&[(1.0, 1.0)]), 0.0, DiffusionSum::Banded).is_err());
    }

    #[test]
    fn literal_forms() {
        let s = series(&[(1.0, 1.0), (-2.0, 1.0), (3.0, 2.0)]);
        // c = (1, -2, 3); banded: 1 + 4 + 9 + 2(-2 - 6) = -2; full: 2² = 4.
        assert_eq!(estimate_d_eff(&s, 0.0, DiffusionSum::Banded).unwrap(), -2.0 / 8.0);
        assert_eq!(estimate_d_eff(&s, 0.0, DiffusionSum::Full).unwrap(), 4.0 / 8.0);
    }

    #[test]
    fn error_correction() {
        assert!((correct_for_error(1.005, 0.5, 100.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(correct_for_error(0.7, 0.0, 3.0).unwrap(), 0.7);
        assert!(correct_for_error(0.7, 0.1, 0.0).is_err());
    }

    fn eff(beta: f64, d: f64, duration: f64) -> EffectiveParams {
        EffectiveParams {
            path_id: "p".into(),
            duration,
            n: 10,
            x: AxisEstimate::new(beta, d),
            y: AxisEstimate::new(-beta, 2.0 * d),
        }
    }

    #[test]
    fn collective_is_duration_weighted() {
        let c = estimate_collective(&[eff(1.0, 1.0, 1.0), eff(3.0, 2.0, 3.0)]).unwrap();
        assert_eq!(c.x.beta, 2.5);
        assert_eq!(c.x.d, 1.75);
        assert_eq!(c.y.beta, -2.5);
        assert_eq!(c.duration, 4.0);
        assert_eq!(c.paths, 2);
        let single = eff(0.3, 0.9, 7.0);
        let c = estimate_collective(std::slice::from_ref(&single)).unwrap();
        assert_eq!(c.x, single.x);
        assert_eq!(c.y, single.y);
        assert!(estimate_collective(&[]).is_err());
    }

    fn path(id: &str, pairs: &[(f64, f64)]) -> PathIncrements {
        PathIncrements {
            path_id: id.into(),
            x: series(pairs),
            y: IncrementSeries::from_pairs(
                Axis::Y,
                pairs.iter().map(|&(dv, dt)| Increment { dv: -dv, dt }).collect(),
            )
            .unwrap(),
        }
    }

    const SETTINGS: BootstrapSettings = BootstrapSettings {
        replicates: 200,
        level: 0.9,
        seed: 11,
    };

    #[test]
    fn bootstrap_constant_groups_have_zero_width() {
        // Constant within each group: drift replicates never change.
        let p = path("a", &[(1.0, 1.0), (4.0, 2.0), (1.0, 1.0), (4.0, 2.0), (1.0, 1.0)]);
        let g = p.groups(0.0).unwrap();
        let b = bootstrap_effective(&p, &g, &SETTINGS, DiffusionSum::Banded).unwrap();
        assert_eq!(b.beta_x.width(), 0.0);
        assert_eq!(b.beta_y.width(), 0.0);
        // One group of identical increments: diffusion is pinned too.
        let p = path("b", &[(0.5, 1.0); 6]);
        let g = p.groups(0.0).unwrap();
        let b = bootstrap_effective(&p, &g, &SETTINGS, DiffusionSum::Banded).unwrap();
        assert_eq!(b.d_x.width(), 0.0);
        assert_eq!(b.d_x.lower, 0.0);
    }

    #[test]
    fn bootstrap_is_seed_deterministic_and_validates() {
        let p = path("a", &[(0.3, 1.0), (-0.4, 2.0), (1.1, 1.0), (0.2, 0.5), (-0.9, 1.0)]);
        let g = p.groups(0.0).unwrap();
        let a = bootstrap_effective(&p, &g, &SETTINGS, DiffusionSum::Banded).unwrap();
        let b = bootstrap_effective(&p, &g, &SETTINGS, DiffusionSum::Banded).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.replicates, b.replicates);
        let few = BootstrapSettings {
            replicates: 99,
            ..SETTINGS
        };
        assert!(bootstrap_effective(&p, &g, &few, DiffusionSum::Banded).is_err());
    }

    #[test]
    fn collective_bootstrap_rules() {
        let p = path("a", &[(0.5, 1.0); 5]);
        let q = path("b", &[(0.5, 1.0); 5]);
        let r = bootstrap_collective(&[p.clone(), q.clone()], 0.0, &SETTINGS, DiffusionSum::Banded).unwrap();
        assert_eq!(r.beta_x.width(), 0.0);
        assert_eq!(r.d_x.width(), 0.0);
        let again = bootstrap_collective(&[p.clone(), q], 0.0, &SETTINGS, DiffusionSum::Banded).unwrap();
        assert_eq!(r, again);
        let err = bootstrap_collective(&[p], 0.0, &SETTINGS, DiffusionSum::Banded).unwrap_err();
        assert!(err.to_string().contains("bootstrap_effective"));
    }

    #[test]
    fn identical_paths_compare_with_zero_z() {
        let pairs = [(0.3, 1.0), (-0.4, 2.0), (1.1, 1.0), (0.2, 0.5), (-0.9, 1.0)];
        let paths = [path("a", &pairs), path("b", &pairs)];
        let effs: Vec<_> = paths
            .iter()
            .map(|p| fit_effective(p, &p.groups(0.0).unwrap(), DiffusionSum::Banded).unwrap())
            .collect();
        let boots: Vec<_> = paths
            .iter()
            .map(|p| bootstrap_effective(p, &p.groups(0.0).unwrap(), &SETTINGS, DiffusionSum::Banded).unwrap())
            .collect();
        let c = estimate_collective(&effs).unwrap();
        let rows = compare_models(&effs, &boots, &c).unwrap();
        assert_eq!(rows.len(), 8);
        assert!(rows.iter().all(|r| r.z == 0.0 && r.p_value == 1.0));
        assert!(compare_models(&effs, &boots[..1], &c).is_err());
    }

    #[test]
    fn self_qq_is_diagonal() {
        let a = [0.3, -1.2, 2.2, 0.0, 0.7];
        for (p, q) in qq_pairs(&a, &a) {
            assert_eq!(p, q);
        }
        assert_eq!(qq_pairs(&a, &a).len(), 5);
    }
}
