//! Migration proportions between rectangles of the habitat.
//!
//! `w_if` is the probability that a path started uniformly in `A_i` lies in
//! `A_f` after the horizon `ΔT`. The kernel factorises per axis, so
//! `w_if = w^x_if · w^y_if` with
//! `w^x_if = n^x(A_i, A_f) / n^x(A_i, [0, L_x])`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::estimate::CollectiveParams;
use crate::greens::{nx_if, DomainRect, ImageSumControl, Interval};
use crate::model::Axis;

/// Slack within which a proportion outside `[0, 1]` is treated as rounding.
pub const CLAMP_TOLERANCE: f64 = 1e-10;

/// Named rectangle `[x_lo, x_hi] × [y_lo, y_hi]` in domain coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AreaRect {
    pub name: String,
    pub x: Interval,
    pub y: Interval,
}

impl AreaRect {
    pub fn new(name: impl Into<String>, x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> Result<Self> {
        let area = Self {
            name: name.into(),
            x: Interval::new(x_lo, x_hi)?,
            y: Interval::new(y_lo, y_hi)?,
        };
        area.validate()?;
        Ok(area)
    }

    /// The whole domain as an area.
    pub fn full(name: impl Into<String>, domain: &DomainRect) -> Self {
        Self {
            name: name.into(),
            x: Interval { lo: 0.0, hi: domain.lx },
            y: Interval { lo: 0.0, hi: domain.ly },
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (axis, iv) in [(Axis::X, &self.x), (Axis::Y, &self.y)] {
            if !(iv.lo.is_finite() && iv.hi.is_finite() && iv.lo >= 0.0 && iv.lo < iv.hi) {
                return arg(format!(
                    "area {}: {axis} interval [{}, {}] must satisfy 0 <= lo < hi",
                    self.name, iv.lo, iv.hi
                ));
            }
        }
        Ok(())
    }

    pub fn validate_in(&self, domain: &DomainRect) -> Result<()> {
        self.validate()?;
        if self.x.hi > domain.lx || self.y.hi > domain.ly {
            return arg(format!(
                "area {} extends outside the domain [0, {}] x [0, {}]",
                self.name, domain.lx, domain.ly
            ));
        }
        Ok(())
    }

    pub fn interval(&self, axis: Axis) -> &Interval {
        match axis {
            Axis::X => &self.x,
            Axis::Y => &self.y,
        }
    }

    pub fn area(&self) -> f64 {
        self.x.width() * self.y.width()
    }

    /// Area of the intersection with `other`.
    pub fn overlap(&self, other: &AreaRect) -> f64 {
        let w = self.x.hi.min(other.x.hi) - self.x.lo.max(other.x.lo);
        let h = self.y.hi.min(other.y.hi) - self.y.lo.max(other.y.lo);
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    }
}

/// Drift and diffusion for both axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionParams {
    pub beta_x: f64,
    pub beta_y: f64,
    pub d_x: f64,
    pub d_y: f64,
}

impl MotionParams {
    pub fn new(beta_x: f64, beta_y: f64, d_x: f64, d_y: f64) -> Self {
        Self {
            beta_x,
            beta_y,
            d_x,
            d_y,
        }
    }

    pub fn isotropic(beta_x: f64, beta_y: f64, d: f64) -> Self {
        Self::new(beta_x, beta_y, d, d)
    }

    pub fn from_collective(c: &CollectiveParams) -> Self {
        Self::new(c.x.beta, c.y.beta, c.x.d, c.y.d)
    }

    pub fn beta(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.beta_x,
            Axis::Y => self.beta_y,
        }
    }

    pub fn d(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.d_x,
            Axis::Y => self.d_y,
        }
    }

    /// Rejects non-finite drift and non-positive diffusion.
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_x.is_finite() && self.beta_y.is_finite()) {
            return arg("drift components must be finite");
        }
        for axis in Axis::BOTH {
            let d = self.d(axis);
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::NumericalDomain(format!(
                    "diffusion parameter must be positive, got D_{axis} = {d}"
                )));
            }
        }
        Ok(())
    }
}

fn clamp_unit(w: f64, what: &str) -> Result<f64> {
    if (0.0..=1.0).contains(&w) {
        Ok(w)
    } else if (-CLAMP_TOLERANCE..=1.0 + CLAMP_TOLERANCE).contains(&w) {
        Ok(w.clamp(0.0, 1.0))
    } else {
        Err(Error::NumericalDomain(format!("{what} = {w} lies outside [0, 1]")))
    }
}

/// Per-axis proportion `n(A_i, A_f) / n(A_i, [0, L])`.
pub fn proportion_axis(
    a_i: &Interval,
    a_f: &Interval,
    drift_shift: f64,
    d_int: f64,
    l: f64,
    ctrl: &ImageSumControl,
) -> Result<f64> {
    if !(d_int > 0.0 && d_int.is_finite()) {
        return Err(Error::NumericalDomain(format!(
            "diffusion parameter must be positive, got integrated diffusion {d_int}"
        )));
    }
    let full = Interval { lo: 0.0, hi: l };
    let den = nx_if(a_i, &full, drift_shift, d_int, l, ctrl)?.value;
    if a_f.lo <= 0.0 && a_f.hi >= l {
        nx_if(a_i, a_f, drift_shift, d_int, l, ctrl)?;
        return Ok(1.0);
    }
    if !(den > 0.0) {
        return Err(Error::NumericalDomain(format!(
            "normaliser for initial interval [{}, {}] is {den}",
            a_i.lo, a_i.hi
        )));
    }
    let num = nx_if(a_i, a_f, drift_shift, d_int, l, ctrl)?.value;
    clamp_unit(num / den, "axis proportion")
}

/// `w_if` for one pair of areas over horizon `ΔT`.
pub fn migration_proportion(
    a_i: &AreaRect,
    a_f: &AreaRect,
    params: &MotionParams,
    horizon: f64,
    domain: &DomainRect,
    ctrl: &ImageSumControl,
) -> Result<f64> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return arg(format!("horizon must be positive, got {horizon}"));
    }
    params.validate()?;
    a_i.validate_in(domain)?;
    a_f.validate_in(domain)?;
    let mut w = 1.0;
    for (axis, l) in [(Axis::X, domain.lx), (Axis::Y, domain.ly)] {
        w *= proportion_axis(
            a_i.interval(axis),
            a_f.interval(axis),
            params.beta(axis) * horizon,
            params.d(axis) * horizon,
            l,
            ctrl,
        )?;
    }
    clamp_unit(w, "migration proportion")
}

/// Proportions between every initial and every final area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionMatrix {
    pub initial: Vec<String>,
    #[serde(rename = "final")]
    pub final_areas: Vec<String>,
    /// `entries[i][f]`.
    pub entries: Vec<Vec<f64>>,
    pub row_sums: Vec<f64>,
    /// Whether the final areas are disjoint and cover the domain.
    pub final_partition: bool,
    pub horizon: f64,
    pub params: MotionParams,
}

impl ProportionMatrix {
    pub fn get(&self, i: usize, f: usize) -> f64 {
        self.entries[i][f]
    }

    pub fn max_row_sum_deviation(&self) -> f64 {
        self.row_sums.iter().map(|s| (s - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Checks that `areas` are pairwise disjoint and reports whether they cover
/// the domain.
pub fn check_partition(areas: &[AreaRect], domain: &DomainRect) -> Result<bool> {
    for (k, a) in areas.iter().enumerate() {
        for b in &areas[k + 1..] {
            if a.overlap(b) > 0.0 {
                return arg(format!("areas {} and {} overlap", a.name, b.name));
            }
        }
    }
    let covered: f64 = areas.iter().map(AreaRect::area).sum();
    Ok((covered - domain.area()).abs() <= 1e-12 * domain.area())
}

/// Tabulates [`migration_proportion`]. With `require_partition` the final
/// areas must be pairwise disjoint; whenever they tile the domain each row
/// must sum to one within [`CLAMP_TOLERANCE`].
pub fn proportion_matrix(
    initial: &[AreaRect],
    finals: &[AreaRect],
    params: &MotionParams,
    horizon: f64,
    domain: &DomainRect,
    ctrl: &ImageSumControl,
    require_partition: bool,
) -> Result<ProportionMatrix> {
    if initial.is_empty() || finals.is_empty() {
        return arg("proportion matrix needs at least one initial and one final area");
    }
    for a in initial.iter().chain(finals) {
        a.validate_in(domain)?;
    }
    let final_partition = if require_partition {
        check_partition(finals, domain)?
    } else {
        check_partition(finals, domain).unwrap_or(false)
    };
    let entries: Vec<Vec<f64>> = initial
        .par_iter()
        .map(|a_i| {
            finals
                .iter()
                .map(|a_f| migration_proportion(a_i, a_f, params, horizon, domain, ctrl))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let row_sums: Vec<f64> = entries
        .iter()
        .map(|row| crate::numeric::fsum(row.iter().copied()))
        .collect();
    if final_partition {
        if let Some((i, s)) = row_sums
            .iter()
            .enumerate()
            .find(|(_, s)| (**s - 1.0).abs() > CLAMP_TOLERANCE)
        {
            return Err(Error::NumericalDomain(format!(
                "row {} sums to {s} over a partition of the domain",
                initial[i].name
            )));
        }
    }
    Ok(ProportionMatrix {
        initial: initial.iter().map(|a| a.name.clone()).collect(),
        final_areas: finals.iter().map(|a| a.name.clone()).collect(),
        entries,
        row_sums,
        final_partition,
        horizon,
        params: *params,
    })
}

/// `nx × ny` grid of areas covering the domain, cut at the given fractions.
pub fn grid_partition(domain: &DomainRect, x_cuts: &[f64], y_cuts: &[f64]) -> Result<Vec<AreaRect>> {
    let edges = |cuts: &[f64], l: f64| -> Result<Vec<f64>> {
        if cuts.iter().any(|c| !(*c > 0.0 && *c < 1.0)) || cuts.windows(2).any(|w| w[1] <= w[0]) {
            return arg("grid cuts must be increasing fractions in (0, 1)");
        }
        let mut e = vec![0.0];
        e.extend(cuts.iter().map(|c| c * l));
        e.push(l);
        Ok(e)
    };
    let xe = edges(x_cuts, domain.lx)?;
    let ye = edges(y_cuts, domain.ly)?;
    let mut out = Vec::new();
    for (j, yw) in ye.windows(2).enumerate() {
        for (i, xw) in xe.windows(2).enumerate() {
            out.push(AreaRect::new(format!("r{j}c{i}"), xw[0], xw[1], yw[0], yw[1])?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctrl() -> ImageSumControl {
        ImageSumControl::default()
    }

    #[test]
    fn full_final_interval_is_one() {
        let a = Interval::new(0.2, 0.7).unwrap();
        let full = Interval::new(0.0, 2.0).unwrap();
        assert_eq!(proportion_axis(&a, &full, 0.3, 0.4, 2.0, &ctrl()).unwrap(), 1.0);
        let err = proportion_axis(&a, &full, 0.0, 0.0, 2.0, &ctrl()).unwrap_err();
        assert!(err.to_string().contains("diffusion parameter must be positive"));
    }

    #[test]
    fn uniform_limit_half() {
        let l = 3.0;
        let half = Interval::new(0.0, l / 2.0).unwrap();
        for a in [(0.0, 0.1), (1.0, 2.9), (2.0, 3.0)] {
            let a_i = Interval::new(a.0, a.1).unwrap();
            let w = proportion_axis(&a_i, &half, 0.0, 10.0 * l * l, l, &ctrl()).unwrap();
            assert!((w - 0.5).abs() < 1e-6, "{w}");
        }
    }

    #[test]
    fn mirror_symmetry_is_exact() {
        let l = 4.0;
        let a_i = Interval::new(1.0, 3.0).unwrap();
        let a_f = Interval::new(0.5, 1.5).unwrap();
        let mirror = Interval::new(2.5, 3.5).unwrap();
        let w1 = proportion_axis(&a_i, &a_f, 0.0, 0.7, l, &ctrl()).unwrap();
        let w2 = proportion_axis(&a_i, &mirror, 0.0, 0.7, l, &ctrl()).unwrap();
        assert!((w1 - w2).abs() <= 4.0 * f64::EPSILON, "{w1} vs {w2}");
    }

    #[test]
    fn two_dimensional_rules() {
        let dom = DomainRect::new(2.0, 1.0).unwrap();
        let p = MotionParams::isotropic(0.0, 0.0, 1.0);
        let a_i = AreaRect::new("a", 0.1, 0.5, 0.2, 0.4).unwrap();
        let omega = AreaRect::full("omega", &dom);
        assert_eq!(migration_proportion(&a_i, &omega, &p, 3.0, &dom, &ctrl()).unwrap(), 1.0);

        // D ΔT / L² = 10 on the longer side.
        let horizon = 10.0 * 4.0;
        let quarter = AreaRect::new("q", 0.0, 1.0, 0.0, 0.5).unwrap();
        let w = migration_proportion(&a_i, &quarter, &p, horizon, &dom, &ctrl()).unwrap();
        assert!((w - 0.25).abs() < 3e-6);

        let outside = AreaRect::new("o", 1.5, 2.5, 0.0, 0.5).unwrap();
        assert!(matches!(
            migration_proportion(&a_i, &outside, &p, 1.0, &dom, &ctrl()),
            Err(Error::Argument(_))
        ));
        let bad = MotionParams::isotropic(0.0, 0.0, -1.0);
        assert!(migration_proportion(&a_i, &quarter, &bad, 1.0, &dom, &ctrl()).is_err());
    }

    #[test]
    fn matrices() {
        let dom = DomainRect::new(1.0, 1.0).unwrap();
        let p = MotionParams::isotropic(0.05, -0.02, 0.01);
        let omega = AreaRect::full("omega", &dom);
        let init = grid_partition(&dom, &[0.3], &[0.6]).unwrap();
        let m = proportion_matrix(&init, std::slice::from_ref(&omega), &p, 2.0, &dom, &ctrl(), true).unwrap();
        assert!(m.entries.iter().all(|r| r == &vec![1.0]));
        assert!(m.final_partition);

        let fin = grid_partition(&dom, &[0.2, 0.7], &[0.45, 0.5]).unwrap();
        let m = proportion_matrix(&init, &fin, &p, 2.0, &dom, &ctrl(), true).unwrap();
        assert_eq!(m.entries.len(), 4);
        assert_eq!(m.entries[0].len(), 9);
        assert!(m.max_row_sum_deviation() <= 1e-10);

        let uniform = MotionParams::isotropic(0.0, 0.0, 1.0);
        let fin = grid_partition(&dom, &[0.5], &[0.5]).unwrap();
        let m = proportion_matrix(&init, &fin, &uniform, 10.0, &dom, &ctrl(), true).unwrap();
        assert!(m.entries.iter().flatten().all(|w| (w - 0.25).abs() < 3e-6));

        let overlapping = vec![
            AreaRect::new("a", 0.0, 0.6, 0.0, 1.0).unwrap(),
            AreaRect::new("b", 0.5, 1.0, 0.0, 1.0).unwrap(),
        ];
        assert!(proportion_matrix(&init, &overlapping, &p, 1.0, &dom, &ctrl(), true).is_err());
        let m = proportion_matrix(&init, &overlapping, &p, 1.0, &dom, &ctrl(), false).unwrap();
        assert!(!m.final_partition);
    }

    #[test]
    fn enlarging_final_area_never_decreases() {
        let dom = DomainRect::new(1.0, 1.0).unwrap();
        let p = MotionParams::isotropic(0.2, 0.1, 0.05);
        let a_i = AreaRect::new("i", 0.1, 0.3, 0.6, 0.9).unwrap();
        let mut prev = 0.0;
        for k in 1..=10 {
            let hi = k as f64 / 10.0;
            let a_f = AreaRect::new("f", 0.0, hi, 0.0, hi).unwrap();
            let w = migration_proportion(&a_i, &a_f, &p, 1.5, &dom, &ctrl()).unwrap();
            assert!(w >= prev - 1e-15);
            prev = w;
        }
    }
}
