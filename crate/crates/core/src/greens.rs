//! Transition kernels of drift-diffusion on the line and on a reflecting
//! interval `[0, L]`, plus closed-form box integrals of the reflected kernel.
//!
//! All kernels are parameterised by the integrated diffusion `s = ∫D dt`
//! over the horizon and the drift displacement `b = β ΔT`, so a
//! time-dependent `D(t)` enters only through `s`.
//!
//! The reflected kernel is the image sum
//!
//! ```text
//! G(x_f | x_i) = Σ_n g(x_f + x_i - b + 2nL) + g(x_f - x_i - b + 2nL),
//! g(u) = exp(-u² / 4s) / sqrt(4πs)
//! ```
//!
//! and its double integral over a pair of intervals reduces, shell by shell,
//! to second differences of `2√s · F(u / 2√s)` with
//! `F(z) = (z erf z + exp(-z²)/√π) / 2`, the second antiderivative of the
//! Gaussian.

use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::numeric::{erf, erfc, integrate, ExactSum, QuadratureOptions, FRAC_1_SQRT_PI};

/// Habitat `[0, L_x] × [0, L_y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainRect {
    pub lx: f64,
    pub ly: f64,
}

impl DomainRect {
    pub fn new(lx: f64, ly: f64) -> Result<Self> {
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return arg(format!("domain sides must be positive, got {lx} x {ly}"));
        }
        Ok(Self { lx, ly })
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    pub fn min_side(&self) -> f64 {
        self.lx.min(self.ly)
    }
}

/// Truncation policy for image sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageSumControl {
    /// Stop once the bound on all remaining shells is below this fraction of
    /// the accumulated value.
    pub tail_tol: f64,
    pub max_images: usize,
    pub min_images: usize,
}

impl Default for ImageSumControl {
    fn default() -> Self {
        Self {
            tail_tol: 1e-12,
            max_images: 10_000,
            min_images: 2,
        }
    }
}

impl ImageSumControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.tail_tol > 0.0 && self.tail_tol < 1.0) {
            return arg(format!("tail_tol must lie in (0, 1), got {}", self.tail_tol));
        }
        if self.max_images < self.min_images {
            return arg("max_images must be >= min_images");
        }
        Ok(())
    }
}

/// Closed interval `[lo, hi]` on one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return arg(format!("invalid interval [{lo}, {hi}]"));
        }
        Ok(Self { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Value of a truncated image sum with a rigorous bound on the omitted shells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageSum {
    pub value: f64,
    pub tail_bound: f64,
    /// Highest `|n|` included.
    pub shells: usize,
}

/// Which pairing of corner terms is used to assemble a box integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CornerCombination {
    /// Reflected-image second difference plus direct-image second difference;
    /// this is the exact integral of the kernel.
    #[default]
    Standard,
    /// Direct-image term entered with the opposite sign. Not an integral of
    /// the kernel; kept so validation can demonstrate it is rejected.
    Transposed,
}

fn check_positive_diffusion(d_int: f64) -> Result<()> {
    if !(d_int > 0.0 && d_int.is_finite()) {
        return Err(Error::NumericalDomain(format!(
            "diffusion parameter must be positive, got integrated diffusion {d_int}"
        )));
    }
    Ok(())
}

/// Free Gaussian kernel: density of a displacement `dx` whose mean is
/// `shift` (normally `β δt`) after integrated diffusion `d_int`.
pub fn green_free_1d(dx: f64, shift: f64, d_int: f64) -> Result<f64> {
    check_positive_diffusion(d_int)?;
    let u = dx - shift;
    Ok((-u * u / (4.0 * d_int)).exp() / (4.0 * std::f64::consts::PI * d_int).sqrt())
}

/// `F(z̃) = (z̃ erf z̃ + exp(-z̃²)/√π) / 2` on the already-scaled argument.
pub fn f_scaled(zt: f64) -> f64 {
    0.5 * (zt * erf(zt) + (-zt * zt).exp() * FRAC_1_SQRT_PI)
}

/// `F̃(z) = F(z / 2√s)`.
pub fn ftilde(z: f64, s: f64) -> Result<f64> {
    check_positive_diffusion(s)?;
    Ok(f_scaled(z / (2.0 * s.sqrt())))
}

/// `F(u) - |u|/2` for `u >= 0`; decays like `exp(-u²)/(4√π u²)`.
fn f_excess(u: f64) -> f64 {
    0.5 * ((-u * u).exp() * FRAC_1_SQRT_PI - u * erfc(u))
}

/// `F(a) - F(b) - F(c) + F(d)` for `a + d = b + c`, without the cancellation
/// of the linear asymptote.
fn f_second_difference(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let lo = a.min(b).min(c).min(d);
    let hi = a.max(b).max(c).max(d);
    // |·| is linear on each half-line, so its second difference vanishes
    // unless the corners straddle zero.
    let linear = if lo >= 0.0 || hi <= 0.0 {
        0.0
    } else {
        0.5 * ((a.abs() - b.abs()) - (c.abs() - d.abs()))
    };
    let excess = (f_excess(a.abs()) - f_excess(b.abs())) - (f_excess(c.abs()) - f_excess(d.abs()));
    linear + excess
}

/// `Σ_{m > n}` of the four image terms is at most `erfc(z)/L` where
/// `z = (2nL - reach) / 2√s` and `reach` bounds every unshifted argument.
fn shell_tail_bound(n: usize, l: f64, reach: f64, s: f64) -> Option<f64> {
    let gap = 2.0 * n as f64 * l - reach;
    (gap >= 0.0).then(|| erfc(gap / (2.0 * s.sqrt())) / l)
}

fn sum_shells<F: FnMut(f64) -> f64>(
    mut shell_term: F,
    l: f64,
    reach: f64,
    s: f64,
    tail_scale: f64,
    ctrl: &ImageSumControl,
) -> Result<ImageSum> {
    ctrl.validate()?;
    let mut acc = ExactSum::new();
    acc.add(shell_term(0.0));
    let mut n = 0usize;
    loop {
        n += 1;
        if n > ctrl.max_images {
            return Err(Error::Convergence(format!(
                "image sum not converged after {} shells (L = {l}, integrated diffusion = {s})",
                ctrl.max_images
            )));
        }
        let shift = 2.0 * n as f64 * l;
        acc.add(shell_term(shift));
        acc.add(shell_term(-shift));
        if n < ctrl.min_images {
            continue;
        }
        if let Some(bound) = shell_tail_bound(n, l, reach, s) {
            let bound = bound * tail_scale;
            let value = acc.value();
            if bound <= ctrl.tail_tol * value.abs() {
                return Ok(ImageSum {
                    value,
                    tail_bound: bound,
                    shells: n,
                });
            }
        }
    }
}

fn check_position(v: f64, l: f64, what: &str) -> Result<()> {
    if !(0.0..=l).contains(&v) {
        return arg(format!("{what} = {v} lies outside [0, {l}]"));
    }
    Ok(())
}

fn check_interval(iv: &Interval, l: f64, what: &str) -> Result<()> {
    if !(iv.lo >= 0.0 && iv.hi <= l && iv.lo <= iv.hi) {
        return arg(format!("{what} [{}, {}] lies outside [0, {l}]", iv.lo, iv.hi));
    }
    Ok(())
}

/// Reflected kernel `G(x_f | x_i)` on `[0, L]`.
pub fn green_reflected_1d(
    x_i: f64,
    x_f: f64,
    drift_shift: f64,
    d_int: f64,
    l: f64,
    ctrl: &ImageSumControl,
) -> Result<ImageSum> {
    check_positive_diffusion(d_int)?;
    if !(l > 0.0 && l.is_finite()) {
        return arg(format!("domain length must be positive, got {l}"));
    }
    check_position(x_i, l, "initial position")?;
    check_position(x_f, l, "final position")?;
    let reflected = x_f + x_i - drift_shift;
    let direct = x_f - x_i - drift_shift;
    let norm = 1.0 / (4.0 * std::f64::consts::PI * d_int).sqrt();
    let inv4s = 1.0 / (4.0 * d_int);
    let g = |u: f64| (-u * u * inv4s).exp() * norm;
    let reach = reflected.abs().max(direct.abs());
    sum_shells(
        |shift| g(reflected + shift) + g(direct + shift),
        l,
        reach,
        d_int,
        1.0,
        ctrl,
    )
}

/// Box integral `∫_{A_f} dx_f ∫_{A_i} dx_i G(x_f | x_i)` in closed form.
///
/// With zero drift the kernel conserves mass, so `nx_if(A, [0, L]) = |A|`.
pub fn nx_if(
    a_i: &Interval,
    a_f: &Interval,
    drift_shift: f64,
    d_int: f64,
    l: f64,
    ctrl: &ImageSumControl,
) -> Result<ImageSum> {
    nx_if_with(a_i, a_f, drift_shift, d_int, l, ctrl, CornerCombination::Standard)
}

/// [`nx_if`] with an explicit corner combination.
pub fn nx_if_with(
    a_i: &Interval,
    a_f: &Interval,
    drift_shift: f64,
    d_int: f64,
    l: f64,
    ctrl: &ImageSumControl,
    combination: CornerCombination,
) -> Result<ImageSum> {
    check_positive_diffusion(d_int)?;
    if !(l > 0.0 && l.is_finite()) {
        return arg(format!("domain length must be positive, got {l}"));
    }
    check_interval(a_i, l, "initial interval")?;
    check_interval(a_f, l, "final interval")?;
    let scale = 2.0 * d_int.sqrt();
    let inv = 1.0 / scale;
    let (fu, fl, iu, il) = (a_f.hi, a_f.lo, a_i.hi, a_i.lo);
    let direct_sign = match combination {
        CornerCombination::Standard => 1.0,
        CornerCombination::Transposed => -1.0,
    };
    let shell = |shift: f64| {
        let c = shift - drift_shift;
        let reflected = f_second_difference(
            (fu + iu + c) * inv,
            (fl + iu + c) * inv,
            (fu + il + c) * inv,
            (fl + il + c) * inv,
        );
        let direct = f_second_difference(
            (fu - il + c) * inv,
            (fl - il + c) * inv,
            (fu - iu + c) * inv,
            (fl - iu + c) * inv,
        );
        scale * (reflected + direct_sign * direct)
    };
    let reach = 2.0 * l + drift_shift.abs();
    let mut sum = sum_shells(shell, l, reach, d_int, a_i.width() * a_f.width(), ctrl)?;
    if sum.value < 0.0 && combination == CornerCombination::Standard {
        if sum.value < -1e-12 * a_i.width().max(a_f.width()) {
            return Err(Error::NumericalDomain(format!(
                "box integral came out negative ({:e})",
                sum.value
            )));
        }
        sum.value = 0.0;
    }
    Ok(sum)
}

/// Adaptive 2-D quadrature of the reflected kernel over `A_i × A_f`.
///
/// Independent of the closed form: it integrates point evaluations of
/// [`green_reflected_1d`] with nested Gauss–Kronrod rules.
pub fn nx_if_quadrature(
    a_i: &Interval,
    a_f: &Interval,
    drift_shift: f64,
    d_int: f64,
    l: f64,
    ctrl: &ImageSumControl,
) -> Result<f64> {
    nx_if_quadrature_with(
        a_i,
        a_f,
        drift_shift,
        d_int,
        l,
        ctrl,
        QuadratureOptions {
            abs_tol: 0.0,
            rel_tol: 1e-12,
            max_segments: 4000,
        },
    )
}

pub fn nx_if_quadrature_with(
    a_i: &Interval,
    a_f: &Interval,
    drift_shift: f64,
    d_int: f64,
    l: f64,
    ctrl: &ImageSumControl,
    opts: QuadratureOptions,
) -> Result<f64> {
    check_positive_diffusion(d_int)?;
    check_interval(a_i, l, "initial interval")?;
    check_interval(a_f, l, "final interval")?;
    if a_i.width() == 0.0 || a_f.width() == 0.0 {
        return Ok(0.0);
    }
    let mut failure: Option<Error> = None;
    let outer = integrate(
        |x_i| {
            if failure.is_some() {
                return 0.0;
            }
            let inner = integrate(
                |x_f| match green_reflected_1d(x_i, x_f, drift_shift, d_int, l, ctrl) {
                    Ok(v) => v.value,
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                },
                a_f.lo,
                a_f.hi,
                opts,
            );
            match inner {
                Ok(q) => q.value,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        a_i.lo,
        a_i.hi,
        opts,
    );
    // `failure` is borrowed mutably by the closures above; they are gone now.
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(outer?.value)
}
