//! Sample statistics used by the estimators and the Monte Carlo checks.

use crate::numeric::fsum;

pub fn mean(data: &[f64]) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    fsum(data.iter().copied()) / data.len() as f64
}

/// Unbiased sample variance (n - 1 denominator).
pub fn variance(data: &[f64]) -> f64 {
    let n = data.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(data);
    fsum(data.iter().map(|x| (x - m) * (x - m))) / (n - 1) as f64
}

pub fn std_dev(data: &[f64]) -> f64 {
    variance(data).sqrt()
}

/// Unbiased k-statistics `k1..k4` (Fisher).
pub fn k_statistics(data: &[f64]) -> [f64; 4] {
    let n = data.len() as f64;
    let m = mean(data);
    let s2 = fsum(data.iter().map(|x| (x - m).powi(2)));
    let s3 = fsum(data.iter().map(|x| (x - m).powi(3)));
    let s4 = fsum(data.iter().map(|x| (x - m).powi(4)));
    let k2 = s2 / (n - 1.0);
    let k3 = n * s3 / ((n - 1.0) * (n - 2.0));
    let k4 = n * ((n + 1.0) * s4 - 3.0 * (n - 1.0) * s2 * s2 / n)
        / ((n - 1.0) * (n - 2.0) * (n - 3.0));
    [m, k2, k3, k4]
}

/// Linear-interpolation quantile of sorted data (Hyndman–Fan type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Hyndman–Fan type 6 quantile: at `p = k / (n + 1)` it returns the `k`-th
/// order statistic exactly.
pub fn quantile_weibull_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    let h = (n + 1) as f64 * p;
    if h <= 1.0 {
        return sorted[0];
    }
    if h >= n as f64 {
        return sorted[n - 1];
    }
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 {
        return sorted[lo - 1];
    }
    sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1])
}

pub fn sorted(data: &[f64]) -> Vec<f64> {
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let sxy = fsum(x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)));
    let sxx = fsum(x.iter().map(|a| (a - mx) * (a - mx)));
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_statistics_small_sample() {
        // Reference values from scipy.stats.kstat.
        let k = k_statistics(&[1.0, 2.0, 3.0, 4.0, 10.0]);
        assert!((k[0] - 4.0).abs() < 1e-15);
        assert!((k[1] - 12.5).abs() < 1e-13);
        assert!((k[2] - 75.0).abs() < 1e-12);
        assert!((k[3] - 492.5).abs() < 1e-11);
    }

    #[test]
    fn weibull_quantile_hits_order_statistics() {
        let s = [1.0, 4.0, 9.0];
        for k in 1..=3 {
            assert_eq!(quantile_weibull_sorted(&s, k as f64 / 4.0), s[k - 1]);
        }
        assert_eq!(quantile_weibull_sorted(&s, 0.375), 2.5);
    }

    #[test]
    fn type7_quantile() {
        let s = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.5), 2.0);
        assert_eq!(quantile_sorted(&s, 0.05), 0.2);
        assert_eq!(quantile_sorted(&s, 1.0), 4.0);
    }

    #[test]
    fn slope_of_line() {
        assert!((ols_slope(&[1.0, 2.0, 3.0], &[2.0, 0.0, -2.0]) + 2.0).abs() < 1e-15);
    }
}
