//! Small statistical helpers: moments, Kolmogorov-Smirnov tests, Wilson intervals.

use statrs::distribution::{ContinuousCDF, Normal};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

pub fn std_dev(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

/// Median; sorts `x` in place. Even lengths average the two middle values.
pub fn median(x: &mut [f64]) -> f64 {
    x.sort_by(f64::total_cmp);
    let n = x.len();
    if n % 2 == 1 {
        x[n / 2]
    } else {
        0.5 * (x[n / 2 - 1] + x[n / 2])
    }
}

/// Moment skewness `m3 / m2^{3/2}`.
pub fn skewness(x: &[f64]) -> f64 {
    let m = mean(x);
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    m3 / m2.powf(1.5)
}

/// Moment kurtosis `m4 / m2^2` (3 for a Gaussian).
pub fn kurtosis(x: &[f64]) -> f64 {
    let m = mean(x);
    let n = x.len() as f64;
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2)
}

pub fn std_normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample KS test against a continuous CDF (asymptotic p-value with the
/// Stephens small-sample correction).
pub fn ks_one_sample(x: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d = 0.0f64;
    for (i, &v) in s.iter().enumerate() {
        let f = cdf(v);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let en = n.sqrt();
    KsResult { statistic: d, p_value: kolmogorov_sf((en + 0.12 + 0.11 / en) * d) }
}

/// Two-sample KS test. Ties across samples are handled by stepping both
/// empirical CDFs past each distinct value before comparing.
pub fn ks_two_sample(x: &[f64], y: &[f64]) -> KsResult {
    let mut a = x.to_vec();
    let mut b = y.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    let en = (n * m / (n + m)).sqrt();
    KsResult { statistic: d, p_value: kolmogorov_sf((en + 0.12 + 0.11 / en) * d) }
}

/// Critical value of the two-sample KS statistic at level `alpha`
/// (asymptotic: `c(alpha) sqrt((n+m)/(n m))`).
pub fn ks_two_sample_critical(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    c * ((n + m) as f64 / (n * m) as f64).sqrt()
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    (centre - half, centre + half)
}

/// Monte-Carlo standard error of a rejection rate.
pub fn proportion_se(p: f64, trials: usize) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_known_values() {
        // P(K > 1.36) ~ 0.049, P(K > 1.63) ~ 0.0098
        assert!((kolmogorov_sf(1.36) - 0.0494).abs() < 1e-3);
        assert!((kolmogorov_sf(1.628) - 0.0100).abs() < 5e-4);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn moments() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&x), 2.5);
        assert!((variance(&x) - 5.0 / 3.0).abs() < 1e-15);
        assert!(skewness(&x).abs() < 1e-15);
    }

    #[test]
    fn ks_identical_samples() {
        let x: Vec<f64> = (0..50).map(f64::from).collect();
        let r = ks_two_sample(&x, &x);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
        let y: Vec<f64> = (100..150).map(f64::from).collect();
        assert_eq!(ks_two_sample(&x, &y).statistic, 1.0);
    }

    #[test]
    fn ks_uniform_grid_fits() {
        let x: Vec<f64> = (0..200).map(|i| (i as f64 + 0.5) / 200.0).collect();
        let r = ks_one_sample(&x, |v| v.clamp(0.0, 1.0));
        assert!(r.statistic <= 0.0025 + 1e-12);
        assert!(r.p_value > 0.99);
    }

    #[test]
    fn wilson_contains_p() {
        let (lo, hi) = wilson_interval(25, 500, 1.96);
        assert!(lo < 0.05 && hi > 0.05);
    }
}
