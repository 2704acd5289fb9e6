//! Small statistical helpers shared by the probes.

use statrs::distribution::{ContinuousCDF, Normal};

/// Median by total order; NaNs sort last and would poison the result, so
/// callers must filter them first.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    v[lo] * (1.0 - frac) + v[hi] * frac
}

/// Sample mean and its standard error.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    assert!(n >= 1.0);
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Normal-approximation standard error of the sample median,
/// 1.2533 σ̂ / √n with σ̂ from the interquartile range.
pub fn median_stderr(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let iqr = quantile(values, 0.75) - quantile(values, 0.25);
    let sigma = (iqr / 1.349).max(f64::MIN_POSITIVE);
    1.2533 * sigma / (values.len() as f64).sqrt()
}

/// Monte Carlo L_p-norm estimate ‖V‖_p = (E|V|^p)^{1/p} with a delta-method
/// standard error.
pub fn power_norm(values: &[f64], p: f64) -> (f64, f64) {
    let powered: Vec<f64> = values.iter().map(|v| v.abs().powf(p)).collect();
    let (m, se) = mean_stderr(&powered);
    if m <= 0.0 {
        return (0.0, 0.0);
    }
    let norm = m.powf(1.0 / p);
    let se_norm = se * norm / (p * m);
    (norm, se_norm)
}

pub fn std_normal_cdf(x: f64) -> f64 {
    // Unit normal is always constructible.
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// Kolmogorov-Smirnov distance between the empirical law of `sample` and the
/// standard normal.
pub fn ks_distance_to_std_normal(sample: &[f64]) -> f64 {
    assert!(!sample.is_empty());
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let c = std_normal_cdf(x);
        d = d.max(((i + 1) as f64 / n - c).abs());
        d = d.max((i as f64 / n - c).abs());
    }
    d
}

/// Ordinary least-squares slope of y against x; needs at least two points.
pub fn ls_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

/// The boundedness heuristic for "sup_T ‖·‖ < ∞": every prefix's last value
/// must not exceed 1.2 x the median of that prefix.
pub fn bounded_by_running_median(values: &[f64]) -> bool {
    (1..=values.len()).all(|k| {
        let prefix = &values[..k];
        values[k - 1] <= 1.2 * median(prefix) + 1e-12
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn median_and_quantiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.5), 3.0);
    }

    #[test]
    fn mean_and_power_norm() {
        let (m, se) = mean_stderr(&[1.0, 2.0, 3.0]);
        assert_relative_eq!(m, 2.0, max_relative = 1e-15);
        assert_relative_eq!(se, (1.0f64 / 3.0).sqrt(), max_relative = 1e-12);
        let (norm, _) = power_norm(&[1.0, -1.0, 1.0, -1.0], 3.7);
        assert_relative_eq!(norm, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn ks_of_point_mass_is_half() {
        let sample = vec![0.0; 500];
        assert_relative_eq!(
            ks_distance_to_std_normal(&sample),
            0.5,
            max_relative = 1e-12
        );
    }

    #[test]
    fn ks_of_shifted_normal_grows_with_shift() {
        // Deterministic grid standing in for N(2,1) quantiles.
        let n = 2000;
        let sample: Vec<f64> = (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) / n as f64;
                2.0 + inverse_normal(u)
            })
            .collect();
        let d = ks_distance_to_std_normal(&sample);
        assert!(d > 0.6, "d = {d}");
    }

    fn inverse_normal(u: f64) -> f64 {
        // Bisection against the CDF; plenty for test use.
        let (mut lo, mut hi) = (-8.0, 8.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if std_normal_cdf(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn slope_of_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 4.0, 6.0, 8.0];
        assert_relative_eq!(ls_slope(&x, &y).unwrap(), 2.0, max_relative = 1e-14);
        assert!(ls_slope(&[1.0], &[2.0]).is_none());
    }

    #[test]
    fn running_median_rule() {
        assert!(bounded_by_running_median(&[1.0, 1.1, 0.9, 1.05]));
        assert!(bounded_by_running_median(&[1.0, 1.0, 1.0]));
        assert!(!bounded_by_running_median(&[1.0, 1.0, 2.0]));
        // Steadily growing sequences eventually violate the rule.
        assert!(!bounded_by_running_median(&[1.0, 1.15, 1.3, 1.5, 1.8, 2.2]));
    }
}
