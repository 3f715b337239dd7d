//! Summary statistics for Monte-Carlo columns.

/// Sample mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn mean_estimate(xs: &[f64]) -> Estimate {
    Estimate {
        value: mean(xs),
        std_error: (variance(xs) / xs.len() as f64).sqrt(),
    }
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let h = (v.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    quantile_sorted(&sorted(xs), 0.5)
}

/// Sample median with a distribution-free standard error taken from the
/// order statistics bracketing the median's 95% binomial interval.
pub fn median_estimate(xs: &[f64]) -> Estimate {
    if xs.is_empty() {
        return Estimate {
            value: f64::NAN,
            std_error: f64::NAN,
        };
    }
    let v = sorted(xs);
    let n = v.len() as f64;
    let half_width = 1.959_963_984_540_054 * n.sqrt() / 2.0;
    let lo = ((n / 2.0 - half_width).floor().max(0.0) as usize).min(v.len() - 1);
    let hi = ((n / 2.0 + half_width).ceil() as usize).min(v.len() - 1);
    Estimate {
        value: quantile_sorted(&v, 0.5),
        std_error: (v[hi] - v[lo]) / (2.0 * 1.959_963_984_540_054),
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = mean(&lx);
    let my = mean(&ly);
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 4.0, 16.0, 64.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        assert!((log_log_slope(&x, &y) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn mean_estimate_of_constant_has_zero_error() {
        let e = mean_estimate(&[2.0; 10]);
        assert_eq!(e.value, 2.0);
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn median_error_shrinks_with_sample_size() {
        let small: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let large: Vec<f64> = (0..10_000).map(|i| i as f64 / 10_000.0).collect();
        assert!(median_estimate(&large).std_error < median_estimate(&small).std_error);
    }
}
