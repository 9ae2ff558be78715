//! Small sample statistics shared by the diagnostics.

/// Sample mean and its standard error (`sd / sqrt(n)`, unbiased variance).
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Running estimates on doubling prefixes of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Stabilization {
    /// `(prefix length, prefix mean)` for `n/8, n/4, n/2, n` (those that are non-empty).
    pub estimates: Vec<(usize, f64)>,
    pub warn: bool,
}

/// Flags a sample whose prefix means keep growing across doublings by more
/// than three standard errors of the full-sample mean, or that is not finite.
pub fn stabilization(xs: &[f64]) -> Stabilization {
    let n = xs.len();
    let mut estimates = Vec::new();
    for shift in (0..=3).rev() {
        let len = n >> shift;
        if len > 0 && estimates.last().is_none_or(|&(l, _)| l < len) {
            estimates.push((len, xs[..len].iter().sum::<f64>() / len as f64));
        }
    }
    let (mean, se) = mean_and_se(xs);
    let growing = estimates.len() >= 3 && estimates.windows(2).all(|w| w[1].1 > w[0].1) && {
        let k = estimates.len();
        estimates[k - 1].1 - estimates[k - 2].1 > 3.0 * se
    };
    Stabilization {
        estimates,
        warn: !mean.is_finite() || !se.is_finite() || growing,
    }
}

/// Empirical quantile by nearest rank on a sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = ((sorted.len() - 1) as f64 * q.clamp(0.0, 1.0)).round() as usize;
    sorted[idx]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_se_basic() {
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_and_se(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn stable_sample_does_not_warn() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 101) as f64).collect();
        assert!(!stabilization(&xs).warn);
    }

    #[test]
    fn exploding_sample_warns() {
        let xs: Vec<f64> = (0..1024).map(|i| (i as f64).powi(3)).collect();
        let s = stabilization(&xs);
        assert_eq!(s.estimates.len(), 4);
        assert!(s.warn);
        assert!(stabilization(&[1.0, f64::INFINITY]).warn);
    }

    #[test]
    fn quantiles() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&xs, 0.0), 1.0);
        assert_eq!(quantile_sorted(&xs, 0.5), 3.0);
        assert_eq!(quantile_sorted(&xs, 1.0), 5.0);
    }
}
