//! Sample summaries and the distribution functions used for P-values.

use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF, Gamma, Normal};

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    let mut v = values.to_vec();
    let n = v.len();
    let mid = n / 2;
    let (_, hi, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let hi = *hi;
    if n % 2 == 1 {
        hi
    } else {
        let lo = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

/// Sample quantile with linear interpolation between order statistics
/// (the "type 7" definition).
pub fn quantile(values: &[f64], prob: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, prob)
}

pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let prob = prob.clamp(0.0, 1.0);
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() as f64 - 1.0)
}

/// Upper tail `P(X > x)` of a chi-squared law; zero degrees of freedom is a
/// point mass at 0.
pub fn chisq_sf(x: f64, df: usize) -> f64 {
    if df == 0 {
        return if x > 0.0 { 0.0 } else { 1.0 };
    }
    if x <= 0.0 {
        return 1.0;
    }
    ChiSquared::new(df as f64).expect("df > 0").sf(x)
}

pub fn chisq_cdf(x: f64, df: usize) -> f64 {
    1.0 - chisq_sf(x, df)
}

/// `qchisq(prob, df)`.
pub fn chisq_quantile(prob: f64, df: usize) -> f64 {
    if df == 0 {
        return 0.0;
    }
    ChiSquared::new(df as f64).expect("df > 0").inverse_cdf(prob)
}

/// Upper tail of a Gamma law with the given shape and scale.
pub fn gamma_sf(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    Gamma::new(shape, 1.0 / scale).expect("positive gamma parameters").sf(x)
}

pub fn normal_quantile(prob: f64) -> f64 {
    Normal::standard().inverse_cdf(prob)
}

pub fn normal_density(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `qbinom(prob, n, 0.5)`: the smallest `x` with `P(X <= x) >= prob`.
pub fn binom_half_quantile(prob: f64, n: usize) -> usize {
    let b = Binomial::new(0.5, n as u64).expect("valid binomial");
    // Relative slack guards against the CDF landing a few ulps below an exact hit.
    let target = prob * (1.0 - 64.0 * f64::EPSILON);
    (0..=n).find(|&x| b.cdf(x as u64) >= target).unwrap_or(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians_and_quantiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.5), 3.0);
        assert!((quantile(&[1.0, 2.0, 3.0, 4.0], 0.25) - 1.75).abs() < 1e-12);
    }

    #[test]
    fn distribution_values() {
        // qchisq(0.95, 1) = 3.841459
        assert!((chisq_quantile(0.95, 1) - 3.841459).abs() < 1e-5);
        assert_eq!(chisq_sf(0.0, 0), 1.0);
        assert_eq!(chisq_sf(1.0, 0), 0.0);
        // pchisq(2, 2) = 1 - exp(-1)
        assert!((chisq_sf(2.0, 2) - (-1.0f64).exp()).abs() < 1e-12);
        // Gamma(1, s) is exponential
        assert!((gamma_sf(2.0, 1.0, 0.5) - (-4.0f64).exp()).abs() < 1e-12);
        assert!((normal_quantile(0.975) - 1.959964).abs() < 1e-6);
    }

    #[test]
    fn binomial_quantiles() {
        // P(X <= 5) = 0.0133, P(X <= 6) = 0.0392 for Bin(21, 1/2)
        assert_eq!(binom_half_quantile(0.025, 21), 6);
        assert_eq!(binom_half_quantile(0.975, 21), 15);
        assert_eq!(binom_half_quantile(0.0005, 21), 3);
        assert_eq!(binom_half_quantile(0.025, 5), 0);
        assert_eq!(binom_half_quantile(0.975, 5), 5);
        // exact hit: P(X <= 1) = 0.25 for Bin(2, 1/2)
        assert_eq!(binom_half_quantile(0.25, 2), 0);
        assert_eq!(binom_half_quantile(0.2500001, 2), 1);
    }
}
