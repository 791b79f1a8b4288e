//! Small statistical utilities: compensated summation, moments, and the
//! Kolmogorov-Smirnov statistic used by the simulation validity checks.

/// Neumaier-compensated sum. Reduction order is fixed by the slice order, so
/// results are reproducible regardless of chunking decisions upstream.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Mean via compensated summation. Returns NaN on an empty slice.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    compensated_sum(values) / values.len() as f64
}

/// Sample standard deviation (n-1 denominator). Returns NaN for fewer than
/// two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return f64::NAN;
    }
    let m = mean(values);
    let sq: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    (compensated_sum(&sq) / (values.len() - 1) as f64).sqrt()
}

/// Standard error of the mean of `values`.
pub fn standard_error(values: &[f64]) -> f64 {
    sample_std(values) / (values.len() as f64).sqrt()
}

/// One-sample Kolmogorov-Smirnov statistic `sup_x |F_n(x) - F(x)|` of
/// `samples` against the continuous cdf `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    assert!(!samples.is_empty(), "KS statistic of an empty sample");
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample"));
    let n = sorted.len() as f64;
    let mut sup: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        sup = sup.max((f - lo).abs()).max((hi - f).abs());
    }
    sup
}

/// Asymptotic critical value of the KS statistic at significance `alpha` for
/// sample size `n`: `sqrt(-ln(alpha/2)/2) / sqrt(n)`.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    assert!(n > 0 && alpha > 0.0 && alpha < 1.0);
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_beats_naive_on_cancellation() {
        // 1 + tiny terms that a naive sum drops entirely.
        let mut values = vec![1.0];
        values.extend(std::iter::repeat(1e-16).take(10_000));
        let exact = 1.0 + 1e-12;
        assert!((compensated_sum(&values) - exact).abs() < 1e-15);
    }

    #[test]
    fn moments_of_a_known_list() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&v), 2.5);
        let sd = sample_std(&v);
        assert!((sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((standard_error(&v) - sd / 2.0).abs() < 1e-15);
    }

    #[test]
    fn ks_statistic_of_exact_grid_is_half_spacing() {
        // Points at (i - 1/2)/n have ecdf deviation exactly 1/(2n).
        let n = 100;
        let samples: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&samples, |x| x.clamp(0.0, 1.0));
        assert!((d - 0.5 / n as f64).abs() < 1e-12);
    }

    #[test]
    fn ks_statistic_detects_wrong_law() {
        let samples: Vec<f64> = (0..1000).map(|i| ((i as f64 + 0.5) / 1000.0).powi(2)).collect();
        let d = ks_statistic(&samples, |x| x.clamp(0.0, 1.0));
        assert!(d > 0.2, "squared uniforms vs uniform should be far: {d}");
    }

    /// scipy.stats.kstwobign.ppf(0.99) = 1.6276236115189502.
    #[test]
    fn critical_value_close_to_asymptotic_table() {
        let c = ks_critical_value(10_000, 0.01) * 100.0;
        assert!((c - 1.6276236115189502).abs() < 2e-3, "c = {c}");
    }
}
