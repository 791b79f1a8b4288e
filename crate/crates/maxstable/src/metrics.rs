//! Excursion metrics and related distances between max-linear predictors.
//!
//! For two variables `Y1, Y2` and a weight distribution `F`, the excursion
//! (Gini-type) pseudometric is
//!
//! `E_F(Y1, Y2) = 2 E F(Y1 v Y2) - E F(Y1) - E F(Y2)`,
//!
//! the expected `F`-mass of the interval on which exactly one of the two
//! processes exceeds a random level. For max-linear combinations
//! `M(w, X) = max_j w_j X_j` of a max-stable vector `X` with unit Fréchet
//! margins and tail dependence function `l`, every term is available in
//! closed form through `l`; the evaluators here consume `l`-values, so
//! closed-form and Monte Carlo tail dependence backends are interchangeable.
//!
//! The module also provides the Davis-Resnick spectral distance conversions,
//! the Wasserstein penalties that quantify how far a predictor's law is from
//! the target margin, and an ecdf mean-squared-error diagnostic for marginal
//! goodness of fit.

use crate::error::{Error, Result};
use crate::frechet::FrechetParams;
use crate::stats::{mean, standard_error};
use crate::taildep::TailDepFn;

/// A metric value, with a standard error when it came from sampling.
#[derive(Debug, Clone, Copy)]
pub struct MetricValue {
    pub value: f64,
    pub std_error: Option<f64>,
}

impl MetricValue {
    pub fn exact(value: f64) -> Self {
        MetricValue { value, std_error: None }
    }
}

fn validate_weights(w: &[f64], name: &str) -> Result<()> {
    if w.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
        return Err(Error::Domain(format!(
            "{name} must be componentwise finite and nonnegative"
        )));
    }
    Ok(())
}

fn powered(w: &[f64], alpha: f64) -> Vec<f64> {
    w.iter().map(|&v| v.powf(alpha)).collect()
}

/// Excursion metric between two max-linear combinations `M(w1, X)` and
/// `M(w2, X)` of the same max-stable vector, with the standard alpha-Fréchet
/// margin as weight distribution:
///
/// `1/(l(w1^a)+1) + 1/(l(w2^a)+1) - 2/(l((w1 v w2)^a)+1)`, `a = alpha`.
///
/// Symmetric, zero iff the two combinations coincide almost surely.
pub fn excursion_maxlinear(
    l: &TailDepFn,
    w1: &[f64],
    w2: &[f64],
    alpha: f64,
) -> Result<MetricValue> {
    if w1.len() != l.arity() || w2.len() != l.arity() {
        return Err(Error::Domain(format!(
            "weight length {} / {} does not match tail dependence arity {}",
            w1.len(),
            w2.len(),
            l.arity()
        )));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("tail index must be positive, got {alpha}")));
    }
    validate_weights(w1, "first weight vector")?;
    validate_weights(w2, "second weight vector")?;
    if w1.iter().all(|&v| v == 0.0) && w2.iter().all(|&v| v == 0.0) {
        return Err(Error::Domain(
            "excursion metric of two identically zero combinations".into(),
        ));
    }
    let joined: Vec<f64> = w1.iter().zip(w2).map(|(a, b)| a.max(*b)).collect();
    let l1 = l.eval(&powered(w1, alpha));
    let l2 = l.eval(&powered(w2, alpha));
    let l12 = l.eval(&powered(&joined, alpha));
    Ok(MetricValue::exact(
        1.0 / (l1 + 1.0) + 1.0 / (l2 + 1.0) - 2.0 / (l12 + 1.0),
    ))
}

/// Excursion metric between a scaled target `gamma0 * X_0` and the
/// max-linear predictor `M(w, X)` built on the remaining components, via the
/// tail dependence function `l_ext` of the extended vector `(X_0, X)`:
///
/// `1/(gamma0^a+1) + 1/(l((0,w^a))+1) - 2/(l((gamma0^a, w^a))+1)`.
pub fn excursion_target_vs_predictor(
    l_ext: &TailDepFn,
    gamma0: f64,
    w: &[f64],
    alpha: f64,
) -> Result<MetricValue> {
    if w.len() + 1 != l_ext.arity() {
        return Err(Error::Domain(format!(
            "predictor length {} + target does not match extended arity {}",
            w.len(),
            l_ext.arity()
        )));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("tail index must be positive, got {alpha}")));
    }
    if !(gamma0.is_finite() && gamma0 >= 0.0) {
        return Err(Error::Domain(format!("target scale must be nonnegative, got {gamma0}")));
    }
    validate_weights(w, "predictor weights")?;
    if gamma0 == 0.0 && w.iter().all(|&v| v == 0.0) {
        return Err(Error::Domain(
            "excursion metric of two identically zero combinations".into(),
        ));
    }
    let g = gamma0.powf(alpha);
    let wp = powered(w, alpha);
    let mut ext0 = Vec::with_capacity(w.len() + 1);
    ext0.push(0.0);
    ext0.extend_from_slice(&wp);
    let l0 = l_ext.eval(&ext0);
    ext0[0] = g;
    let l1 = l_ext.eval(&ext0);
    Ok(MetricValue::exact(
        1.0 / (g + 1.0) + 1.0 / (l0 + 1.0) - 2.0 / (l1 + 1.0),
    ))
}

/// Empirical excursion metric between observed targets and their
/// predictions, using the marginal cdf `F` of the target as weight
/// distribution and the exact value 1/2 for `E F(target)`:
///
/// `(2/K) sum F(x_j v xhat_j) - (1/K) sum F(xhat_j) - 1/2`.
///
/// The standard error is that of the per-sample summands.
pub fn excursion_empirical(
    truth: &[f64],
    predicted: &[f64],
    marginal: &FrechetParams,
) -> Result<MetricValue> {
    if truth.len() != predicted.len() {
        return Err(Error::Domain(format!(
            "need matching sample lengths, got {} and {}",
            truth.len(),
            predicted.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Domain("empirical excursion metric of an empty sample".into()));
    }
    let summands: Vec<f64> = truth
        .iter()
        .zip(predicted)
        .map(|(&x, &xh)| 2.0 * marginal.cdf(x.max(xh)) - marginal.cdf(xh) - 0.5)
        .collect();
    let se = if summands.len() >= 2 { Some(standard_error(&summands)) } else { None };
    Ok(MetricValue { value: mean(&summands), std_error: se })
}

/// Davis-Resnick spectral distance from an excursion metric value:
/// `d = 4 e / (1 - e)` for `e` in `[0, 1)`.
pub fn davis_resnick_from_excursion(e: f64) -> Result<f64> {
    if !(e.is_finite() && (0.0..1.0).contains(&e)) {
        return Err(Error::Domain(format!(
            "excursion value must lie in [0, 1), got {e}"
        )));
    }
    Ok(4.0 * e / (1.0 - e))
}

/// Excursion metric value from a Davis-Resnick spectral distance:
/// `e = d / (4 + d)` for `d >= 0`. Independence corresponds to `d = 2`,
/// i.e. `e = 1/3`.
pub fn excursion_from_davis_resnick(d: f64) -> Result<f64> {
    if !(d.is_finite() && d >= 0.0) {
        return Err(Error::Domain(format!(
            "spectral distance must be nonnegative, got {d}"
        )));
    }
    Ok(d / (4.0 + d))
}

/// First-order Wasserstein distance between the law of a max-linear
/// predictor with tail dependence value `l` (under the target margin's
/// probability transform) and the uniform law: `|l - 1| / (2 (l + 1))`.
pub fn wasserstein1_penalty(l: f64) -> f64 {
    assert!(l >= 0.0 && l.is_finite(), "tail dependence value must be nonnegative");
    (l - 1.0).abs() / (2.0 * (l + 1.0))
}

/// Squared second-order Wasserstein distance for the same comparison:
/// `(2/3) (l - 1)^2 / ((2l + 1)(l + 2))`. Zero exactly at `l = 1`
/// (law preservation).
pub fn wasserstein2_sq_penalty(l: f64) -> f64 {
    assert!(l >= 0.0 && l.is_finite(), "tail dependence value must be nonnegative");
    let d = l - 1.0;
    2.0 / 3.0 * d * d / ((2.0 * l + 1.0) * (l + 2.0))
}

/// Mean squared deviation of the empirical cdf of `uniforms` from the
/// identity on the grid `{h/M : h = 1..M}`:
///
/// `(1/M) sum_h (Fhat(h/M) - h/M)^2`.
///
/// The inputs are probability-transformed predictions; values near 0 mean
/// the predictor's law matches the target margin.
pub fn mse_hat(uniforms: &[f64], grid_size: usize) -> Result<f64> {
    if uniforms.is_empty() {
        return Err(Error::Domain("ecdf MSE of an empty sample".into()));
    }
    if grid_size == 0 {
        return Err(Error::InvalidParameter("ecdf MSE needs a nonempty grid".into()));
    }
    if uniforms.iter().any(|&u| !(0.0..=1.0).contains(&u)) {
        return Err(Error::Domain(
            "probability-transformed values must lie in [0, 1]".into(),
        ));
    }
    let mut sorted = uniforms.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = sorted.len() as f64;
    let m = grid_size as f64;
    let mut acc = 0.0;
    for h in 1..=grid_size {
        let x = h as f64 / m;
        let count = sorted.partition_point(|&u| u <= x) as f64;
        let dev = count / k - x;
        acc += dev * dev;
    }
    Ok(acc / m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taildep::{l_bivariate_hr, TailDepFn};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn independent_unit_vectors_give_one_third() {
        let l = TailDepFn::independent(2);
        let v = excursion_maxlinear(&l, &[1.0, 0.0], &[0.0, 1.0], 1.0).unwrap();
        assert!((v.value - 1.0 / 3.0).abs() < 1e-15);
        // Any tail index: the unit-vector values are l-free.
        let v2 = excursion_maxlinear(&l, &[1.0, 0.0], &[0.0, 1.0], 3.7).unwrap();
        assert!((v2.value - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn identical_combinations_have_zero_distance() {
        let l = TailDepFn::bivariate_hr(0.8).unwrap();
        let v = excursion_maxlinear(&l, &[0.3, 1.2], &[0.3, 1.2], 2.0).unwrap();
        assert_eq!(v.value, 0.0);
    }

    #[test]
    fn scaled_coordinate_inside_combination() {
        // Target gamma_k X_k with gamma_k <= w_k collapses to
        // 1/(gamma_k^a + 1) - 1/(l(w^a) + 1).
        let gamma = 0.9;
        let l = TailDepFn::bivariate_hr(gamma).unwrap();
        let gk = 0.6f64;
        let w = [1.0, 1.0];
        let v = excursion_maxlinear(&l, &[0.0, gk], &w, 1.0).unwrap();
        let theta = l_bivariate_hr(1.0, 1.0, gamma).unwrap();
        let expected = 1.0 / (gk + 1.0) - 1.0 / (theta + 1.0);
        assert!((v.value - expected).abs() < 1e-14, "{} vs {expected}", v.value);
    }

    #[test]
    fn target_vs_predictor_benchmark_value() {
        // Single-site predictor of the next step: with l_X(w) = 1 and
        // l_ext((1, w)) = theta, the metric is 1 - 2/(theta + 1); at
        // theta = 1.3 that is 0.3/2.3.
        let sigma = 0.7706409328151355; // calibrated so theta(1) = 1.3
        let l_ext = TailDepFn::bivariate_hr(sigma * sigma / 2.0).unwrap();
        let v = excursion_target_vs_predictor(&l_ext, 1.0, &[1.0], 1.0).unwrap();
        assert!((v.value - 0.3 / 2.3).abs() < 1e-9, "{}", v.value);
    }

    #[test]
    fn target_vs_predictor_zero_scale_reduces_to_cdf_mean() {
        // gamma0 = 0: the metric equals 1 - 1/(l(w^a)+1).
        let l_ext = TailDepFn::independent(3);
        let v = excursion_target_vs_predictor(&l_ext, 0.0, &[1.0, 1.0], 1.0).unwrap();
        assert!((v.value - (1.0 - 1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn excursion_rejects_bad_input() {
        let l = TailDepFn::independent(2);
        assert!(excursion_maxlinear(&l, &[0.0, 0.0], &[0.0, 0.0], 1.0).is_err());
        assert!(excursion_maxlinear(&l, &[1.0], &[1.0, 0.0], 1.0).is_err());
        assert!(excursion_maxlinear(&l, &[1.0, -0.5], &[1.0, 0.0], 1.0).is_err());
        assert!(excursion_maxlinear(&l, &[1.0, 1.0], &[1.0, 0.0], 0.0).is_err());
        assert!(excursion_target_vs_predictor(&l, 1.0, &[1.0, 1.0], 1.0).is_err());
        assert!(excursion_target_vs_predictor(&l, -1.0, &[1.0], 1.0).is_err());
    }

    #[test]
    fn empirical_matches_hand_computation() {
        let marginal = FrechetParams::unit();
        let truth = [1.0, 2.0];
        let pred = [2.0, 1.0];
        let f = |x: f64| (-1.0 / x).exp();
        let expected =
            ((2.0 * f(2.0) - f(2.0) - 0.5) + (2.0 * f(2.0) - f(1.0) - 0.5)) / 2.0;
        let v = excursion_empirical(&truth, &pred, &marginal).unwrap();
        assert!((v.value - expected).abs() < 1e-15);
        assert!(v.std_error.unwrap() > 0.0);
        assert!(excursion_empirical(&truth, &pred[..1], &marginal).is_err());
        assert!(excursion_empirical(&[], &[], &marginal).is_err());
    }

    #[test]
    fn empirical_independent_pairs_concentrate_at_one_third() {
        let marginal = FrechetParams::unit();
        let mut rng = ChaCha8Rng::seed_from_u64(314);
        let k = 20_000;
        let truth = marginal.sample_n(&mut rng, k);
        let pred = marginal.sample_n(&mut rng, k);
        let v = excursion_empirical(&truth, &pred, &marginal).unwrap();
        let se = v.std_error.unwrap();
        assert!(
            (v.value - 1.0 / 3.0).abs() < 3.0 * se,
            "value {} +- {se}",
            v.value
        );
    }

    #[test]
    fn davis_resnick_round_trip_and_independence_point() {
        for i in 0..100 {
            let e = i as f64 / 101.0;
            let d = davis_resnick_from_excursion(e).unwrap();
            let back = excursion_from_davis_resnick(d).unwrap();
            assert!((back - e).abs() < 1e-12);
        }
        assert!((davis_resnick_from_excursion(1.0 / 3.0).unwrap() - 2.0).abs() < 1e-15);
        assert!((excursion_from_davis_resnick(2.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(davis_resnick_from_excursion(1.0).is_err());
        assert!(davis_resnick_from_excursion(-0.1).is_err());
        assert!(excursion_from_davis_resnick(-1.0).is_err());
    }

    /// Frozen values of `integral_0^1 (q^(1/l) - q)^2 dq` from
    /// scipy.integrate.quad, pinning the closed form.
    #[test]
    fn wasserstein2_matches_quadrature_oracle() {
        let cases = [
            (0.5, 0.03333333333333333),
            (1.0, 0.0),
            (2.0, 0.03333333333333335),
            (5.0, 0.1385281385281385),
        ];
        for (l, expected) in cases {
            let got = wasserstein2_sq_penalty(l);
            assert!((got - expected).abs() < 1e-6, "l={l}: {got} vs {expected}");
        }
    }

    #[test]
    fn wasserstein_penalties_vanish_only_at_law_preservation() {
        assert_eq!(wasserstein1_penalty(1.0), 0.0);
        assert_eq!(wasserstein2_sq_penalty(1.0), 0.0);
        for l in [0.2, 0.9, 1.1, 3.0, 50.0] {
            assert!(wasserstein1_penalty(l) > 0.0);
            assert!(wasserstein2_sq_penalty(l) > 0.0);
            assert!(wasserstein1_penalty(l) < 0.5);
        }
    }

    #[test]
    fn mse_hat_exact_grid_is_zero() {
        let k = 100;
        let uniforms: Vec<f64> = (1..=k).map(|i| i as f64 / k as f64).collect();
        let v = mse_hat(&uniforms, k).unwrap();
        assert!(v < 1e-12 / (k * k) as f64 + 1e-30, "exact grid should be 0, got {v}");
    }

    #[test]
    fn mse_hat_detects_wrong_law() {
        // sqrt(U) has cdf x^2; the asymptotic MSE is 1/30.
        let mut rng = ChaCha8Rng::seed_from_u64(2718);
        let k = 10_000;
        let uniforms: Vec<f64> = (0..k).map(|_| rand::Rng::random::<f64>(&mut rng).sqrt()).collect();
        let v = mse_hat(&uniforms, 100).unwrap();
        assert!((v - 1.0 / 30.0).abs() < 0.005, "{v}");
    }

    #[test]
    fn mse_hat_rejects_bad_input() {
        assert!(mse_hat(&[], 10).is_err());
        assert!(mse_hat(&[0.5], 0).is_err());
        assert!(mse_hat(&[1.5], 10).is_err());
        assert!(mse_hat(&[-0.1], 10).is_err());
    }

    proptest! {
        /// Symmetry and nonnegativity of the max-linear excursion metric on
        /// random Hüsler-Reiss pairs.
        #[test]
        fn excursion_symmetric_nonnegative(
            a1 in 0.0..3.0f64, a2 in 0.0..3.0f64,
            b1 in 0.0..3.0f64, b2 in 0.0..3.0f64,
            gamma in 0.05..10.0f64,
            alpha in 0.5..4.0f64,
        ) {
            prop_assume!(a1 + a2 > 0.0 || b1 + b2 > 0.0);
            let l = TailDepFn::bivariate_hr(gamma).unwrap();
            let v12 = excursion_maxlinear(&l, &[a1, a2], &[b1, b2], alpha).unwrap().value;
            let v21 = excursion_maxlinear(&l, &[b1, b2], &[a1, a2], alpha).unwrap().value;
            prop_assert!((v12 - v21).abs() < 1e-14);
            prop_assert!(v12 >= -1e-12);
            prop_assert!(v12 <= 1.0);
        }

        /// The spectral-distance conversions are inverse bijections.
        #[test]
        fn dr_conversion_bijection(d in 0.0..1e6f64) {
            let e = excursion_from_davis_resnick(d).unwrap();
            prop_assert!((0.0..1.0).contains(&e));
            let back = davis_resnick_from_excursion(e).unwrap();
            prop_assert!((back - d).abs() <= 1e-9 * d.max(1.0));
        }
    }
}
