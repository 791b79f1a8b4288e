//! Tail dependence functions of max-stable vectors.
//!
//! For a max-stable vector with unit Fréchet margins and spectral generator
//! `Z` (componentwise `Z_j >= 0`, `E Z_j = 1`), the tail dependence function
//! is `l(x) = E max_j x_j Z_j`. It is homogeneous of order one, satisfies
//! `max_j x_j <= l(x) <= sum_j x_j`, and `l(e_j) = 1`. The value
//! `theta = l(1,...,1)` is the extremal coefficient: 1 means complete
//! dependence, the number of components means independence.
//!
//! This module provides closed-form bivariate evaluators for the
//! Hüsler-Reiss (Brown-Resnick / Smith) and extremal Gaussian families,
//! Monte Carlo evaluators for general dimension, extremal coefficients as a
//! function of lag for the three process models, and calibration of the
//! model volatility from a target extremal coefficient.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::CholeskyFactor;
use crate::special::normal_cdf;
use crate::stats::{compensated_sum, standard_error};

/// Largest extremal coefficient reachable by the extremal Gaussian model:
/// `1 + 1/sqrt(2)`, approached as the correlation length goes to zero.
pub const EG_THETA_SUP: f64 = 1.7071067811865475;

/// The three max-stable process families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    BrownResnick,
    Smith,
    ExtremalGaussian,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::BrownResnick => "brown-resnick",
            ModelKind::Smith => "smith",
            ModelKind::ExtremalGaussian => "extremal-gaussian",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "br" | "brown-resnick" | "brownresnick" => Ok(ModelKind::BrownResnick),
            "smith" => Ok(ModelKind::Smith),
            "eg" | "extremal-gaussian" | "extremalgaussian" => Ok(ModelKind::ExtremalGaussian),
            other => Err(Error::Parse(format!(
                "unknown model '{other}' (expected br, smith, or eg)"
            ))),
        }
    }
}

/// A process model: family, ambient dimension (1 or 2), and volatility.
///
/// The volatility parameter plays a different role per family: it is the
/// Brownian volatility for Brown-Resnick, the Gaussian-shape standard
/// deviation for Smith, and the correlation length for extremal Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Ambient dimension of the index set: 1 (time series) or 2 (lattice).
    pub dim: u8,
    pub sigma: f64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, dim: u8, sigma: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidParameter(format!(
                "model dimension must be 1 or 2, got {dim}"
            )));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "model volatility must be a finite positive number, got {sigma}"
            )));
        }
        Ok(ModelSpec { kind, dim, sigma })
    }

    /// Variogram of the underlying Gaussian increments at distance `h`
    /// (Brown-Resnick and Smith only): half the expected squared increment.
    pub(crate) fn variogram(&self, h: f64) -> f64 {
        match self.kind {
            ModelKind::BrownResnick => self.sigma * self.sigma * h / 2.0,
            ModelKind::Smith => h * h / (2.0 * self.sigma * self.sigma),
            ModelKind::ExtremalGaussian => {
                unreachable!("extremal Gaussian has no variogram parametrization")
            }
        }
    }

    /// Correlation of the underlying Gaussian field at distance `h`
    /// (extremal Gaussian only).
    pub(crate) fn correlation(&self, h: f64) -> f64 {
        debug_assert_eq!(self.kind, ModelKind::ExtremalGaussian);
        (-h / self.sigma).exp()
    }
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Bivariate Hüsler-Reiss tail dependence function with variogram value
/// `gamma` between the two sites:
///
/// `l(x1, x2) = x1 F0(a + ln(x1/x2)/(2a)) + x2 F0(a + ln(x2/x1)/(2a))`
///
/// with `a = sqrt(gamma/2)` and `F0` the standard normal cdf. Covers the
/// Brown-Resnick (`gamma = sigma^2 h / 2`) and Smith
/// (`gamma = h^2 / (2 sigma^2)`) pairs. If one argument is zero the value is
/// the other argument.
pub fn l_bivariate_hr(x1: f64, x2: f64, gamma: f64) -> Result<f64> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Hüsler-Reiss variogram must be positive, got {gamma}"
        )));
    }
    if x1 < 0.0 || x2 < 0.0 {
        return Err(Error::Domain(format!(
            "tail dependence arguments must be nonnegative, got ({x1}, {x2})"
        )));
    }
    if x1 == 0.0 {
        return Ok(x2);
    }
    if x2 == 0.0 {
        return Ok(x1);
    }
    let a = (gamma / 2.0).sqrt();
    let r = (x1 / x2).ln() / (2.0 * a);
    Ok(x1 * normal_cdf(a + r) + x2 * normal_cdf(a - r))
}

/// Bivariate extremal Gaussian tail dependence function with correlation
/// `rho` between the two sites:
///
/// `l(x1, x2) = (x1 + x2 + sqrt(x1^2 - 2 rho x1 x2 + x2^2)) / 2`.
pub fn l_bivariate_eg(x1: f64, x2: f64, rho: f64) -> Result<f64> {
    if !(rho.is_finite() && (-1.0..=1.0).contains(&rho)) {
        return Err(Error::InvalidParameter(format!(
            "correlation must lie in [-1, 1], got {rho}"
        )));
    }
    if x1 < 0.0 || x2 < 0.0 {
        return Err(Error::Domain(format!(
            "tail dependence arguments must be nonnegative, got ({x1}, {x2})"
        )));
    }
    let disc = (x1 * x1 - 2.0 * rho * x1 * x2 + x2 * x2).max(0.0);
    Ok(0.5 * (x1 + x2 + disc.sqrt()))
}

/// Monte Carlo estimate of `l(x) = E max_j x_j exp(G_j - v_j/2)` for a
/// centered Gaussian vector `G` with covariance `cov` (row-major n x n) and
/// drift variances `v = variances`. This is the log-Gaussian generator of
/// Hüsler-Reiss type models; with `cov` from a Brownian motion it matches
/// the closed bivariate form.
///
/// `m` is the number of draws; the mean uses compensated summation so the
/// result is independent of any upstream chunking.
pub fn l_mc_log_gaussian<R: Rng + ?Sized>(
    x: &[f64],
    cov: &[f64],
    variances: &[f64],
    m: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    let n = x.len();
    validate_mc_args(x, m)?;
    if cov.len() != n * n || variances.len() != n {
        return Err(Error::InvalidParameter(format!(
            "covariance must be {n}x{n} row-major and variances length {n}"
        )));
    }
    let chol = CholeskyFactor::new(cov, n)?;
    let mut z = vec![0.0; n];
    let mut draws = Vec::with_capacity(m);
    for _ in 0..m {
        for zj in z.iter_mut() {
            *zj = StandardNormal.sample(rng);
        }
        let g = chol.correlate(&z);
        let mut best = 0.0f64;
        for j in 0..n {
            let v = x[j] * (g[j] - variances[j] / 2.0).exp();
            best = best.max(v);
        }
        draws.push(best);
    }
    Ok(McEstimate {
        value: compensated_sum(&draws) / m as f64,
        std_error: standard_error(&draws),
    })
}

/// Monte Carlo estimate of the extremal Gaussian tail dependence function
/// `l(x) = sqrt(2 pi) E (max_j x_j Y_j)^+` for a centered Gaussian vector
/// `Y` with correlation matrix `corr` (row-major n x n, unit diagonal).
pub fn l_mc_eg<R: Rng + ?Sized>(
    x: &[f64],
    corr: &[f64],
    m: usize,
    rng: &mut R,
) -> Result<McEstimate> {
    let n = x.len();
    validate_mc_args(x, m)?;
    if corr.len() != n * n {
        return Err(Error::InvalidParameter(format!(
            "correlation must be {n}x{n} row-major"
        )));
    }
    for j in 0..n {
        if (corr[j * n + j] - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidParameter(
                "correlation matrix must have unit diagonal".into(),
            ));
        }
    }
    let norm = (2.0 * std::f64::consts::PI).sqrt();
    let chol = CholeskyFactor::new(corr, n)?;
    let mut z = vec![0.0; n];
    let mut draws = Vec::with_capacity(m);
    for _ in 0..m {
        for zj in z.iter_mut() {
            *zj = StandardNormal.sample(rng);
        }
        let y = chol.correlate(&z);
        let mut best = f64::NEG_INFINITY;
        for j in 0..n {
            best = best.max(x[j] * y[j]);
        }
        draws.push(norm * best.max(0.0));
    }
    Ok(McEstimate {
        value: compensated_sum(&draws) / m as f64,
        std_error: standard_error(&draws),
    })
}

fn validate_mc_args(x: &[f64], m: usize) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Domain("tail dependence needs at least one argument".into()));
    }
    if x.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
        return Err(Error::Domain(format!(
            "tail dependence arguments must be finite and nonnegative, got {x:?}"
        )));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("Monte Carlo needs at least one draw".into()));
    }
    Ok(())
}

/// Descriptive tag of a tail dependence evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailDepKind {
    /// `l = ||.||_1` (asymptotic independence of components).
    Independence,
    /// `l = ||.||_inf` (complete dependence).
    CompleteDependence,
    HuslerReiss,
    ExtremalGaussian,
    MonteCarlo,
    Custom,
}

/// A tail dependence function of fixed arity, usable by the excursion-metric
/// and predictor formulas. Evaluation is pure and deterministic; Monte Carlo
/// backed instances replay a frozen random stream on every call so that
/// homogeneity holds exactly.
#[derive(Clone)]
pub struct TailDepFn {
    arity: usize,
    kind: TailDepKind,
    eval: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for TailDepFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TailDepFn")
            .field("arity", &self.arity)
            .field("kind", &self.kind)
            .finish()
    }
}

impl TailDepFn {
    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn kind(&self) -> TailDepKind {
        self.kind
    }

    /// Evaluate at a componentwise nonnegative point.
    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.arity, "tail dependence arity mismatch");
        debug_assert!(x.iter().all(|&v| v >= 0.0), "negative tail dependence argument");
        (self.eval)(x)
    }

    /// Extremal coefficient `l(1, ..., 1)` of this function.
    pub fn extremal_coefficient(&self) -> f64 {
        self.eval(&vec![1.0; self.arity])
    }

    /// Independent components: `l = ||.||_1`.
    pub fn independent(arity: usize) -> Self {
        TailDepFn {
            arity,
            kind: TailDepKind::Independence,
            eval: Arc::new(|x: &[f64]| x.iter().sum()),
        }
    }

    /// Completely dependent components: `l = ||.||_inf`.
    pub fn complete_dependence(arity: usize) -> Self {
        TailDepFn {
            arity,
            kind: TailDepKind::CompleteDependence,
            eval: Arc::new(|x: &[f64]| x.iter().cloned().fold(0.0, f64::max)),
        }
    }

    /// Bivariate Hüsler-Reiss pair with the given variogram value.
    pub fn bivariate_hr(gamma: f64) -> Result<Self> {
        l_bivariate_hr(1.0, 1.0, gamma)?; // validate the parameter once
        Ok(TailDepFn {
            arity: 2,
            kind: TailDepKind::HuslerReiss,
            eval: Arc::new(move |x: &[f64]| {
                l_bivariate_hr(x[0], x[1], gamma).expect("validated parameter")
            }),
        })
    }

    /// Bivariate extremal Gaussian pair with the given correlation.
    pub fn bivariate_eg(rho: f64) -> Result<Self> {
        l_bivariate_eg(1.0, 1.0, rho)?;
        Ok(TailDepFn {
            arity: 2,
            kind: TailDepKind::ExtremalGaussian,
            eval: Arc::new(move |x: &[f64]| {
                l_bivariate_eg(x[0], x[1], rho).expect("validated parameter")
            }),
        })
    }

    /// Arbitrary evaluator supplied by the caller. The caller is responsible
    /// for the tail dependence properties (homogeneity, norm bounds).
    pub fn from_fn<F>(arity: usize, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        TailDepFn { arity, kind: TailDepKind::Custom, eval: Arc::new(f) }
    }

    /// Monte Carlo evaluator for the log-Gaussian generator, replaying a
    /// frozen stream of `m` draws (seeded) on every evaluation. The Cholesky
    /// factor is computed once up front.
    pub fn mc_log_gaussian(
        cov: Vec<f64>,
        variances: Vec<f64>,
        m: usize,
        seed: u64,
    ) -> Result<Self> {
        let n = variances.len();
        if n == 0 || cov.len() != n * n {
            return Err(Error::InvalidParameter(
                "covariance must be square and match the variance vector".into(),
            ));
        }
        if m == 0 {
            return Err(Error::InvalidParameter("Monte Carlo needs at least one draw".into()));
        }
        let chol = CholeskyFactor::new(&cov, n)?;
        let eval = move |x: &[f64]| {
            use rand::SeedableRng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut z = vec![0.0; n];
            let mut draws = Vec::with_capacity(m);
            for _ in 0..m {
                for zj in z.iter_mut() {
                    *zj = StandardNormal.sample(&mut rng);
                }
                let g = chol.correlate(&z);
                let mut best = 0.0f64;
                for j in 0..n {
                    best = best.max(x[j] * (g[j] - variances[j] / 2.0).exp());
                }
                draws.push(best);
            }
            compensated_sum(&draws) / m as f64
        };
        Ok(TailDepFn { arity: n, kind: TailDepKind::MonteCarlo, eval: Arc::new(eval) })
    }

    /// Monte Carlo evaluator for the extremal Gaussian generator, replaying
    /// a frozen stream of `m` draws (seeded) on every evaluation.
    pub fn mc_eg(corr: Vec<f64>, n: usize, m: usize, seed: u64) -> Result<Self> {
        if n == 0 || corr.len() != n * n {
            return Err(Error::InvalidParameter("correlation must be n x n".into()));
        }
        if m == 0 {
            return Err(Error::InvalidParameter("Monte Carlo needs at least one draw".into()));
        }
        let chol = CholeskyFactor::new(&corr, n)?;
        let norm = (2.0 * std::f64::consts::PI).sqrt();
        let eval = move |x: &[f64]| {
            use rand::SeedableRng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut z = vec![0.0; n];
            let mut draws = Vec::with_capacity(m);
            for _ in 0..m {
                for zj in z.iter_mut() {
                    *zj = StandardNormal.sample(&mut rng);
                }
                let y = chol.correlate(&z);
                let mut best = f64::NEG_INFINITY;
                for j in 0..n {
                    best = best.max(x[j] * y[j]);
                }
                draws.push(norm * best.max(0.0));
            }
            compensated_sum(&draws) / m as f64
        };
        Ok(TailDepFn { arity: n, kind: TailDepKind::MonteCarlo, eval: Arc::new(eval) })
    }
}

/// Extremal coefficient of the pair at distance `h` for a process model:
///
/// - Brown-Resnick: `2 F0(sigma sqrt(h) / 2)`
/// - Smith:         `2 F0(h / (2 sigma))`
/// - extremal Gaussian: `1 + sqrt(1 - exp(-h/sigma)) / sqrt(2)`
///
/// Increasing in `h`, equal to 1 at `h = 0`.
pub fn extremal_coefficient(spec: &ModelSpec, h: f64) -> f64 {
    assert!(h >= 0.0 && h.is_finite(), "lag must be a finite nonnegative number");
    match spec.kind {
        ModelKind::BrownResnick => 2.0 * normal_cdf(spec.sigma * h.sqrt() / 2.0),
        ModelKind::Smith => 2.0 * normal_cdf(h / (2.0 * spec.sigma)),
        ModelKind::ExtremalGaussian => {
            1.0 + (1.0 - (-h / spec.sigma).exp()).sqrt() / 2.0f64.sqrt()
        }
    }
}

/// Find the volatility giving extremal coefficient `theta` at unit lag, by
/// bisection over `sigma` in `(1e-8, 1e3)` to tolerance 1e-9.
///
/// Requires `1 < theta < 2`; the extremal Gaussian family additionally
/// requires `theta < 1 + 1/sqrt(2)` (its supremum), otherwise the target is
/// infeasible.
pub fn calibrate_sigma(kind: ModelKind, theta: f64) -> Result<f64> {
    if !(theta > 1.0 && theta < 2.0) {
        return Err(Error::Domain(format!(
            "extremal coefficient must lie strictly between 1 and 2, got {theta}"
        )));
    }
    if kind == ModelKind::ExtremalGaussian && theta >= EG_THETA_SUP {
        return Err(Error::Infeasible(format!(
            "extremal Gaussian cannot reach theta = {theta}; its supremum is 1 + 1/sqrt(2) = {EG_THETA_SUP}"
        )));
    }
    let theta_at = |sigma: f64| {
        let spec = ModelSpec { kind, dim: 1, sigma };
        extremal_coefficient(&spec, 1.0)
    };
    let (mut lo, mut hi) = (1e-8, 1e3);
    let (f_lo, f_hi) = (theta_at(lo) - theta, theta_at(hi) - theta);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::Infeasible(format!(
            "no volatility in (1e-8, 1e3) reaches theta = {theta} for {}",
            kind.as_str()
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi || hi - lo < 1e-12 {
            break;
        }
        let f_mid = theta_at(mid) - theta;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-9 * (1.0 + lo.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
