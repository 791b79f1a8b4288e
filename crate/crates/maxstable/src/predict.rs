//! Max-linear prediction of max-stable fields: learning samples, the
//! penalized empirical target, its almost-everywhere gradient, stochastic
//! optimization, and the 1D/2D forecast drivers.
//!
//! The predictor of an unobserved coordinate is a max-linear combination
//! `M(lambda, X) = max_i lambda_i X_i` of the observed window. Its weights
//! minimize an empirical functional `Phi(lambda) = (1/N) sum_j Q_j(lambda)`
//! built from `N` translated copies of the window/target configuration: the
//! summands estimate the excursion metric between target and predictor plus
//! `gamma` times the squared 2-Wasserstein distance between the predictor's
//! law and the target margin. Two penalty estimators are provided: a
//! bootstrap form that compares each window against a resampled companion,
//! and a deterministic non-bootstrap form whose pairwise couplings make the
//! target a V-statistic (evaluated in O(N log N) through a sorted-rank
//! identity).
//!
//! `Phi` is piecewise smooth; off the measure-zero tie set its gradient
//! concentrates on the argmax coordinate of each window. Optimization is
//! plain SGD or Adam over `tau = ln lambda` (keeping weights positive), with
//! best-so-far tracking and patience-based early stopping.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frechet::std_pdf;
use crate::simulate::{series_length_for, GridSpec, Path};
use crate::stats::mean;
use crate::taildep::TailDepFn;

/// Standard alpha-Fréchet cdf on the positive half-line.
fn std_cdf(alpha: f64, x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if alpha == 1.0 {
        (-x.recip()).exp()
    } else {
        (-x.powf(-alpha)).exp()
    }
}

/// Mixes a stream index into a base seed, so derived runs are reproducible
/// but decorrelated.
pub(crate) fn derive_seed(base: u64, stream: u64) -> u64 {
    base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Nonnegative, not identically zero weight vector of a max-linear
/// predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    lambda: Vec<f64>,
}

impl Weights {
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        if lambda.is_empty() {
            return Err(Error::InvalidParameter("weight vector must be nonempty".into()));
        }
        if lambda.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(Error::InvalidParameter(
                "weights must be finite and nonnegative".into(),
            ));
        }
        if lambda.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidParameter("weights must not all be zero".into()));
        }
        Ok(Weights { lambda })
    }

    /// The all-ones start vector: every observation weighted equally.
    pub fn uniform(n: usize) -> Self {
        Weights { lambda: vec![1.0; n] }
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    /// Componentwise power `lambda^alpha`, the scale coordinates the tail
    /// dependence function acts on.
    pub fn powered(&self, alpha: f64) -> Vec<f64> {
        self.lambda.iter().map(|&v| v.powf(alpha)).collect()
    }
}

/// Max-linear combination `max_i lambda_i x_i`.
pub fn max_linear(weights: &Weights, x: &[f64]) -> Result<f64> {
    if weights.len() != x.len() {
        return Err(Error::Domain(format!(
            "weight length {} does not match observation length {}",
            weights.len(),
            x.len()
        )));
    }
    Ok(max_linear_raw(weights.lambda(), x))
}

fn max_linear_raw(lambda: &[f64], x: &[f64]) -> f64 {
    lambda
        .iter()
        .zip(x)
        .map(|(&l, &v)| l * v)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Which penalty estimator a problem uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Penalty compares each window with a bootstrap-resampled companion;
    /// the resample makes the target stochastic (frozen per optimizer run).
    Bootstrap,
    /// Deterministic penalty with pairwise couplings over the fixed window
    /// list; the default.
    NonBootstrap,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Bootstrap => "bootstrap",
            Variant::NonBootstrap => "non-bootstrap",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bootstrap" => Ok(Variant::Bootstrap),
            "non-bootstrap" | "nonbootstrap" => Ok(Variant::NonBootstrap),
            other => Err(Error::Parse(format!("unknown variant {other:?}"))),
        }
    }
}

/// Optimization method for the weight search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClassicSgd,
    Adam,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classic-sgd" | "sgd" => Ok(Method::ClassicSgd),
            "adam" => Ok(Method::Adam),
            other => Err(Error::Parse(format!("unknown optimizer {other:?}"))),
        }
    }
}

/// Stochastic-optimizer settings. The defaults are the ones the forecast
/// drivers use: Adam over `ln lambda` with step 0.1, early stopping after
/// 200 non-improving iterations, and a hard cap of 20000 iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub method: Method,
    /// Step size eta.
    pub step: f64,
    /// Consecutive non-improving iterations tolerated before stopping.
    pub patience: usize,
    pub max_iters: usize,
    /// Optimize `tau = ln lambda` instead of `lambda` (keeps weights
    /// positive without projection).
    pub reparametrize_log: bool,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            method: Method::Adam,
            step: 0.1,
            patience: 200,
            max_iters: 20_000,
            reparametrize_log: true,
            seed: 0,
        }
    }
}

impl OptimizerConfig {
    fn validate(&self) -> Result<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "step size must be positive, got {}",
                self.step
            )));
        }
        if self.patience == 0 {
            return Err(Error::InvalidParameter("patience must be at least 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

/// A fully extracted learning problem: `N` windows of `n` positive
/// observations, the matching target values, the observed forecast window
/// the final predictor is applied to, and the functional's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastProblem {
    n: usize,
    /// Window values, row `j` at `[j*n, (j+1)*n)`.
    windows: Vec<f64>,
    /// Target value paired with each window.
    targets: Vec<f64>,
    /// Observed values at the forecast sites.
    forecast_values: Vec<f64>,
    pub alpha: f64,
    pub gamma: f64,
    pub variant: Variant,
}

impl ForecastProblem {
    /// Build a problem from raw window/target values (row-major windows).
    pub fn from_parts(
        windows: Vec<f64>,
        n: usize,
        targets: Vec<f64>,
        forecast_values: Vec<f64>,
        alpha: f64,
        gamma: f64,
        variant: Variant,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("window size must be positive".into()));
        }
        if targets.is_empty() || windows.len() != targets.len() * n {
            return Err(Error::InvalidParameter(format!(
                "{} window values do not form {} windows of size {n}",
                windows.len(),
                targets.len()
            )));
        }
        if forecast_values.len() != n {
            return Err(Error::InvalidParameter(format!(
                "forecast window has {} values, expected {n}",
                forecast_values.len()
            )));
        }
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tail index must be positive, got {alpha}"
            )));
        }
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "penalty weight must be nonnegative, got {gamma}"
            )));
        }
        let positive = |v: &f64| v.is_finite() && *v > 0.0;
        if !windows.iter().all(positive)
            || !targets.iter().all(positive)
            || !forecast_values.iter().all(positive)
        {
            return Err(Error::Domain(
                "observations must be strictly positive (Fréchet support)".into(),
            ));
        }
        Ok(ForecastProblem { n, windows, targets, forecast_values, alpha, gamma, variant })
    }

    /// Window size `n`.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of learning samples `N`.
    pub fn num_samples(&self) -> usize {
        self.targets.len()
    }

    pub fn window(&self, j: usize) -> &[f64] {
        &self.windows[j * self.n..(j + 1) * self.n]
    }

    pub fn target(&self, j: usize) -> f64 {
        self.targets[j]
    }

    pub fn forecast_values(&self) -> &[f64] {
        &self.forecast_values
    }

    /// Apply a weight vector to the observed forecast window.
    pub fn predict(&self, weights: &Weights) -> Result<f64> {
        max_linear(weights, &self.forecast_values)
    }
}

/// Serializable description of a site-indexed learning problem, paired with
/// the optimizer settings that solve it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub forecast_sites: Vec<i64>,
    pub target_site: i64,
    pub shifts: Vec<i64>,
    pub alpha: f64,
    pub gamma: f64,
    pub variant: Variant,
    pub optimizer: OptimizerConfig,
}

impl ProblemConfig {
    /// Extract the problem's values from a 1D series. Every shifted window
    /// must lie inside the observations and away from the forecast window
    /// itself, and every shifted target must be observed.
    pub fn instantiate(&self, observations: &Path) -> Result<ForecastProblem> {
        let sites = observations.grid().as_line().ok_or_else(|| {
            Error::Domain("site-indexed problems need a 1D series".into())
        })?;
        let index: HashMap<i64, usize> =
            sites.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        if self.forecast_sites.contains(&self.target_site) {
            return Err(Error::InvalidParameter(
                "target site must not be part of the forecast window".into(),
            ));
        }
        let lookup = |site: i64, what: &str| -> Result<f64> {
            index
                .get(&site)
                .map(|&i| observations.values()[i])
                .ok_or_else(|| Error::Domain(format!("{what} site {site} is not observed")))
        };
        let forecast_values: Vec<f64> = self
            .forecast_sites
            .iter()
            .map(|&s| lookup(s, "forecast"))
            .collect::<Result<_>>()?;
        let n = self.forecast_sites.len();
        let mut windows = Vec::with_capacity(n * self.shifts.len());
        let mut targets = Vec::with_capacity(self.shifts.len());
        for &k in &self.shifts {
            for &s in &self.forecast_sites {
                if self.forecast_sites.contains(&(s + k)) {
                    return Err(Error::InvalidParameter(format!(
                        "shift {k} maps the window onto the forecast sites"
                    )));
                }
                windows.push(lookup(s + k, "window")?);
            }
            targets.push(lookup(self.target_site + k, "target")?);
        }
        ForecastProblem::from_parts(
            windows,
            n,
            targets,
            forecast_values,
            self.alpha,
            self.gamma,
            self.variant,
        )
    }
}

/// The default 1D layout: the last `horizon` observations of a contiguous
/// series are ground truth, the `n` observations before them form the
/// forecast window, and the `N*n` observations before that tile into `N`
/// non-overlapping learning windows (window `j`'s target for step `s` sits
/// `s` sites past the window's end). Series longer than required are
/// anchored at their end; older history is ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct LearningSamples {
    n: usize,
    horizon: usize,
    num_samples: usize,
    /// Site label of `tail[0]`.
    first_site: i64,
    /// The last `N*n + n + horizon` observations.
    tail: Vec<f64>,
}

/// Slice a contiguous series into the default learning layout. The horizon
/// must not exceed the window size (longer horizons would need unobserved
/// learning targets).
pub fn build_learning_samples(
    series: &Path,
    n: usize,
    horizon: usize,
    num_samples: usize,
) -> Result<LearningSamples> {
    if n == 0 || num_samples == 0 {
        return Err(Error::InvalidParameter(
            "window size and sample count must be positive".into(),
        ));
    }
    if horizon > n {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} exceeds window size {n}: learning targets would be unobserved"
        )));
    }
    let sites = series
        .grid()
        .as_line()
        .ok_or_else(|| Error::Domain("learning samples need a 1D series".into()))?;
    if sites.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::Domain(
            "learning samples need consecutive integer sites".into(),
        ));
    }
    let required = series_length_for(horizon, n, num_samples);
    if series.len() < required {
        return Err(Error::InsufficientData(format!(
            "series has {} observations, the layout needs at least {required}",
            series.len()
        )));
    }
    let start = series.len() - required;
    Ok(LearningSamples {
        n,
        horizon,
        num_samples,
        first_site: sites[start],
        tail: series.values()[start..].to_vec(),
    })
}

impl LearningSamples {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    /// Sites of the forecast window.
    pub fn forecast_sites(&self) -> Vec<i64> {
        let base = self.first_site + (self.num_samples * self.n) as i64;
        (0..self.n as i64).map(|i| base + i).collect()
    }

    /// Site predicted at forecast step `s` (1-based).
    pub fn target_site(&self, step: usize) -> Result<i64> {
        self.check_step(step)?;
        Ok(self.first_site + (self.num_samples * self.n + self.n + step - 1) as i64)
    }

    /// Ground-truth observation at forecast step `s`.
    pub fn truth(&self, step: usize) -> Result<f64> {
        self.check_step(step)?;
        Ok(self.tail[self.num_samples * self.n + self.n + step - 1])
    }

    /// Translations mapping the forecast window onto each learning window.
    pub fn shifts(&self) -> Vec<i64> {
        (0..self.num_samples)
            .map(|j| (j as i64 - self.num_samples as i64) * self.n as i64)
            .collect()
    }

    pub fn forecast_values(&self) -> &[f64] {
        let start = self.num_samples * self.n;
        &self.tail[start..start + self.n]
    }

    fn check_step(&self, step: usize) -> Result<()> {
        if step == 0 || step > self.horizon {
            return Err(Error::InvalidParameter(format!(
                "step {step} outside horizon 1..={}",
                self.horizon
            )));
        }
        Ok(())
    }

    /// The learning problem for forecast step `s`: window `j`'s target is
    /// the observation `s` sites past that window's end.
    pub fn problem_for_step(
        &self,
        step: usize,
        alpha: f64,
        gamma: f64,
        variant: Variant,
    ) -> Result<ForecastProblem> {
        self.check_step(step)?;
        let n = self.n;
        let mut windows = Vec::with_capacity(self.num_samples * n);
        let mut targets = Vec::with_capacity(self.num_samples);
        for j in 0..self.num_samples {
            windows.extend_from_slice(&self.tail[j * n..(j + 1) * n]);
            targets.push(self.tail[j * n + n + step - 1]);
        }
        ForecastProblem::from_parts(
            windows,
            n,
            targets,
            self.forecast_values().to_vec(),
            alpha,
            gamma,
            variant,
        )
    }

    /// Serializable description of the step's problem.
    pub fn config_for_step(
        &self,
        step: usize,
        alpha: f64,
        gamma: f64,
        variant: Variant,
        optimizer: &OptimizerConfig,
    ) -> Result<ProblemConfig> {
        Ok(ProblemConfig {
            forecast_sites: self.forecast_sites(),
            target_site: self.target_site(step)?,
            shifts: self.shifts(),
            alpha,
            gamma,
            variant,
            optimizer: optimizer.clone(),
        })
    }
}

/// One bootstrap resample: for each learning sample an index drawn with
/// replacement from the window list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BootstrapSample {
    indices: Vec<usize>,
}

impl BootstrapSample {
    pub fn draw<R: Rng + ?Sized>(num_samples: usize, rng: &mut R) -> Self {
        let indices = (0..num_samples).map(|_| rng.random_range(0..num_samples)).collect();
        BootstrapSample { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// The resampled comparison values `Y_j`: the probability transform of the
/// predictor applied to each resampled window.
pub fn bootstrap_y(
    problem: &ForecastProblem,
    weights: &Weights,
    sample: &BootstrapSample,
) -> Result<Vec<f64>> {
    check_dims(problem, weights)?;
    if sample.indices.len() != problem.num_samples()
        || sample.indices.iter().any(|&h| h >= problem.num_samples())
    {
        return Err(Error::InvalidParameter(
            "bootstrap sample does not match the problem's window list".into(),
        ));
    }
    let stats = SummandStats::compute(problem, weights.lambda());
    Ok(sample.indices.iter().map(|&h| stats.u[h]).collect())
}

fn check_dims(problem: &ForecastProblem, weights: &Weights) -> Result<()> {
    if weights.len() != problem.n() {
        return Err(Error::Domain(format!(
            "weight length {} does not match window size {}",
            weights.len(),
            problem.n()
        )));
    }
    Ok(())
}

/// Per-window quantities shared by the target and its gradient.
struct SummandStats {
    /// Predictor value on window `j`.
    m: Vec<f64>,
    /// Its probability transform `U_j`.
    u: Vec<f64>,
    /// Lowest argmax coordinate of each window.
    argmax: Vec<usize>,
    /// `2 F(target_j v M_j) - U_j`, the excursion part of each summand.
    excursion: Vec<f64>,
}

impl SummandStats {
    fn compute(problem: &ForecastProblem, lambda: &[f64]) -> Self {
        let big_n = problem.num_samples();
        let alpha = problem.alpha;
        let mut m = Vec::with_capacity(big_n);
        let mut u = Vec::with_capacity(big_n);
        let mut argmax = Vec::with_capacity(big_n);
        let mut excursion = Vec::with_capacity(big_n);
        for j in 0..big_n {
            let window = problem.window(j);
            let mut best = f64::NEG_INFINITY;
            let mut best_i = 0;
            for (i, (&l, &x)) in lambda.iter().zip(window).enumerate() {
                let v = l * x;
                if v > best {
                    best = v;
                    best_i = i;
                }
            }
            let uj = std_cdf(alpha, best);
            let x0 = problem.target(j);
            let top = if x0 > best { std_cdf(alpha, x0) } else { uj };
            m.push(best);
            u.push(uj);
            argmax.push(best_i);
            excursion.push(2.0 * top - uj);
        }
        SummandStats { m, u, argmax, excursion }
    }

    /// `(1/N^2) sum_j [U_j + 2 sum_{m<j} max(U_m, U_j)]`, evaluated through
    /// the sorted-rank identity `sum_i (2i - 1) U_(i)` (ascending order).
    fn pairwise_penalty_mean(&self) -> f64 {
        let mut sorted = self.u.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let acc: f64 = sorted
            .iter()
            .enumerate()
            .map(|(i, &v)| (2 * i + 1) as f64 * v)
            .sum();
        let n = self.u.len() as f64;
        acc / (n * n)
    }
}

/// Value of the empirical target. Non-bootstrap problems are deterministic;
/// bootstrap problems need the frozen resample that supplies the comparison
/// copies.
pub fn target_phi(
    weights: &Weights,
    problem: &ForecastProblem,
    bootstrap: Option<&BootstrapSample>,
) -> Result<f64> {
    check_dims(problem, weights)?;
    match problem.variant {
        Variant::NonBootstrap => {
            if bootstrap.is_some() {
                return Err(Error::InvalidParameter(
                    "non-bootstrap problems take no bootstrap sample".into(),
                ));
            }
            let stats = SummandStats::compute(problem, weights.lambda());
            Ok(phi_from_stats(problem, &stats, None))
        }
        Variant::Bootstrap => {
            let sample = bootstrap.ok_or_else(|| {
                Error::InvalidParameter("bootstrap problems need a bootstrap sample".into())
            })?;
            let y = bootstrap_y(problem, weights, sample)?;
            let stats = SummandStats::compute(problem, weights.lambda());
            Ok(phi_from_stats(problem, &stats, Some(&y)))
        }
    }
}

/// Bootstrap-form target with explicit comparison values. The displayed
/// gradient treats the comparison copies as fixed numbers (they stand in
/// for independent draws), so this is the function the bootstrap gradient
/// differentiates exactly.
pub fn target_phi_with_y(
    weights: &Weights,
    problem: &ForecastProblem,
    y: &[f64],
) -> Result<f64> {
    check_dims(problem, weights)?;
    if y.len() != problem.num_samples() {
        return Err(Error::InvalidParameter(format!(
            "{} comparison values for {} samples",
            y.len(),
            problem.num_samples()
        )));
    }
    let stats = SummandStats::compute(problem, weights.lambda());
    Ok(phi_from_stats(problem, &stats, Some(y)))
}

fn phi_from_stats(problem: &ForecastProblem, stats: &SummandStats, y: Option<&[f64]>) -> f64 {
    let gamma = problem.gamma;
    let base = mean(&stats.excursion) - 0.5;
    let penalty = match y {
        Some(y) => {
            let acc: f64 = stats
                .u
                .iter()
                .zip(y)
                .map(|(&u, &yv)| u * u - u.max(yv))
                .sum();
            1.0 / 3.0 + acc / stats.u.len() as f64
        }
        None => {
            let sq = stats.u.iter().map(|&u| u * u).sum::<f64>() / stats.u.len() as f64;
            1.0 / 3.0 + sq - stats.pairwise_penalty_mean()
        }
    };
    base + gamma * penalty
}

/// Gradient of the summand `Q_j`, concentrated on argmax coordinates. For
/// the non-bootstrap variant this includes the couplings through the
/// earlier windows `m < j`; for the bootstrap variant the comparison value
/// is treated as fixed. Exact max ties (the non-differentiable set) are
/// resolved one-sidedly toward the lowest coordinate index.
pub fn grad_q(
    weights: &Weights,
    problem: &ForecastProblem,
    j: usize,
    bootstrap: Option<&BootstrapSample>,
) -> Result<Vec<f64>> {
    check_dims(problem, weights)?;
    if j >= problem.num_samples() {
        return Err(Error::InvalidParameter(format!(
            "summand {j} outside 0..{}",
            problem.num_samples()
        )));
    }
    let stats = SummandStats::compute(problem, weights.lambda());
    let y = match (problem.variant, bootstrap) {
        (Variant::NonBootstrap, None) => None,
        (Variant::Bootstrap, Some(sample)) => Some(bootstrap_y(problem, weights, sample)?),
        (Variant::NonBootstrap, Some(_)) => {
            return Err(Error::InvalidParameter(
                "non-bootstrap problems take no bootstrap sample".into(),
            ))
        }
        (Variant::Bootstrap, None) => {
            return Err(Error::InvalidParameter(
                "bootstrap problems need a bootstrap sample".into(),
            ))
        }
    };
    let mut grad = vec![0.0; problem.n()];
    summand_gradient(problem, &stats, y.as_deref(), j, 1.0, &mut grad);
    Ok(grad)
}

/// Add `scale * grad Q_j` into `grad`.
fn summand_gradient(
    problem: &ForecastProblem,
    stats: &SummandStats,
    y: Option<&[f64]>,
    j: usize,
    scale: f64,
    grad: &mut [f64],
) {
    let gamma = problem.gamma;
    let alpha = problem.alpha;
    let mj = stats.m[j];
    let hj = std_pdf(alpha, mj);
    let xj = problem.window(j)[stats.argmax[j]];
    let mut bracket = if problem.target(j) < mj { 1.0 } else { -1.0 } + 2.0 * gamma * stats.u[j];
    match y {
        Some(y) => {
            if y[j] < stats.u[j] {
                bracket -= gamma;
            }
            grad[stats.argmax[j]] += scale * bracket * hj * xj;
        }
        None => {
            let n = problem.num_samples() as f64;
            let earlier_below = (0..j).filter(|&m| stats.m[m] < mj).count() as f64;
            bracket -= gamma / n + 2.0 * gamma / n * earlier_below;
            grad[stats.argmax[j]] += scale * bracket * hj * xj;
            // Couplings through the earlier windows that dominate this one.
            for m in 0..j {
                if stats.m[m] > mj {
                    let hm = std_pdf(alpha, stats.m[m]);
                    let xm = problem.window(m)[stats.argmax[m]];
                    grad[stats.argmax[m]] -= scale * 2.0 * gamma / n * hm * xm;
                }
            }
        }
    }
}

/// Gradient of the full target `Phi = (1/N) sum_j Q_j`. Assembled in
/// O(N (n + log N)) through the rank counts of the predictor values.
pub fn grad_phi(
    weights: &Weights,
    problem: &ForecastProblem,
    bootstrap: Option<&BootstrapSample>,
) -> Result<Vec<f64>> {
    check_dims(problem, weights)?;
    let stats = SummandStats::compute(problem, weights.lambda());
    match problem.variant {
        Variant::Bootstrap => {
            let sample = bootstrap.ok_or_else(|| {
                Error::InvalidParameter("bootstrap problems need a bootstrap sample".into())
            })?;
            let y = bootstrap_y(problem, weights, sample)?;
            Ok(grad_phi_from_stats(problem, &stats, Some(&y)))
        }
        Variant::NonBootstrap => {
            if bootstrap.is_some() {
                return Err(Error::InvalidParameter(
                    "non-bootstrap problems take no bootstrap sample".into(),
                ));
            }
            Ok(grad_phi_from_stats(problem, &stats, None))
        }
    }
}

fn grad_phi_from_stats(
    problem: &ForecastProblem,
    stats: &SummandStats,
    y: Option<&[f64]>,
) -> Vec<f64> {
    let big_n = problem.num_samples();
    let n_inv = 1.0 / big_n as f64;
    let gamma = problem.gamma;
    let alpha = problem.alpha;
    let mut grad = vec![0.0; problem.n()];
    let ranks: Option<Vec<f64>> = match y {
        Some(_) => None,
        None => {
            // Number of strictly smaller predictor values per window.
            let mut sorted = stats.m.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            Some(
                stats
                    .m
                    .iter()
                    .map(|&mj| sorted.partition_point(|&v| v < mj) as f64)
                    .collect(),
            )
        }
    };
    for j in 0..big_n {
        let mj = stats.m[j];
        let hj = std_pdf(alpha, mj);
        let xj = problem.window(j)[stats.argmax[j]];
        let mut coef = if problem.target(j) < mj { 1.0 } else { -1.0 } + 2.0 * gamma * stats.u[j];
        match (y, &ranks) {
            (Some(y), _) => {
                if y[j] < stats.u[j] {
                    coef -= gamma;
                }
                grad[stats.argmax[j]] += n_inv * coef * hj * xj;
            }
            (None, Some(ranks)) => {
                coef -= gamma * n_inv * (1.0 + 2.0 * ranks[j]);
                grad[stats.argmax[j]] += n_inv * coef * hj * xj;
            }
            (None, None) => unreachable!(),
        }
    }
    grad
}

/// Smallest relative gap protecting the target from its non-differentiable
/// tie set at this point: argmax margins within each window, target-vs-
/// predictor kinks, and (per variant) the pairwise or bootstrap comparison
/// kinks. Zero means the point lies on the tie set. A bootstrap index
/// mapping a window to itself counts as zero: the comparison value then
/// coincides with the summand's own transform, parking the penalty kink
/// exactly at the evaluation point.
pub fn smoothness_margin(
    weights: &Weights,
    problem: &ForecastProblem,
    bootstrap: Option<&BootstrapSample>,
) -> Result<f64> {
    check_dims(problem, weights)?;
    let stats = SummandStats::compute(problem, weights.lambda());
    let lambda = weights.lambda();
    let mut margin = f64::INFINITY;
    for j in 0..problem.num_samples() {
        let mj = stats.m[j];
        let window = problem.window(j);
        for (i, (&l, &x)) in lambda.iter().zip(window).enumerate() {
            if i != stats.argmax[j] {
                margin = margin.min((mj - l * x) / mj);
            }
        }
        let x0 = problem.target(j);
        margin = margin.min((x0 - mj).abs() / x0.max(mj));
    }
    match problem.variant {
        Variant::NonBootstrap => {
            let mut sorted = stats.m.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for pair in sorted.windows(2) {
                margin = margin.min((pair[1] - pair[0]) / pair[1]);
            }
        }
        Variant::Bootstrap => {
            let sample = bootstrap.ok_or_else(|| {
                Error::InvalidParameter("bootstrap problems need a bootstrap sample".into())
            })?;
            for (j, &h) in sample.indices().iter().enumerate() {
                margin = margin.min((stats.u[j] - stats.u[h]).abs());
            }
        }
    }
    Ok(margin)
}

/// Result of a stochastic-optimization run.
#[derive(Debug, Clone)]
pub struct SgdResult {
    /// Best weights found.
    pub weights: Weights,
    /// Target value at the best weights.
    pub phi: f64,
    /// Update steps executed.
    pub iterations: usize,
    /// Target value before any step, then after each step.
    pub trace: Vec<f64>,
    /// Exact max ties encountered while sampling summand gradients; on
    /// continuous data this stays zero.
    pub ties_detected: usize,
}

/// Minimize the target by stochastic gradient descent from the all-ones
/// start. Each iteration samples one summand uniformly, steps with the
/// configured method (over `ln lambda` when log-reparametrization is on),
/// evaluates the target, and tracks the best iterate; stops after
/// `patience` consecutive non-improving iterations or `max_iters` steps.
/// Bootstrap problems freeze one resample for the whole run, so the target
/// is deterministic given the seed.
pub fn sgd_minimize(problem: &ForecastProblem, config: &OptimizerConfig) -> Result<SgdResult> {
    sgd_minimize_from(problem, config, &Weights::uniform(problem.n()))
}

/// [`sgd_minimize`] from an explicit starting point instead of all ones,
/// e.g. to continue from a nearby problem's solution. With
/// log-reparametrization the start must be strictly positive, since the
/// optimizer moves in `ln lambda`.
pub fn sgd_minimize_from(
    problem: &ForecastProblem,
    config: &OptimizerConfig,
    start: &Weights,
) -> Result<SgdResult> {
    config.validate()?;
    let n = problem.n();
    if start.len() != n {
        return Err(Error::InvalidParameter(format!(
            "starting point has {} weights, problem needs {n}",
            start.len()
        )));
    }
    if config.reparametrize_log && start.lambda().iter().any(|&v| v <= 0.0) {
        return Err(Error::InvalidParameter(
            "log-reparametrized optimization needs a strictly positive start".into(),
        ));
    }
    let big_n = problem.num_samples();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sample = match problem.variant {
        Variant::Bootstrap => Some(BootstrapSample::draw(big_n, &mut rng)),
        Variant::NonBootstrap => None,
    };

    let mut lambda = start.lambda().to_vec();
    let mut tau: Vec<f64> = if config.reparametrize_log {
        lambda.iter().map(|v| v.ln()).collect()
    } else {
        vec![0.0; n]
    };
    let eval = |lam: &[f64]| -> (SummandStats, Option<Vec<f64>>, f64) {
        let stats = SummandStats::compute(problem, lam);
        let y = sample
            .as_ref()
            .map(|s| s.indices().iter().map(|&h| stats.u[h]).collect::<Vec<f64>>());
        let phi = phi_from_stats(problem, &stats, y.as_deref());
        (stats, y, phi)
    };

    let (mut stats, mut y, mut phi) = eval(&lambda);
    let mut best_lambda = lambda.clone();
    let mut best_phi = phi;
    let mut trace = Vec::with_capacity(config.max_iters + 1);
    trace.push(phi);

    let mut adam_m = vec![0.0; n];
    let mut adam_v = vec![0.0; n];
    let (beta1, beta2, eps) = (0.9, 0.999, 1e-8);
    let mut stale = 0usize;
    let mut iterations = 0usize;
    let mut ties = 0usize;

    while iterations < config.max_iters && stale < config.patience {
        // Sample a summand; on an exact tie try others before falling back
        // to the one-sided rule built into the gradient.
        let indices = sample.as_ref().map(|s| s.indices());
        let mut j = rng.random_range(0..big_n);
        let mut attempts = 0;
        while summand_tied(problem, &lambda, &stats, indices, j) && attempts < big_n {
            ties += 1;
            j = rng.random_range(0..big_n);
            attempts += 1;
        }
        let mut grad = vec![0.0; n];
        summand_gradient(problem, &stats, y.as_deref(), j, 1.0, &mut grad);

        iterations += 1;
        if config.reparametrize_log {
            // Chain rule for tau = ln lambda: the gradient picks up a
            // factor lambda.
            for i in 0..n {
                grad[i] *= lambda[i];
            }
            step(config, iterations, &mut tau, &grad, &mut adam_m, &mut adam_v, beta1, beta2, eps);
            for i in 0..n {
                lambda[i] = tau[i].exp();
            }
        } else {
            step(
                config,
                iterations,
                &mut lambda,
                &grad,
                &mut adam_m,
                &mut adam_v,
                beta1,
                beta2,
                eps,
            );
            for v in lambda.iter_mut() {
                *v = v.max(0.0);
            }
            if lambda.iter().all(|&v| v == 0.0) {
                // An all-zero iterate is outside the feasible set; retreat
                // to the best point seen and keep going.
                lambda.copy_from_slice(&best_lambda);
            }
        }

        (stats, y, phi) = eval(&lambda);
        trace.push(phi);
        if phi < best_phi {
            best_phi = phi;
            best_lambda.copy_from_slice(&lambda);
            stale = 0;
        } else {
            stale += 1;
        }
    }

    Ok(SgdResult {
        weights: Weights::new(best_lambda)?,
        phi: best_phi,
        iterations,
        trace,
        ties_detected: ties,
    })
}

/// Exact-tie test for one summand at precomputed stats: a second
/// coordinate achieving the window max, the target hitting the predictor
/// value, or the variant's comparison value coinciding with the summand's.
/// A bootstrap index mapping a window to itself is not a tie here: the
/// resampled transform then tracks the summand's own by construction, and
/// the displayed one-sided gradient is the convention for that event.
fn summand_tied(
    problem: &ForecastProblem,
    lambda: &[f64],
    stats: &SummandStats,
    indices: Option<&[usize]>,
    j: usize,
) -> bool {
    let mj = stats.m[j];
    let window = problem.window(j);
    let argmax_tie = lambda
        .iter()
        .zip(window)
        .enumerate()
        .any(|(i, (&l, &x))| i != stats.argmax[j] && l * x == mj);
    if argmax_tie || problem.target(j) == mj {
        return true;
    }
    match indices {
        Some(indices) => indices[j] != j && stats.u[indices[j]] == stats.u[j],
        None => (0..problem.num_samples()).any(|m| m != j && stats.m[m] == mj),
    }
}

fn step(
    config: &OptimizerConfig,
    t: usize,
    coords: &mut [f64],
    grad: &[f64],
    adam_m: &mut [f64],
    adam_v: &mut [f64],
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    match config.method {
        Method::ClassicSgd => {
            for (c, &g) in coords.iter_mut().zip(grad) {
                *c -= config.step * g;
            }
        }
        Method::Adam => {
            let bc1 = 1.0 - beta1.powi(t as i32);
            let bc2 = 1.0 - beta2.powi(t as i32);
            for i in 0..coords.len() {
                adam_m[i] = beta1 * adam_m[i] + (1.0 - beta1) * grad[i];
                adam_v[i] = beta2 * adam_v[i] + (1.0 - beta2) * grad[i] * grad[i];
                let mh = adam_m[i] / bc1;
                let vh = adam_v[i] / bc2;
                coords[i] -= config.step * mh / (vh.sqrt() + eps);
            }
        }
    }
}

/// The analytic population target on the scale coordinates `w = lambda^
/// alpha`, through the tail dependence function of the extended vector
/// `(target, window)`:
///
/// `Psi_1(w) = 1/(l((0,w))+1) - 2/(l((1,w))+1) + gamma * penalty(l((0,w)))`
///
/// where `penalty` is the squared 2-Wasserstein law deviation. Used as an
/// oracle for landscape and non-uniqueness checks.
pub fn analytic_psi1(l_ext: &TailDepFn, w: &[f64], gamma: f64) -> Result<f64> {
    if w.len() + 1 != l_ext.arity() {
        return Err(Error::Domain(format!(
            "scale vector length {} does not match extended arity {}",
            w.len(),
            l_ext.arity()
        )));
    }
    if w.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
        return Err(Error::Domain("scale coordinates must be finite and nonnegative".into()));
    }
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "penalty weight must be nonnegative, got {gamma}"
        )));
    }
    let mut ext = Vec::with_capacity(w.len() + 1);
    ext.push(0.0);
    ext.extend_from_slice(w);
    let l0 = l_ext.eval(&ext);
    ext[0] = 1.0;
    let l1 = l_ext.eval(&ext);
    Ok(1.0 / (l0 + 1.0) - 2.0 / (l1 + 1.0)
        + gamma * crate::metrics::wasserstein2_sq_penalty(l0))
}

/// Direct multi-horizon forecast of a contiguous series: one optimization
/// per step `s = 1..=horizon`, each targeting offset `s` from the same
/// observed forecast window (predicted values are never fed back). Returns
/// the `horizon` predictions.
pub fn forecast_path(
    series: &Path,
    horizon: usize,
    n: usize,
    num_samples: usize,
    gamma: f64,
    alpha: f64,
    variant: Variant,
    config: &OptimizerConfig,
) -> Result<Vec<f64>> {
    let samples = build_learning_samples(series, n, horizon, num_samples)?;
    let mut predictions = Vec::with_capacity(horizon);
    for step in 1..=horizon {
        let problem = samples.problem_for_step(step, alpha, gamma, variant)?;
        let mut step_config = config.clone();
        step_config.seed = derive_seed(config.seed, step as u64);
        let result = sgd_minimize(&problem, &step_config)?;
        predictions.push(problem.predict(&result.weights)?);
    }
    Ok(predictions)
}

/// Settings for extending a square lattice by `horizon` rows and columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldForecastConfig {
    /// Extension width `m`: an observed `n x n` grid grows to
    /// `(n+m) x (n+m)`. The forecast configuration per target holds the
    /// `m+1` nearest observed sites.
    pub horizon: usize,
    /// Learning configurations per target.
    pub num_samples: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub variant: Variant,
    pub optimizer: OptimizerConfig,
}

/// Extend an observed square lattice to `(n+m) x (n+m)` by predicting each
/// new site from its `m+1` nearest observed grid points (distance ties
/// broken by polar angle). Learning samples are translated congruent
/// copies of the target/configuration shape inside the observed grid,
/// taken evenly spaced in row-major shift order; they may overlap. Each
/// target is optimized independently with a seed derived from its
/// position, so the output is deterministic.
pub fn forecast_field_2d(field: &Path, config: &FieldForecastConfig) -> Result<Path> {
    let side = match field.grid() {
        GridSpec::Lattice { side } => *side,
        GridSpec::Line { .. } => {
            return Err(Error::Domain("field forecasting needs a 2D lattice".into()))
        }
    };
    let m = config.horizon;
    if m == 0 {
        return Err(Error::InvalidParameter("extension width must be at least 1".into()));
    }
    if config.num_samples == 0 {
        return Err(Error::InvalidParameter("need at least one learning sample".into()));
    }
    let observed = field.values();
    let new_side = side + m;
    let mut out = vec![0.0; new_side * new_side];
    for r in 1..=side {
        for c in 1..=side {
            out[(r - 1) * new_side + (c - 1)] = observed[(r - 1) * side + (c - 1)];
        }
    }

    let value_at = |r: i64, c: i64| observed[(r as usize - 1) * side + (c as usize - 1)];
    let mut target_index = 0u64;
    for tr in 1..=new_side as i64 {
        for tc in 1..=new_side as i64 {
            if tr <= side as i64 && tc <= side as i64 {
                continue;
            }
            target_index += 1;
            let sites = nearest_observed_sites(side, [tr, tc], m + 1);
            let (windows, targets) =
                learning_shifts(side, &sites, [tr, tc], config.num_samples, &value_at)?;
            let forecast_values: Vec<f64> =
                sites.iter().map(|&[r, c]| value_at(r, c)).collect();
            let problem = ForecastProblem::from_parts(
                windows,
                sites.len(),
                targets,
                forecast_values,
                config.alpha,
                config.gamma,
                config.variant,
            )?;
            let mut opt = config.optimizer.clone();
            opt.seed = derive_seed(config.optimizer.seed, target_index);
            let result = sgd_minimize(&problem, &opt)?;
            let prediction = problem.predict(&result.weights)?;
            out[(tr as usize - 1) * new_side + (tc as usize - 1)] = prediction;
        }
    }
    Path::new(GridSpec::lattice(new_side)?, out)
}

/// The `count` observed lattice sites closest to `target` in Euclidean
/// distance, ties broken by the polar angle of the offset vector.
fn nearest_observed_sites(side: usize, target: [i64; 2], count: usize) -> Vec<[i64; 2]> {
    let mut sites: Vec<[i64; 2]> = Vec::with_capacity(side * side);
    for r in 1..=side as i64 {
        for c in 1..=side as i64 {
            sites.push([r, c]);
        }
    }
    sites.sort_by(|a, b| {
        let da = (a[0] - target[0]).pow(2) + (a[1] - target[1]).pow(2);
        let db = (b[0] - target[0]).pow(2) + (b[1] - target[1]).pow(2);
        da.cmp(&db).then_with(|| {
            let ang_a = ((a[0] - target[0]) as f64).atan2((a[1] - target[1]) as f64);
            let ang_b = ((b[0] - target[0]) as f64).atan2((b[1] - target[1]) as f64);
            ang_a.partial_cmp(&ang_b).unwrap()
        })
    });
    sites.truncate(count);
    sites
}

/// Enumerate the translations that keep the whole configuration (sites and
/// target) inside the observed grid, pick `count` of them evenly spaced in
/// row-major order, and extract window/target values.
fn learning_shifts(
    side: usize,
    sites: &[[i64; 2]],
    target: [i64; 2],
    count: usize,
    value_at: &dyn Fn(i64, i64) -> f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r_lo = target[0];
    let mut r_hi = target[0];
    let mut c_lo = target[1];
    let mut c_hi = target[1];
    for &[r, c] in sites {
        r_lo = r_lo.min(r);
        r_hi = r_hi.max(r);
        c_lo = c_lo.min(c);
        c_hi = c_hi.max(c);
    }
    let s = side as i64;
    let dr_min = 1 - r_lo;
    let dr_max = s - r_hi;
    let dc_min = 1 - c_lo;
    let dc_max = s - c_hi;
    let rows = dr_max - dr_min + 1;
    let cols = dc_max - dc_min + 1;
    let total = rows.max(0) * cols.max(0);
    if total < count as i64 {
        return Err(Error::Infeasible(format!(
            "observed grid admits {total} learning configurations, {count} requested"
        )));
    }
    let mut windows = Vec::with_capacity(count * sites.len());
    let mut targets = Vec::with_capacity(count);
    for i in 0..count as i64 {
        let pick = i * total / count as i64;
        let dr = dr_min + pick / cols;
        let dc = dc_min + pick % cols;
        for &[r, c] in sites {
            windows.push(value_at(r + dr, c + dc));
        }
        targets.push(value_at(target[0] + dr, target[1] + dc));
    }
    Ok((windows, targets))
}
