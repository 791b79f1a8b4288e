//! The (shifted) Fréchet family and quasi-maximum-likelihood fitting.
//!
//! A Fréchet variable with tail index `alpha`, location `mu` and scale
//! `sigma` has cdf `exp(-((x-mu)/sigma)^-alpha)` for `x > mu` and 0 below.
//! Block maxima of heavy-tailed data are modelled with all three parameters
//! free; the simulation machinery elsewhere in the crate works with the
//! standard case `mu = 0, sigma = 1`.

use rand::Rng;

use crate::error::{Error, Result};

/// Exponent threshold beyond which `exp(-t)` underflows to zero in f64.
/// Above it we return an exact 0 instead of risking `0 * inf` products.
const EXP_UNDERFLOW: f64 = 745.0;

/// Parameters of a shifted Fréchet distribution.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FrechetParams {
    /// Tail index, `> 0`. Smaller values mean heavier tails.
    pub alpha: f64,
    /// Location (left endpoint of the support).
    pub mu: f64,
    /// Scale, `> 0`.
    pub sigma: f64,
}

impl FrechetParams {
    /// Validated constructor: `alpha > 0`, `sigma > 0`, all finite.
    pub fn new(alpha: f64, mu: f64, sigma: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Fréchet tail index must be a finite positive number, got {alpha}"
            )));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Fréchet scale must be a finite positive number, got {sigma}"
            )));
        }
        if !mu.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "Fréchet location must be finite, got {mu}"
            )));
        }
        Ok(FrechetParams { alpha, mu, sigma })
    }

    /// Standard Fréchet with the given tail index (`mu = 0`, `sigma = 1`).
    pub fn standard(alpha: f64) -> Self {
        FrechetParams { alpha, mu: 0.0, sigma: 1.0 }
    }

    /// Unit Fréchet: tail index 1, location 0, scale 1.
    pub fn unit() -> Self {
        Self::standard(1.0)
    }

    /// Cumulative distribution function. Exactly 0 at and below `mu`.
    pub fn cdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        if z <= 0.0 {
            return 0.0;
        }
        let t = z.powf(-self.alpha);
        (-t).exp()
    }

    /// Probability density function. Exactly 0 at and below `mu`, and 0
    /// where the cdf underflows (rather than a `0 * inf` NaN).
    pub fn pdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma;
        if z <= 0.0 {
            return 0.0;
        }
        let t = z.powf(-self.alpha);
        if t > EXP_UNDERFLOW {
            return 0.0;
        }
        self.alpha / self.sigma * t / z * (-t).exp()
    }

    /// Quantile function `mu + sigma * (-ln p)^(-1/alpha)` for `p` in (0,1).
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!(
                "quantile level must lie strictly between 0 and 1, got {p}"
            )));
        }
        Ok(self.mu + self.sigma * (-p.ln()).powf(-1.0 / self.alpha))
    }

    /// One draw by inversion of a uniform on the open interval (0,1).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                // u < 1 is guaranteed by the half-open generator range.
                return self.quantile(u).expect("u is in (0,1)");
            }
        }
    }

    /// `n` independent draws.
    pub fn sample_n<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

/// Density of the standard Fréchet with tail index `alpha` at `x`:
/// `alpha * x^(-1-alpha) * exp(-x^(-alpha))`, with the same underflow
/// guard as [`FrechetParams::pdf`]. Hot-path helper for the gradient code.
#[inline]
pub(crate) fn std_pdf(alpha: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let t = if alpha == 1.0 { 1.0 / x } else { x.powf(-alpha) };
    if t > EXP_UNDERFLOW {
        return 0.0;
    }
    alpha * t / x * (-t).exp()
}

/// Result of a quasi-maximum-likelihood fit.
#[derive(Debug, Clone, Copy)]
pub struct FrechetFit {
    pub params: FrechetParams,
    /// Quasi-log-likelihood at the fitted parameters.
    pub log_likelihood: f64,
}

/// Quasi-log-likelihood of a shifted Fréchet sample:
/// `M ln(alpha/sigma) - sum z_j^-alpha - (alpha+1) sum ln z_j` with
/// `z_j = (x_j - mu)/sigma`. Returns `-inf` when any observation lies at or
/// below `mu` or the value is not finite.
pub fn quasi_log_likelihood(params: &FrechetParams, data: &[f64]) -> f64 {
    let mut sum_pow = 0.0;
    let mut sum_log = 0.0;
    for &x in data {
        let z = (x - params.mu) / params.sigma;
        if z <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let lz = z.ln();
        let e = -params.alpha * lz;
        if e > EXP_UNDERFLOW {
            return f64::NEG_INFINITY;
        }
        sum_pow += e.exp();
        sum_log += lz;
    }
    let m = data.len() as f64;
    let ll = m * (params.alpha / params.sigma).ln() - sum_pow - (params.alpha + 1.0) * sum_log;
    if ll.is_finite() {
        ll
    } else {
        f64::NEG_INFINITY
    }
}

/// Fit a shifted Fréchet by quasi-maximum likelihood.
///
/// The location is constrained to `mu <= min(data) - eps` with
/// `eps = 1e-6 * range`, so every observation stays strictly inside the
/// support. The search runs Nelder-Mead in log/offset coordinates from five
/// deterministic moment-based starting points spanning heavy to light tails,
/// keeps the best optimum, and polishes it with a restarted simplex.
///
/// Requires at least 10 distinct finite values.
pub fn fit_quasi_ml(data: &[f64]) -> Result<FrechetFit> {
    if data.iter().any(|x| !x.is_finite()) {
        return Err(Error::InsufficientData(
            "fit data contain non-finite values".into(),
        ));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut distinct = 1;
    for w in sorted.windows(2) {
        if w[1] > w[0] {
            distinct += 1;
        }
    }
    if distinct < 10 {
        return Err(Error::InsufficientData(format!(
            "fit needs at least 10 distinct values, got {distinct}"
        )));
    }
    let min = sorted[0];
    let max = sorted[sorted.len() - 1];
    let range = max - min;
    let eps = 1e-6 * range;
    let median = sorted[sorted.len() / 2];

    // Parameter vector p = (ln alpha, ln sigma, ln offset), with
    // mu = min - eps - offset so the location constraint always holds.
    let objective = |p: &[f64]| -> f64 {
        if p.iter().any(|v| !v.is_finite() || v.abs() > 60.0) {
            return f64::INFINITY;
        }
        let params = FrechetParams {
            alpha: p[0].exp(),
            sigma: p[1].exp(),
            mu: min - eps - p[2].exp(),
        };
        -quasi_log_likelihood(&params, data)
    };

    // (initial tail index, location offset as a fraction of the range).
    let starts: [(f64, f64); 5] =
        [(1.5, 1.0), (3.0, 0.5), (6.0, 0.2), (12.0, 0.1), (24.0, 0.02)];
    let mut best: Option<(Vec<f64>, f64)> = None;
    for &(alpha0, frac) in &starts {
        let offset = (frac * range - eps).max(eps);
        let mu0 = min - eps - offset;
        let sigma0 = median - mu0;
        let p0 = [alpha0.ln(), sigma0.ln(), offset.ln()];
        let (p, f) = nelder_mead(&objective, &p0, 0.4, 3000);
        if best.as_ref().is_none_or(|(_, bf)| f < *bf) {
            best = Some((p, f));
        }
    }
    let (p_best, _) = best.expect("at least one start");
    // Polish with a tighter simplex around the winner.
    let (p, f) = nelder_mead(&objective, &p_best, 0.02, 2000);
    let (p, f) = if f.is_finite() { (p, f) } else { (p_best.clone(), objective(&p_best)) };
    if !f.is_finite() {
        return Err(Error::Optimization(
            "quasi-ML objective non-finite at every candidate".into(),
        ));
    }
    let params = FrechetParams::new(p[0].exp(), min - eps - p[2].exp(), p[1].exp())?;
    Ok(FrechetFit { params, log_likelihood: -f })
}

/// Minimize `f` by the Nelder-Mead simplex method (standard coefficients:
/// reflection 1, expansion 2, contraction 1/2, shrink 1/2). Returns the best
/// vertex and its value. Deterministic for a given start.
fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: &F,
    start: &[f64],
    step: f64,
    max_iter: usize,
) -> (Vec<f64>, f64) {
    let n = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), f(start)));
    for i in 0..n {
        let mut v = start.to_vec();
        v[i] += step;
        let fv = f(&v);
        simplex.push((v, fv));
    }
    for _ in 0..max_iter {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let spread = simplex[n].1 - simplex[0].1;
        let diam: f64 = (0..n)
            .map(|i| (simplex[n].0[i] - simplex[0].0[i]).abs())
            .fold(0.0, f64::max);
        if spread.abs() < 1e-12 && diam < 1e-10 {
            break;
        }
        // Centroid of all but the worst vertex.
        let mut centroid = vec![0.0; n];
        for vertex in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(&vertex.0) {
                *c += x / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let reflect: Vec<f64> = centroid
            .iter()
            .zip(&worst.0)
            .map(|(c, w)| c + (c - w))
            .collect();
        let fr = f(&reflect);
        if fr < simplex[0].1 {
            let expand: Vec<f64> = centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + 2.0 * (c - w))
                .collect();
            let fe = f(&expand);
            simplex[n] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflect, fr);
        } else {
            let contract: Vec<f64> = if fr < worst.1 {
                centroid.iter().zip(&reflect).map(|(c, r)| c + 0.5 * (r - c)).collect()
            } else {
                centroid.iter().zip(&worst.0).map(|(c, w)| c + 0.5 * (w - c)).collect()
            };
            let fc = f(&contract);
            if fc < worst.1.min(fr) {
                simplex[n] = (contract, fc);
            } else {
                // Shrink toward the best vertex.
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    for (x, b) in vertex.0.iter_mut().zip(&best) {
                        *x = b + 0.5 * (*x - b);
                    }
                    vertex.1 = f(&vertex.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    simplex.swap_remove(0)
}
