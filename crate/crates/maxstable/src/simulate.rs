//! Exact simulation of the three max-stable models on 1D index sets and 2D
//! lattices, plus the Gaussian building blocks they are driven by.
//!
//! A max-stable field with unit Fréchet margins is the pointwise maximum of
//! a Poisson storm of spectral functions. Simulation uses the
//! extremal-functions method: sites are swept in a fixed order, and at each
//! site a decreasing Poisson stream of spectral functions conditioned to hit
//! the field at that site is generated; a candidate is kept only when it
//! stays strictly below the field at every previously processed site (such
//! candidates were already accounted for there), and the stream stops once
//! its level drops below the current field value. The output is an exact
//! draw — no threshold truncation is involved.
//!
//! The spectral processes are `Z_t = exp(G_t - var(G_t)/2)` with `G` a
//! Brownian/Lévy field (Brown-Resnick), its degenerate linear-drift special
//! case (Smith), and the rectified Gaussian `Z_t = sqrt(2*pi) max(Y_t, 0)`
//! (extremal Gaussian). Tilted draws conditioned to equal 1 at the sweep
//! site are produced in closed form per model; 1D index sets use exact
//! sequential constructions (independent-increment walk, stationary
//! autoregression) so a draw costs O(sites), while 2D lattices factor the
//! covariance once per realization.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CholeskyFactor;
use crate::stats::{mean, standard_error};
use crate::taildep::{McEstimate, ModelKind, ModelSpec};

/// Ordered set of index points a field is simulated on.
///
/// One-dimensional grids are ordered lists of distinct integer sites;
/// two-dimensional grids are square lattices `{1..side} x {1..side}` stored
/// row-major. The site order is part of the value: simulation sweeps and
/// serialization both follow it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GridSpec {
    Line { sites: Vec<i64> },
    Lattice { side: usize },
}

impl GridSpec {
    /// Consecutive integer sites `1..=len`.
    pub fn line(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidParameter("grid needs at least one site".into()));
        }
        Ok(GridSpec::Line { sites: (1..=len as i64).collect() })
    }

    /// Arbitrary distinct integer sites in the given order.
    pub fn line_from_sites(sites: Vec<i64>) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::InvalidParameter("grid needs at least one site".into()));
        }
        let mut seen = sites.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("grid sites must be distinct".into()));
        }
        Ok(GridSpec::Line { sites })
    }

    /// Square lattice `{1..side} x {1..side}`, row-major.
    pub fn lattice(side: usize) -> Result<Self> {
        if side == 0 {
            return Err(Error::InvalidParameter("lattice needs a positive side".into()));
        }
        Ok(GridSpec::Lattice { side })
    }

    pub fn dimension(&self) -> u8 {
        match self {
            GridSpec::Line { .. } => 1,
            GridSpec::Lattice { .. } => 2,
        }
    }

    /// Number of sites.
    pub fn len(&self) -> usize {
        match self {
            GridSpec::Line { sites } => sites.len(),
            GridSpec::Lattice { side } => side * side,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinates of the site at position `idx` in sweep order, embedded
    /// in the plane (1D sites sit on the first axis).
    pub fn point(&self, idx: usize) -> [f64; 2] {
        match self {
            GridSpec::Line { sites } => [sites[idx] as f64, 0.0],
            GridSpec::Lattice { side } => {
                [(idx / side + 1) as f64, (idx % side + 1) as f64]
            }
        }
    }

    /// Euclidean distance between the sites at positions `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let p = self.point(i);
        let q = self.point(j);
        ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
    }

    /// The site list when the grid is one-dimensional.
    pub fn as_line(&self) -> Option<&[i64]> {
        match self {
            GridSpec::Line { sites } => Some(sites),
            GridSpec::Lattice { .. } => None,
        }
    }
}

/// One realization of a field over a grid, values aligned with the grid's
/// site order.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    grid: GridSpec,
    values: Vec<f64>,
}

impl Path {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "value count {} does not match grid size {}",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("path values must be finite".into()));
        }
        Ok(Path { grid, values })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Write `site_index[,site_index2],value` rows with a header.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        match &self.grid {
            GridSpec::Line { sites } => {
                out.write_record(["site_index", "value"])?;
                for (s, v) in sites.iter().zip(&self.values) {
                    out.write_record([s.to_string(), format!("{v:?}")])?;
                }
            }
            GridSpec::Lattice { side } => {
                out.write_record(["site_index", "site_index2", "value"])?;
                for (idx, v) in self.values.iter().enumerate() {
                    let r = idx / side + 1;
                    let c = idx % side + 1;
                    out.write_record([r.to_string(), c.to_string(), format!("{v:?}")])?;
                }
            }
        }
        out.flush().map_err(Error::Io)?;
        Ok(())
    }

    /// Read a path back from the CSV layout produced by [`Path::write_csv`].
    /// Two columns give a 1D grid in file order; three columns must cover a
    /// full square lattice (any row order).
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut input = csv::Reader::from_reader(reader);
        let width = input.headers()?.len();
        match width {
            2 => {
                let mut sites = Vec::new();
                let mut values = Vec::new();
                for record in input.records() {
                    let record = record?;
                    sites.push(parse_field::<i64>(record.get(0), "site_index")?);
                    values.push(parse_field::<f64>(record.get(1), "value")?);
                }
                Path::new(GridSpec::line_from_sites(sites)?, values)
            }
            3 => {
                let mut cells = Vec::new();
                for record in input.records() {
                    let record = record?;
                    let r = parse_field::<i64>(record.get(0), "site_index")?;
                    let c = parse_field::<i64>(record.get(1), "site_index2")?;
                    let v = parse_field::<f64>(record.get(2), "value")?;
                    cells.push((r, c, v));
                }
                let side = (cells.len() as f64).sqrt().round() as usize;
                if side * side != cells.len() || side == 0 {
                    return Err(Error::Parse(format!(
                        "{} rows do not form a square lattice",
                        cells.len()
                    )));
                }
                let mut values = vec![f64::NAN; side * side];
                let mut filled = vec![false; side * side];
                for (r, c, v) in cells {
                    if r < 1 || c < 1 || r as usize > side || c as usize > side {
                        return Err(Error::Parse(format!(
                            "lattice site ({r},{c}) outside {side}x{side}"
                        )));
                    }
                    let idx = (r as usize - 1) * side + (c as usize - 1);
                    if filled[idx] {
                        return Err(Error::Parse(format!("duplicate lattice site ({r},{c})")));
                    }
                    filled[idx] = true;
                    values[idx] = v;
                }
                Path::new(GridSpec::lattice(side)?, values)
            }
            other => Err(Error::Parse(format!(
                "expected 2 or 3 columns, found {other}"
            ))),
        }
    }

    /// Write a 2D realization as a JSON matrix (rows in site order).
    pub fn write_json_matrix<W: Write>(&self, writer: W) -> Result<()> {
        let GridSpec::Lattice { side } = self.grid else {
            return Err(Error::Domain("JSON matrix output needs a 2D lattice".into()));
        };
        let rows: Vec<&[f64]> = self.values.chunks(side).collect();
        serde_json::to_writer(writer, &rows)?;
        Ok(())
    }
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, name: &str) -> Result<T> {
    let raw = field.ok_or_else(|| Error::Parse(format!("missing {name} column")))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("cannot parse {name} from {raw:?}")))
}

/// Total series length needed to host `N` learning windows of size `n`,
/// the forecast window of size `n`, and `horizon` ground-truth steps:
/// `N*n + n + horizon`.
pub fn series_length_for(horizon: usize, n: usize, learning_samples: usize) -> usize {
    assert!(n >= 1 && learning_samples >= 1, "window size and sample count must be positive");
    learning_samples * n + n + horizon
}

/// One draw of a centered Gaussian vector over the grid, by factoring the
/// covariance matrix assembled from `covariance` on pairs of site
/// coordinates. Semidefinite matrices are rescued by jitter escalation;
/// genuinely indefinite input is an error.
pub fn simulate_gaussian<C, R>(grid: &GridSpec, covariance: C, rng: &mut R) -> Result<Path>
where
    C: Fn([f64; 2], [f64; 2]) -> f64,
    R: Rng + ?Sized,
{
    let n = grid.len();
    let mut cov = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = covariance(grid.point(i), grid.point(j));
            cov[i * n + j] = v;
            cov[j * n + i] = v;
        }
    }
    let factor = CholeskyFactor::new(&cov, n)?;
    let z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Path::new(grid.clone(), factor.correlate(&z))
}

/// Per-model machinery producing spectral draws tilted at one site: a draw
/// of the spectral process conditioned (in the size-biased sense) to equal
/// 1 at the sweep site.
enum TiltedSampler<'g> {
    /// Brown-Resnick on a 1D site set: independent-increment walk over the
    /// sites in coordinate order; `order[i]` is the position of the i-th
    /// smallest site.
    WalkLine { grid: &'g GridSpec, spec: ModelSpec, order: Vec<usize> },
    /// Brown-Resnick on a lattice: centered field with the anchored
    /// covariance `vario(|s|) + vario(|t|) - vario(|s-t|)`, factored once.
    WalkLattice { grid: &'g GridSpec, spec: ModelSpec, factor: CholeskyFactor },
    /// Smith: the degenerate linear field `G_t = <t, W>`,
    /// `W ~ N(0, I/sigma^2)`.
    Linear { grid: &'g GridSpec, spec: ModelSpec },
    /// Extremal Gaussian on a 1D site set: exact stationary autoregression
    /// over the sites in coordinate order.
    RectifiedLine { grid: &'g GridSpec, spec: ModelSpec, order: Vec<usize> },
    /// Extremal Gaussian on a lattice: correlation matrix factored once.
    RectifiedLattice { grid: &'g GridSpec, spec: ModelSpec, factor: CholeskyFactor },
}

fn coordinate_order(sites: &[i64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sites.len()).collect();
    order.sort_by_key(|&i| sites[i]);
    order
}

impl<'g> TiltedSampler<'g> {
    fn new(spec: &ModelSpec, grid: &'g GridSpec) -> Result<Self> {
        if spec.dim != grid.dimension() {
            return Err(Error::InvalidParameter(format!(
                "model dimension {} does not match grid dimension {}",
                spec.dim,
                grid.dimension()
            )));
        }
        let spec = spec.clone();
        match (spec.kind, grid) {
            (ModelKind::Smith, _) => Ok(TiltedSampler::Linear { grid, spec }),
            (ModelKind::BrownResnick, GridSpec::Line { sites }) => {
                Ok(TiltedSampler::WalkLine { grid, order: coordinate_order(sites), spec })
            }
            (ModelKind::BrownResnick, GridSpec::Lattice { .. }) => {
                let n = grid.len();
                let mut cov = vec![0.0; n * n];
                for i in 0..n {
                    let pi = grid.point(i);
                    let ni = (pi[0] * pi[0] + pi[1] * pi[1]).sqrt();
                    for j in 0..=i {
                        let pj = grid.point(j);
                        let nj = (pj[0] * pj[0] + pj[1] * pj[1]).sqrt();
                        let v = spec.variogram(ni) + spec.variogram(nj)
                            - spec.variogram(grid.distance(i, j));
                        cov[i * n + j] = v;
                        cov[j * n + i] = v;
                    }
                }
                let factor = CholeskyFactor::new(&cov, n)?;
                Ok(TiltedSampler::WalkLattice { grid, spec, factor })
            }
            (ModelKind::ExtremalGaussian, GridSpec::Line { sites }) => {
                Ok(TiltedSampler::RectifiedLine { grid, order: coordinate_order(sites), spec })
            }
            (ModelKind::ExtremalGaussian, GridSpec::Lattice { .. }) => {
                let n = grid.len();
                let mut corr = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..=i {
                        let v = spec.correlation(grid.distance(i, j));
                        corr[i * n + j] = v;
                        corr[j * n + i] = v;
                    }
                }
                let factor = CholeskyFactor::new(&corr, n)?;
                Ok(TiltedSampler::RectifiedLattice { grid, spec, factor })
            }
        }
    }

    /// Fill `out` with one tilted draw at sweep position `k`; `out[k]` is
    /// exactly 1.
    fn tilted_into<R: Rng + ?Sized>(&self, k: usize, out: &mut [f64], rng: &mut R) {
        match self {
            TiltedSampler::WalkLine { grid, spec, order } => {
                // Centered walk with the model's increment variances; only
                // increments matter, so anchor at the first site in
                // coordinate order.
                let sites = grid.as_line().expect("1D sampler on a 1D grid");
                let mut level = 0.0;
                for (i, &pos) in order.iter().enumerate() {
                    if i > 0 {
                        let gap = (sites[pos] - sites[order[i - 1]]) as f64;
                        let step_sd = (2.0 * spec.variogram(gap)).sqrt();
                        let z: f64 = rng.sample(StandardNormal);
                        level += step_sd * z;
                    }
                    out[pos] = level;
                }
                log_gaussian_tilt(grid, spec, k, out);
            }
            TiltedSampler::WalkLattice { grid, spec, factor } => {
                gaussian_into(factor, out, rng);
                log_gaussian_tilt(grid, spec, k, out);
            }
            TiltedSampler::Linear { grid, spec } => {
                let w1: f64 = rng.sample(StandardNormal);
                let w2: f64 = rng.sample(StandardNormal);
                for (idx, slot) in out.iter_mut().enumerate() {
                    let p = grid.point(idx);
                    *slot = (p[0] * w1 + p[1] * w2) / spec.sigma;
                }
                log_gaussian_tilt(grid, spec, k, out);
            }
            TiltedSampler::RectifiedLine { grid, spec, order } => {
                let sites = grid.as_line().expect("1D sampler on a 1D grid");
                let mut prev = 0.0;
                for (i, &pos) in order.iter().enumerate() {
                    let z: f64 = rng.sample(StandardNormal);
                    prev = if i == 0 {
                        z
                    } else {
                        let phi = spec.correlation((sites[pos] - sites[order[i - 1]]) as f64);
                        phi * prev + (1.0 - phi * phi).sqrt() * z
                    };
                    out[pos] = prev;
                }
                rectified_tilt(grid, spec, k, out, rng);
            }
            TiltedSampler::RectifiedLattice { grid, spec, factor } => {
                gaussian_into(factor, out, rng);
                rectified_tilt(grid, spec, k, out, rng);
            }
        }
    }
}

fn gaussian_into<R: Rng + ?Sized>(factor: &CholeskyFactor, out: &mut [f64], rng: &mut R) {
    let z: Vec<f64> = (0..out.len()).map(|_| rng.sample(StandardNormal)).collect();
    out.copy_from_slice(&factor.correlate(&z));
}

/// Turn a centered Gaussian draw `G` into the log-Gaussian spectral draw
/// tilted at position `k`: `exp((G_t - G_k) - vario(t,k))`. The tilt shifts
/// the mean of the exponent to minus the semivariogram, which makes the
/// size-biased draw have unit value at `k` and the correct law elsewhere.
fn log_gaussian_tilt(grid: &GridSpec, spec: &ModelSpec, k: usize, out: &mut [f64]) {
    let anchor = out[k];
    for idx in 0..out.len() {
        let v = out[idx] - anchor - spec.variogram(grid.distance(idx, k));
        out[idx] = v.exp();
    }
    out[k] = 1.0;
}

/// Turn a centered unit-variance Gaussian draw `Y` into the rectified
/// spectral draw tilted at position `k`: the value at `k` is re-drawn from
/// the size-biased (Rayleigh) law, the field is shifted by the conditional
/// regression on that coordinate, and the result is rectified and scaled to
/// equal 1 at `k`.
fn rectified_tilt<R: Rng + ?Sized>(
    grid: &GridSpec,
    spec: &ModelSpec,
    k: usize,
    out: &mut [f64],
    rng: &mut R,
) {
    let e: f64 = rng.sample(Exp1);
    let radius = (2.0 * e).sqrt();
    let shift = radius - out[k];
    for idx in 0..out.len() {
        let rho = spec.correlation(grid.distance(idx, k));
        out[idx] = (out[idx] + shift * rho).max(0.0) / radius;
    }
    out[k] = 1.0;
}

/// Exact draw of the max-stable field with unit Fréchet margins over the
/// grid, by the extremal-functions sweep described in the module docs.
pub fn simulate_max_stable<R: Rng + ?Sized>(
    spec: &ModelSpec,
    grid: &GridSpec,
    rng: &mut R,
) -> Result<Path> {
    let sampler = TiltedSampler::new(spec, grid)?;
    let n = grid.len();
    let mut field = vec![0.0; n];
    let mut candidate = vec![0.0; n];
    for k in 0..n {
        let mut inv_level: f64 = rng.sample(Exp1);
        let mut level = 1.0 / inv_level;
        while level > field[k] {
            sampler.tilted_into(k, &mut candidate, rng);
            // Candidates reaching the field at an earlier sweep site were
            // already produced there; ties (possible for rectified draws)
            // count as reaching it.
            let already_counted = (0..k).any(|j| level * candidate[j] >= field[j]);
            if !already_counted {
                for (f, c) in field.iter_mut().zip(&candidate) {
                    *f = f.max(level * *c);
                }
            }
            let e: f64 = rng.sample(Exp1);
            inv_level += e;
            level = 1.0 / inv_level;
        }
    }
    Path::new(grid.clone(), field)
}

/// Pooled pairwise extremal coefficient estimate at an integer lag, from
/// one or more 1D realizations with standard unit Fréchet margins. Inverts
/// the empirical excursion metric of the lag pairs:
/// `theta_hat = (1 + E_hat) / (1 - E_hat)`, with a delta-method standard
/// error.
pub fn empirical_extremal_coefficient(paths: &[Path], lag: i64) -> Result<McEstimate> {
    if lag < 1 {
        return Err(Error::InvalidParameter(format!("lag must be >= 1, got {lag}")));
    }
    let mut summands = Vec::new();
    for path in paths {
        let sites = path.grid().as_line().ok_or_else(|| {
            Error::Domain("extremal coefficient estimation needs 1D realizations".into())
        })?;
        let index: HashMap<i64, usize> =
            sites.iter().enumerate().map(|(i, &s)| (s, i)).collect();
        for (i, &s) in sites.iter().enumerate() {
            if let Some(&j) = index.get(&(s + lag)) {
                let x = path.values()[i];
                let y = path.values()[j];
                let f = |v: f64| (-1.0 / v).exp();
                summands.push(2.0 * f(x.max(y)) - f(x) - f(y));
            }
        }
    }
    if summands.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "found {} lag-{lag} pairs, need at least 2",
            summands.len()
        )));
    }
    let e = mean(&summands);
    let se = standard_error(&summands);
    Ok(McEstimate {
        value: (1.0 + e) / (1.0 - e),
        std_error: 2.0 / ((1.0 - e) * (1.0 - e)) * se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_critical_value, ks_statistic, sample_std};
    use crate::taildep::{calibrate_sigma, extremal_coefficient, ModelKind};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec_for(kind: ModelKind, dim: u8, theta: f64) -> ModelSpec {
        let sigma = calibrate_sigma(kind, theta).unwrap();
        ModelSpec::new(kind, dim, sigma).unwrap()
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let ma = mean(a);
        let mb = mean(b);
        let mut num = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for (x, y) in a.iter().zip(b) {
            num += (x - ma) * (y - mb);
            va += (x - ma) * (x - ma);
            vb += (y - mb) * (y - mb);
        }
        num / (va * vb).sqrt()
    }

    #[test]
    fn grid_validation_and_geometry() {
        assert!(GridSpec::line(0).is_err());
        assert!(GridSpec::line_from_sites(vec![]).is_err());
        assert!(GridSpec::line_from_sites(vec![1, 3, 1]).is_err());
        assert!(GridSpec::lattice(0).is_err());

        let line = GridSpec::line(3).unwrap();
        assert_eq!(line.as_line().unwrap(), &[1, 2, 3]);
        assert_eq!(line.dimension(), 1);
        assert_eq!(line.distance(0, 2), 2.0);

        let lat = GridSpec::lattice(2).unwrap();
        assert_eq!(lat.len(), 4);
        assert_eq!(lat.point(0), [1.0, 1.0]);
        assert_eq!(lat.point(1), [1.0, 2.0]);
        assert_eq!(lat.point(2), [2.0, 1.0]);
        assert_eq!(lat.point(3), [2.0, 2.0]);
        assert!((lat.distance(0, 3) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn series_length_matches_window_arithmetic() {
        assert_eq!(series_length_for(20, 21, 100), 2141);
        assert_eq!(series_length_for(1, 2, 100), 203);
        assert_eq!(series_length_for(0, 5, 7), 40);
    }

    #[test]
    fn path_validation_and_csv_round_trip() {
        let grid = GridSpec::line(3).unwrap();
        assert!(Path::new(grid.clone(), vec![1.0]).is_err());
        assert!(Path::new(grid.clone(), vec![1.0, f64::NAN, 2.0]).is_err());

        let path = Path::new(grid, vec![0.25, 1.5, 3.125]).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("site_index,value\n"));
        let back = Path::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, path);
    }

    #[test]
    fn lattice_csv_and_json_round_trip() {
        let grid = GridSpec::lattice(2).unwrap();
        let path = Path::new(grid, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("site_index,site_index2,value\n"));
        let back = Path::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, path);

        let mut json = Vec::new();
        path.write_json_matrix(&mut json).unwrap();
        let matrix: Vec<Vec<f64>> = serde_json::from_slice(&json).unwrap();
        assert_eq!(matrix, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);

        let line = Path::new(GridSpec::line(2).unwrap(), vec![1.0, 2.0]).unwrap();
        assert!(line.write_json_matrix(&mut Vec::new()).is_err());
    }

    #[test]
    fn csv_reader_rejects_malformed_lattices() {
        let missing = "site_index,site_index2,value\n1,1,1.0\n1,2,2.0\n2,1,3.0\n";
        assert!(Path::read_csv(missing.as_bytes()).is_err());
        let duplicate = "site_index,site_index2,value\n1,1,1.0\n1,1,2.0\n2,1,3.0\n2,2,4.0\n";
        assert!(Path::read_csv(duplicate.as_bytes()).is_err());
        let outside = "site_index,site_index2,value\n0,1,1.0\n1,2,2.0\n2,1,3.0\n2,2,4.0\n";
        assert!(Path::read_csv(outside.as_bytes()).is_err());
    }

    #[test]
    fn gaussian_brownian_increments_are_uncorrelated_and_centered() {
        let grid = GridSpec::line(4).unwrap();
        let cov = |p: [f64; 2], q: [f64; 2]| p[0].min(q[0]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let reps = 100_000;
        let mut inc_a = Vec::with_capacity(reps);
        let mut inc_b = Vec::with_capacity(reps);
        let mut at_site = Vec::with_capacity(reps);
        for _ in 0..reps {
            let path = simulate_gaussian(&grid, cov, &mut rng).unwrap();
            let v = path.values();
            inc_a.push(v[1] - v[0]);
            inc_b.push(v[3] - v[2]);
            at_site.push(v[2]);
        }
        assert!(pearson(&inc_a, &inc_b).abs() < 0.02);
        let se = standard_error(&at_site);
        assert!(mean(&at_site).abs() < 3.0 * se);
        // Increment variance over a unit gap is the gap length.
        assert!((sample_std(&inc_a).powi(2) - 1.0).abs() < 0.02);
    }

    #[test]
    fn gaussian_exponential_covariance_matches_lag_correlation() {
        let sigma_g = 2.5;
        let grid = GridSpec::line(2).unwrap();
        let cov =
            |p: [f64; 2], q: [f64; 2]| (-((p[0] - q[0]).abs()) / sigma_g).exp();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let reps = 100_000;
        let mut first = Vec::with_capacity(reps);
        let mut second = Vec::with_capacity(reps);
        for _ in 0..reps {
            let path = simulate_gaussian(&grid, cov, &mut rng).unwrap();
            first.push(path.values()[0]);
            second.push(path.values()[1]);
        }
        let target = (-1.0 / sigma_g).exp();
        let r = pearson(&first, &second);
        let se = (1.0 - target * target) / (reps as f64).sqrt();
        assert!((r - target).abs() < 3.0 * se, "r {r} target {target}");
    }

    #[test]
    fn gaussian_rejects_indefinite_covariance() {
        let grid = GridSpec::line(2).unwrap();
        // Off-diagonal 2 with unit diagonal is not a covariance matrix.
        let cov = |p: [f64; 2], q: [f64; 2]| if p[0] == q[0] { 1.0 } else { 2.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        assert!(simulate_gaussian(&grid, cov, &mut rng).is_err());
    }

    #[test]
    fn model_grid_dimension_mismatch_is_rejected() {
        let spec = spec_for(ModelKind::BrownResnick, 2, 1.6);
        let grid = GridSpec::line(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        assert!(simulate_max_stable(&spec, &grid, &mut rng).is_err());
    }

    /// Shared harness: simulate `reps` short series, KS-test the margins at
    /// an interior site, and check the lag-pair extremal coefficients
    /// against the closed forms.
    fn check_margins_and_dependence(kind: ModelKind, theta: f64, seed: u64) {
        let spec = spec_for(kind, 1, theta);
        let grid = GridSpec::line(6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reps = 10_000;
        let mut paths = Vec::with_capacity(reps);
        for _ in 0..reps {
            paths.push(simulate_max_stable(&spec, &grid, &mut rng).unwrap());
        }
        let mid: Vec<f64> = paths.iter().map(|p| p.values()[2]).collect();
        let ks = ks_statistic(&mid, |x| (-1.0 / x).exp());
        let crit = ks_critical_value(reps, 0.01);
        assert!(ks < crit, "{kind:?}: KS {ks} >= {crit}");
        for lag in [1i64, 2, 5] {
            let est = empirical_extremal_coefficient(&paths, lag).unwrap();
            let target = extremal_coefficient(&spec, lag as f64);
            assert!(
                (est.value - target).abs() < 0.03,
                "{kind:?} lag {lag}: {} vs {target} (se {})",
                est.value,
                est.std_error
            );
        }
    }

    #[test]
    fn brown_resnick_margins_and_dependence() {
        check_margins_and_dependence(ModelKind::BrownResnick, 1.3, 21);
    }

    #[test]
    fn smith_margins_and_dependence() {
        check_margins_and_dependence(ModelKind::Smith, 1.3, 22);
    }

    #[test]
    fn extremal_gaussian_margins_and_dependence() {
        check_margins_and_dependence(ModelKind::ExtremalGaussian, 1.3, 23);
    }

    #[test]
    fn lattice_margins_are_unit_frechet() {
        let spec = spec_for(ModelKind::BrownResnick, 2, 1.6);
        let grid = GridSpec::lattice(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let reps = 10_000;
        let mut center = Vec::with_capacity(reps);
        for _ in 0..reps {
            center.push(simulate_max_stable(&spec, &grid, &mut rng).unwrap().values()[4]);
        }
        let ks = ks_statistic(&center, |x| (-1.0 / x).exp());
        assert!(ks < ks_critical_value(reps, 0.01), "KS {ks}");
    }

    #[test]
    fn rescaled_maxima_reproduce_the_law() {
        let spec = spec_for(ModelKind::ExtremalGaussian, 1, 1.6);
        let grid = GridSpec::line(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let reps = 10_000;
        let m = 7;
        let mut rescaled = Vec::with_capacity(reps);
        for _ in 0..reps {
            let mut peak = 0.0f64;
            for _ in 0..m {
                let path = simulate_max_stable(&spec, &grid, &mut rng).unwrap();
                peak = peak.max(path.values()[1]);
            }
            rescaled.push(peak / m as f64);
        }
        let ks = ks_statistic(&rescaled, |x| (-1.0 / x).exp());
        assert!(ks < ks_critical_value(reps, 0.01), "KS {ks}");
    }

    #[test]
    fn identical_seeds_reproduce_paths_bitwise() {
        let spec = spec_for(ModelKind::Smith, 1, 1.7);
        let grid = GridSpec::line(50).unwrap();
        let a = simulate_max_stable(&spec, &grid, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let b = simulate_max_stable(&spec, &grid, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        assert_eq!(a, b);
        let c = simulate_max_stable(&spec, &grid, &mut ChaCha8Rng::seed_from_u64(78)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn estimator_recovers_boundary_cases() {
        // Identical coordinates: excursion 0, coefficient 1.
        let grid = GridSpec::line(2).unwrap();
        let paths: Vec<Path> = (1..=200)
            .map(|i| {
                let v = i as f64 / 10.0;
                Path::new(grid.clone(), vec![v, v]).unwrap()
            })
            .collect();
        let est = empirical_extremal_coefficient(&paths, 1).unwrap();
        assert!((est.value - 1.0).abs() < 1e-12);

        // Independent unit Fréchet coordinates: coefficient 2.
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let marginal = crate::frechet::FrechetParams::unit();
        let paths: Vec<Path> = (0..20_000)
            .map(|_| Path::new(grid.clone(), marginal.sample_n(&mut rng, 2)).unwrap())
            .collect();
        let est = empirical_extremal_coefficient(&paths, 1).unwrap();
        assert!(
            (est.value - 2.0).abs() < 3.0 * est.std_error,
            "{} +- {}",
            est.value,
            est.std_error
        );

        assert!(empirical_extremal_coefficient(&paths, 0).is_err());
        assert!(empirical_extremal_coefficient(&paths[..1], 7).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// Every model produces strictly positive finite values, and replays
        /// are bitwise identical.
        #[test]
        fn draws_positive_finite_deterministic(
            kind_pick in 0u8..3,
            theta in 1.1..1.65f64,
            len in 2usize..8,
            seed in 0u64..1000,
        ) {
            let kind = match kind_pick {
                0 => ModelKind::BrownResnick,
                1 => ModelKind::Smith,
                _ => ModelKind::ExtremalGaussian,
            };
            let spec = spec_for(kind, 1, theta);
            let grid = GridSpec::line(len).unwrap();
            let path =
                simulate_max_stable(&spec, &grid, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert!(path.values().iter().all(|&v| v.is_finite() && v > 0.0));
            let replay =
                simulate_max_stable(&spec, &grid, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(path, replay);
        }
    }
}
