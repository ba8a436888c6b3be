//! Effects estimated from observational samples.
//!
//! The conditional density is a product-Gaussian KDE (joint over the
//! marginal of Z) and the conditional mean is a local-linear fit. Both use
//! Silverman bandwidths per column.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{PeaceError, Result};
use crate::model::{Degree, DomainBox};
use crate::quad::{pairwise_sum, Grid, QuadratureSpec};
use crate::result::{Method, PeaceResult};

/// Fewest rows accepted by any estimator.
pub const MIN_ROWS: usize = 30;

const SQRT_2PI: f64 = 2.506_628_274_631_000_2;

pub const ASSUMPTION_WARNING: &str =
    "identifiability assumptions (Z-separability, conditional independence of Y_x and X given Z) are not verified";
pub const LARGE_DEGREE_WARNING: &str = "d > 1 raises the estimated density to a high power with no bias correction";

/// Named numeric columns with optional x/z/y designations.
#[derive(Debug, Clone)]
pub struct SampleTable {
    names: Vec<String>,
    cols: Vec<Vec<f64>>,
    x: Vec<usize>,
    z: Vec<usize>,
    y: Option<usize>,
}

impl SampleTable {
    /// Columns must have equal length. Missing values are stored as NaN and
    /// rejected when the column is used.
    pub fn from_columns(names: Vec<String>, cols: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != cols.len() {
            return Err(PeaceError::InvalidArgument("one name per column is required".into()));
        }
        if let Some(first) = cols.first() {
            if cols.iter().any(|c| c.len() != first.len()) {
                return Err(PeaceError::InvalidArgument("columns have different lengths".into()));
            }
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(PeaceError::InvalidArgument(format!("duplicate column `{n}`")));
            }
        }
        Ok(SampleTable {
            names,
            cols,
            x: Vec::new(),
            z: Vec::new(),
            y: None,
        })
    }

    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if names.is_empty() {
            return Err(PeaceError::InvalidArgument("CSV has no header row".into()));
        }
        let mut cols = vec![Vec::new(); names.len()];
        for rec in rdr.records() {
            let rec = rec?;
            for (c, col) in cols.iter_mut().enumerate() {
                let v = rec.get(c).unwrap_or("");
                col.push(v.parse::<f64>().unwrap_or(f64::NAN));
            }
        }
        Self::from_columns(names, cols)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref()).map_err(|e| {
            PeaceError::Io(std::io::Error::new(
                e.kind(),
                format!("{}: {e}", path.as_ref().display()),
            ))
        })?;
        Self::from_csv_reader(file)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn rows(&self) -> usize {
        self.cols.first().map_or(0, Vec::len)
    }

    fn index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| PeaceError::InvalidArgument(format!("no column named `{name}`")))
    }

    /// The named column; fails on missing or non-numeric entries.
    pub fn column(&self, name: &str) -> Result<&[f64]> {
        let i = self.index(name)?;
        let col = &self.cols[i];
        if let Some(r) = col.iter().position(|v| !v.is_finite()) {
            return Err(PeaceError::InvalidArgument(format!(
                "column `{name}` has a missing or non-numeric value in data row {}",
                r + 1
            )));
        }
        Ok(col)
    }

    /// Copy with the given columns designated as X, Z and (optionally) Y.
    pub fn select<S: AsRef<str>>(&self, xs: &[S], zs: &[S], y: Option<&str>) -> Result<SampleTable> {
        if xs.is_empty() {
            return Err(PeaceError::InvalidArgument("at least one x column is required".into()));
        }
        let mut used = Vec::new();
        let mut pick = |n: &str| -> Result<usize> {
            let i = self.index(n)?;
            if used.contains(&i) {
                return Err(PeaceError::InvalidArgument(format!("column `{n}` is designated twice")));
            }
            self.column(n)?;
            used.push(i);
            Ok(i)
        };
        let x = xs.iter().map(|n| pick(n.as_ref())).collect::<Result<Vec<_>>>()?;
        let z = zs.iter().map(|n| pick(n.as_ref())).collect::<Result<Vec<_>>>()?;
        let y = y.map(&mut pick).transpose()?;
        Ok(SampleTable {
            x,
            z,
            y,
            ..self.clone()
        })
    }

    pub fn x_names(&self) -> Vec<&str> {
        self.x.iter().map(|&i| self.names[i].as_str()).collect()
    }

    pub fn z_names(&self) -> Vec<&str> {
        self.z.iter().map(|&i| self.names[i].as_str()).collect()
    }

    fn rows_of(&self, idx: &[usize]) -> Vec<Vec<f64>> {
        (0..self.rows())
            .map(|r| idx.iter().map(|&c| self.cols[c][r]).collect())
            .collect()
    }

    fn require_rows(&self) -> Result<()> {
        if self.rows() < MIN_ROWS {
            return Err(PeaceError::Estimation(format!(
                "{} rows available, at least {MIN_ROWS} are required",
                self.rows()
            )));
        }
        if self.x.is_empty() {
            return Err(PeaceError::Estimation("no x columns are designated".into()));
        }
        Ok(())
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = pairwise_sum(v) / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `1.06 σ̂ N^{-1/5}` for each column.
pub fn silverman_bandwidths(table: &SampleTable, cols: &[usize]) -> Result<Vec<f64>> {
    let n = table.rows() as f64;
    cols.iter()
        .map(|&c| {
            let (_, sd) = mean_sd(&table.cols[c]);
            if !(sd > 0.0) {
                return Err(PeaceError::Estimation(format!(
                    "column `{}` has zero variance; bandwidth is undefined",
                    table.names[c]
                )));
            }
            Ok(1.06 * sd * n.powf(-0.2))
        })
        .collect()
}

/// Product-Gaussian estimate of `f(x | z)`.
#[derive(Debug, Clone)]
pub struct EstimatedDensity {
    hx: Vec<f64>,
    hz: Vec<f64>,
    xs: Vec<Vec<f64>>,
    zs: Vec<Vec<f64>>,
    norm_x: f64,
}

/// `-½ Σ ((p - s) / h)²`.
#[inline]
fn log_kernel(p: &[f64], s: &[f64], h: &[f64]) -> f64 {
    let mut a = 0.0;
    for k in 0..p.len() {
        let u = (p[k] - s[k]) / h[k];
        a += u * u;
    }
    -0.5 * a
}

impl EstimatedDensity {
    pub fn x_dim(&self) -> usize {
        self.hx.len()
    }

    pub fn z_dim(&self) -> usize {
        self.hz.len()
    }

    pub fn bandwidths(&self) -> (&[f64], &[f64]) {
        (&self.hx, &self.hz)
    }

    pub fn sample_count(&self) -> usize {
        self.xs.len()
    }

    /// Conditional density at `x` given `z`; zero far away from every sample.
    pub fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        let n = self.xs.len();
        if self.hz.is_empty() {
            let s: f64 = self.xs.iter().map(|xi| log_kernel(x, xi, &self.hx).exp()).sum();
            return s / (n as f64 * self.norm_x);
        }
        // Z weights are shifted by their maximum so distant z does not underflow.
        let az: Vec<f64> = self.zs.iter().map(|zi| log_kernel(z, zi, &self.hz)).collect();
        let m = az.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut num, mut den) = (0.0, 0.0);
        for (i, a) in az.iter().enumerate() {
            let w = (a - m).exp();
            den += w;
            num += w * log_kernel(x, &self.xs[i], &self.hx).exp();
        }
        if den > 0.0 {
            num / (den * self.norm_x)
        } else {
            0.0
        }
    }
}

/// Fits `f(x | z)` from the designated X and Z columns.
pub fn fit_conditional_density(table: &SampleTable) -> Result<EstimatedDensity> {
    table.require_rows()?;
    let hx = silverman_bandwidths(table, &table.x)?;
    let hz = silverman_bandwidths(table, &table.z)?;
    let norm_x = hx.iter().map(|h| h * SQRT_2PI).product();
    Ok(EstimatedDensity {
        xs: table.rows_of(&table.x),
        zs: table.rows_of(&table.z),
        hx,
        hz,
        norm_x,
    })
}

/// Local-linear estimate of `E(Y | X, Z)` with Gaussian weights.
#[derive(Debug, Clone)]
pub struct EstimatedConditionalMean {
    h: Vec<f64>,
    us: Vec<Vec<f64>>,
    ys: Vec<f64>,
    nx: usize,
}

impl EstimatedConditionalMean {
    /// Bandwidths for the X columns followed by the Z columns.
    pub fn bandwidths(&self) -> &[f64] {
        &self.h
    }

    pub fn x_dim(&self) -> usize {
        self.nx
    }

    /// Intercept and slope vector of the local fit at `(x, z)`.
    pub fn local_fit(&self, x: &[f64], z: &[f64]) -> (f64, Vec<f64>) {
        let p = self.h.len();
        let mut u = Vec::with_capacity(p);
        u.extend_from_slice(x);
        u.extend_from_slice(z);
        let logs: Vec<f64> = self.us.iter().map(|ui| log_kernel(&u, ui, &self.h)).collect();
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut a = DMatrix::<f64>::zeros(p + 1, p + 1);
        let mut b = DVector::<f64>::zeros(p + 1);
        let mut row = vec![0.0; p + 1];
        let (mut sw, mut swy) = (0.0, 0.0);
        for (i, l) in logs.iter().enumerate() {
            let w = (l - m).exp();
            if w < 1e-300 {
                continue;
            }
            row[0] = 1.0;
            for k in 0..p {
                row[k + 1] = (self.us[i][k] - u[k]) / self.h[k];
            }
            for r in 0..=p {
                let wr = w * row[r];
                b[r] += wr * self.ys[i];
                for c in r..=p {
                    a[(r, c)] += wr * row[c];
                }
            }
            sw += w;
            swy += w * self.ys[i];
        }
        for r in 0..=p {
            for c in 0..r {
                a[(r, c)] = a[(c, r)];
            }
        }
        match a.cholesky() {
            Some(ch) => {
                let beta = ch.solve(&b);
                let slope = (0..p).map(|k| beta[k + 1] / self.h[k]).collect();
                (beta[0], slope)
            }
            // Too few neighbours for a line; fall back to the local average.
            None => (if sw > 0.0 { swy / sw } else { f64::NAN }, vec![0.0; p]),
        }
    }

    pub fn eval(&self, x: &[f64], z: &[f64]) -> f64 {
        self.local_fit(x, z).0
    }

    /// `∂Ê/∂x_i` by central differences with step `0.5 h_i`.
    pub fn partial_x(&self, i: usize, x: &[f64], z: &[f64]) -> f64 {
        let step = 0.5 * self.h[i];
        let mut p = x.to_vec();
        p[i] = x[i] + step;
        let up = self.eval(&p, z);
        p[i] = x[i] - step;
        let dn = self.eval(&p, z);
        (up - dn) / (2.0 * step)
    }

    pub fn grad_norm(&self, x: &[f64], z: &[f64]) -> f64 {
        (0..self.nx)
            .map(|i| self.partial_x(i, x, z).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Fits `E(Y | X, Z)`; the table needs a designated y column.
pub fn fit_conditional_mean(table: &SampleTable) -> Result<EstimatedConditionalMean> {
    table.require_rows()?;
    let yi = table
        .y
        .ok_or_else(|| PeaceError::Estimation("no y column is designated".into()))?;
    let cols: Vec<usize> = table.x.iter().chain(&table.z).copied().collect();
    Ok(EstimatedConditionalMean {
        h: silverman_bandwidths(table, &cols)?,
        us: table.rows_of(&cols),
        ys: table.cols[yi].clone(),
        nx: table.x.len(),
    })
}

/// Linear-interpolated empirical quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Options for the data-driven estimators.
#[derive(Debug, Clone)]
pub struct DataOptions {
    /// Rows drawn (without replacement) for the expectation over Z.
    pub z_subsample: usize,
    pub seed: u64,
    /// Quadrature over the x-range; by default 16 points × 4 panels per axis
    /// for one X and 8 × 2 otherwise.
    pub quad: Option<QuadratureSpec>,
}

impl Default for DataOptions {
    fn default() -> Self {
        DataOptions {
            z_subsample: 64,
            seed: 42,
            quad: None,
        }
    }
}

/// Conditional density and mean fitted on the same table.
#[derive(Debug, Clone)]
pub struct FittedData {
    pub density: EstimatedDensity,
    pub mean: EstimatedConditionalMean,
    xs: Vec<Vec<f64>>,
    zs: Vec<Vec<f64>>,
}

/// Quadrature nodes for one z with the quantities every degree reuses.
#[derive(Debug, Clone)]
pub struct NodeCache {
    pub domain: DomainBox,
    /// `(weight, |∇Ê|, f̂)` per node.
    pub nodes: Vec<(f64, f64, f64)>,
}

impl NodeCache {
    /// `∫ |∇Ê| f̂^{2d} dx` (no `4^d`).
    pub fn piev(&self, d: Degree) -> f64 {
        let terms: Vec<f64> = self.nodes.iter().map(|&(w, g, f)| w * g * d.weight(f)).collect();
        pairwise_sum(&terms)
    }

    /// Average of `|∇Ê|` over the x-range, weighting by the quadrature only.
    pub fn mean_abs_gradient(&self) -> f64 {
        let wg: Vec<f64> = self.nodes.iter().map(|n| n.0 * n.1).collect();
        let w: Vec<f64> = self.nodes.iter().map(|n| n.0).collect();
        pairwise_sum(&wg) / pairwise_sum(&w)
    }
}

impl FittedData {
    /// Needs designated x, y and (possibly empty) z columns.
    pub fn fit(table: &SampleTable) -> Result<Self> {
        let density = fit_conditional_density(table)?;
        let mean = fit_conditional_mean(table)?;
        Ok(FittedData {
            density,
            mean,
            xs: table.rows_of(&table.x),
            zs: table.rows_of(&table.z),
        })
    }

    pub fn z_samples(&self) -> &[Vec<f64>] {
        &self.zs
    }

    /// Empirical 0.5–99.5 percentile box of X among rows with Z within one
    /// bandwidth of `z`; all rows if that stratum is smaller than the minimum.
    pub fn x_range(&self, z: &[f64]) -> Result<DomainBox> {
        let (_, hz) = self.density.bandwidths();
        let near: Vec<usize> = (0..self.xs.len())
            .filter(|&r| {
                self.zs[r]
                    .iter()
                    .zip(z)
                    .zip(hz)
                    .all(|((zi, z0), h)| (zi - z0).abs() <= *h)
            })
            .collect();
        let rows: Vec<usize> = if near.len() >= MIN_ROWS {
            near
        } else {
            (0..self.xs.len()).collect()
        };
        let bounds = (0..self.density.x_dim())
            .map(|a| {
                let mut v: Vec<f64> = rows.iter().map(|&r| self.xs[r][a]).collect();
                v.sort_by(f64::total_cmp);
                let (lo, hi) = (quantile(&v, 0.005), quantile(&v, 0.995));
                if hi > lo {
                    Ok((lo, hi))
                } else {
                    Err(PeaceError::Estimation(format!(
                        "x column {a} has no spread near z = {z:?}"
                    )))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        DomainBox::from_bounds(&bounds)
    }

    pub fn nodes(&self, z: &[f64], quad: &QuadratureSpec) -> Result<NodeCache> {
        if z.len() != self.density.z_dim() {
            return Err(PeaceError::InvalidArgument(format!(
                "z has {} coordinates, the data has {} z columns",
                z.len(),
                self.density.z_dim()
            )));
        }
        let domain = self.x_range(z)?;
        quad.validate()?;
        quad.check_budget(domain.dim())?;
        let bounds: Vec<(f64, f64)> = domain.intervals().iter().map(|iv| (iv.lo, iv.hi)).collect();
        let grid = Grid::new(&bounds, quad);
        let mut pt = vec![0.0; bounds.len()];
        let mut nodes = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let w = grid.node(k, &mut pt);
            nodes.push((w, self.mean.grad_norm(&pt, z), self.density.eval(&pt, z)));
        }
        Ok(NodeCache { domain, nodes })
    }
}

fn default_quad(nx: usize) -> QuadratureSpec {
    if nx == 1 {
        QuadratureSpec::new(16, 4)
    } else {
        QuadratureSpec::new(8, 2)
    }
}

fn warnings(d: Degree) -> Vec<String> {
    let mut w = vec![ASSUMPTION_WARNING.to_string()];
    if d.value() > 1.0 {
        w.push(LARGE_DEGREE_WARNING.to_string());
    }
    w
}

/// `∫ |∂Ê(Y|X,Z)/∂X (x, z)| f̂(x|z)^{2d} dx` over the empirical x-range.
pub fn identifiable_piev(table: &SampleTable, z: &[f64], d: Degree) -> Result<PeaceResult> {
    let fitted = FittedData::fit(table)?;
    let cache = fitted.nodes(z, &default_quad(table.x.len()))?;
    let mut r = PeaceResult::new(cache.piev(d), d, Method::DataDriven).with_domain(vec![cache.domain.clone()]);
    r.warnings = warnings(d);
    Ok(r)
}

/// Data-driven PEACE together with diagnostics.
#[derive(Debug, Clone)]
pub struct DataPeace {
    pub result: PeaceResult,
    /// Mean over the Z subsample of the average `|∇Ê|` on the x-range.
    pub mean_abs_gradient: f64,
}

fn z_points(fitted: &FittedData, opts: &DataOptions) -> Result<Vec<Vec<f64>>> {
    if fitted.density.z_dim() == 0 {
        return Ok(vec![Vec::new()]);
    }
    if opts.z_subsample == 0 {
        return Err(PeaceError::InvalidArgument("z subsample size must be positive".into()));
    }
    let n = fitted.zs.len();
    if n <= opts.z_subsample {
        return Ok(fitted.zs.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut idx = rand::seq::index::sample(&mut rng, n, opts.z_subsample).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| fitted.zs[i].clone()).collect())
}

/// `4^d · E_Z[identifiable PIEV]` for each degree, sharing the fit and the
/// quadrature nodes across degrees.
pub fn peace_from_data_sweep(table: &SampleTable, degrees: &[Degree], opts: &DataOptions) -> Result<Vec<DataPeace>> {
    let fitted = FittedData::fit(table)?;
    let quad = opts.quad.unwrap_or_else(|| default_quad(table.x.len()));
    let zs = z_points(&fitted, opts)?;
    let caches = zs
        .par_iter()
        .map(|z| fitted.nodes(z, &quad))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let n = caches.len() as f64;
    let grads: Vec<f64> = caches.iter().map(NodeCache::mean_abs_gradient).collect();
    let mean_abs_gradient = pairwise_sum(&grads) / n;
    Ok(degrees
        .iter()
        .map(|&d| {
            let vals: Vec<f64> = caches.iter().map(|c| d.four_pow() * c.piev(d)).collect();
            let mean = pairwise_sum(&vals) / n;
            let stderr = if vals.len() > 1 {
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
                Some((var / n).sqrt())
            } else {
                None
            };
            let mut result = PeaceResult::new(mean, d, Method::DataDriven);
            result.stderr = stderr;
            result.warnings = warnings(d);
            if caches.len() == 1 {
                result.domain = vec![caches[0].domain.clone()];
            }
            DataPeace {
                result,
                mean_abs_gradient,
            }
        })
        .collect())
}

pub fn peace_from_data(table: &SampleTable, d: Degree, opts: &DataOptions) -> Result<DataPeace> {
    Ok(peace_from_data_sweep(table, &[d], opts)?.remove(0))
}
