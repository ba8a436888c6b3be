//! Composite tensor-product quadrature over boxes.
//!
//! Nodes are enumerated in a fixed order and split into fixed-size chunks;
//! each chunk is reduced by pairwise summation and the chunk sums are reduced
//! the same way, so the result does not depend on the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{PeaceError, Result};
use crate::model::DomainBox;

const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    #[default]
    GaussLegendre,
    Midpoint,
}

/// Resolution of a tensor-product rule: `points` nodes in each of `panels`
/// equal sub-intervals per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    pub points: usize,
    pub panels: usize,
    pub rule: Rule,
    pub budget: u64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            points: 16,
            panels: 8,
            rule: Rule::GaussLegendre,
            budget: 10_000_000,
        }
    }
}

/// Integral value together with the difference against a half-resolution rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub err: f64,
}

impl QuadratureSpec {
    pub fn new(points: usize, panels: usize) -> Self {
        QuadratureSpec {
            points,
            panels,
            ..Default::default()
        }
    }

    pub fn with_panels(self, panels: usize) -> Self {
        QuadratureSpec { panels, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(PeaceError::InvalidArgument(format!(
                "quadrature needs at least 2 points per panel, got {}",
                self.points
            )));
        }
        if self.panels < 1 {
            return Err(PeaceError::InvalidArgument(
                "quadrature needs at least one panel".into(),
            ));
        }
        if self.budget == 0 {
            return Err(PeaceError::InvalidArgument("quadrature budget must be positive".into()));
        }
        Ok(())
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.points * self.panels
    }

    /// Errors if `(points*panels)^dim` exceeds the node budget.
    pub fn check_budget(&self, dim: usize) -> Result<u128> {
        let per = self.nodes_per_axis() as u128;
        let mut total: u128 = 1;
        for _ in 0..dim {
            total = total.saturating_mul(per);
        }
        if total > self.budget as u128 {
            return Err(PeaceError::BudgetExceeded {
                nodes: total,
                budget: self.budget,
            });
        }
        Ok(total)
    }

    /// Nodes and weights of the composite rule on `[lo, hi]`.
    pub fn axis(&self, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
        let (ref_x, ref_w) = match self.rule {
            Rule::GaussLegendre => gauss_legendre(self.points),
            Rule::Midpoint => midpoint(self.points),
        };
        let width = (hi - lo) / self.panels as f64;
        let half = 0.5 * width;
        let mut xs = Vec::with_capacity(self.nodes_per_axis());
        let mut ws = Vec::with_capacity(self.nodes_per_axis());
        for p in 0..self.panels {
            let mid = lo + (p as f64 + 0.5) * width;
            for (x, w) in ref_x.iter().zip(&ref_w) {
                xs.push(mid + half * x);
                ws.push(half * w);
            }
        }
        (xs, ws)
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, by Newton iteration on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        xs[i] = -x;
        xs[n - 1 - i] = x;
        ws[i] = w;
        ws[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        xs[n / 2] = 0.0;
    }
    (xs, ws)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let dp = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

fn midpoint(n: usize) -> (Vec<f64>, Vec<f64>) {
    let h = 2.0 / n as f64;
    let xs = (0..n).map(|i| -1.0 + (i as f64 + 0.5) * h).collect();
    (xs, vec![h; n])
}

/// Pairwise (cascade) summation; deterministic for a fixed input order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Tensor grid of per-axis nodes and weights.
pub struct Grid {
    pub xs: Vec<Vec<f64>>,
    pub ws: Vec<Vec<f64>>,
}

impl Grid {
    pub fn new(bounds: &[(f64, f64)], spec: &QuadratureSpec) -> Self {
        let (xs, ws) = bounds.iter().map(|&(lo, hi)| spec.axis(lo, hi)).unzip();
        Grid { xs, ws }
    }

    pub fn from_axes(axes: Vec<(Vec<f64>, Vec<f64>)>) -> Self {
        let (xs, ws) = axes.into_iter().unzip();
        Grid { xs, ws }
    }

    pub fn len(&self) -> usize {
        self.xs.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the coordinates of node `k` into `pt` and returns its weight.
    /// The last axis varies fastest.
    #[inline]
    pub fn node(&self, mut k: usize, pt: &mut [f64]) -> f64 {
        let mut w = 1.0;
        for a in (0..self.xs.len()).rev() {
            let n = self.xs[a].len();
            let i = k % n;
            k /= n;
            pt[a] = self.xs[a][i];
            w *= self.ws[a][i];
        }
        w
    }

    /// Fallible weighted sum `Σ w_k f(x_k)`, evaluated in parallel.
    pub fn try_sum<F>(&self, f: F) -> Result<f64>
    where
        F: Fn(&[f64]) -> Result<f64> + Sync,
    {
        let dim = self.xs.len();
        par_sum(self.len(), |range, terms| {
            let mut pt = vec![0.0; dim];
            for k in range {
                let w = self.node(k, &mut pt);
                let v = f(&pt)?;
                if !v.is_finite() {
                    return Err(PeaceError::NonFinite { coords: pt });
                }
                terms.push(w * v);
            }
            Ok(())
        })
    }

    pub fn sum<F>(&self, f: F) -> Result<f64>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        self.try_sum(|x| Ok(f(x)))
    }
}

/// Deterministic parallel sum of `n` terms. `fill` pushes the terms of an
/// index range, in order; chunks are reduced pairwise.
pub fn par_sum<F>(n: usize, fill: F) -> Result<f64>
where
    F: Fn(std::ops::Range<usize>, &mut Vec<f64>) -> Result<()> + Sync,
{
    let nchunks = n.div_ceil(CHUNK);
    let run = |c: usize| -> Result<f64> {
        let start = c * CHUNK;
        let end = (start + CHUNK).min(n);
        let mut terms = Vec::with_capacity(end - start);
        fill(start..end, &mut terms)?;
        Ok(pairwise_sum(&terms))
    };
    let sums: Vec<Result<f64>> = if nchunks <= 1 {
        (0..nchunks).map(run).collect()
    } else {
        (0..nchunks).into_par_iter().map(run).collect()
    };
    let sums = sums.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok(pairwise_sum(&sums))
}

fn bounds_of(domain: &DomainBox) -> Result<Vec<(f64, f64)>> {
    if !domain.is_bounded() {
        return Err(PeaceError::InvalidDomain(format!(
            "cannot integrate over unbounded box {domain}"
        )));
    }
    Ok(domain.intervals().iter().map(|iv| (iv.lo, iv.hi)).collect())
}

/// Single-resolution integral (no error estimate).
pub fn try_integrate_fixed<F>(f: F, domain: &DomainBox, spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    spec.validate()?;
    let bounds = bounds_of(domain)?;
    spec.check_budget(bounds.len())?;
    Grid::new(&bounds, spec).try_sum(f)
}

pub fn integrate_fixed<F>(f: F, domain: &DomainBox, spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    try_integrate_fixed(|x| Ok(f(x)), domain, spec)
}

/// Integral at `spec.panels` panels; the error estimate is the difference
/// to the rule with half as many panels (or twice as many when there is one).
pub fn try_integrate_box<F>(f: F, domain: &DomainBox, spec: &QuadratureSpec) -> Result<Estimate>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let value = try_integrate_fixed(&f, domain, spec)?;
    let other = if spec.panels >= 2 { spec.panels / 2 } else { 2 };
    let coarse = QuadratureSpec {
        panels: other,
        budget: u64::MAX,
        ..*spec
    };
    let alt = try_integrate_fixed(&f, domain, &coarse)?;
    Ok(Estimate {
        value,
        err: (value - alt).abs(),
    })
}

/// Integrates `f` over a bounded box with a Richardson-style error estimate.
pub fn integrate_box<F>(f: F, domain: &DomainBox, spec: &QuadratureSpec) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    try_integrate_box(|x| Ok(f(x)), domain, spec)
}
