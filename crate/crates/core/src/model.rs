//! Structural causal models: variables, structural function, domain and
//! density description, plus JSON loading.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};
use serde_json::Value;

use crate::error::{PeaceError, Result};
use crate::estimation::{fit_conditional_density, EstimatedDensity, SampleTable};
use crate::expr::Expr;
use crate::quad::{QuadratureSpec, Rule};
use crate::truncate::TruncationPolicy;

/// Degree `d >= 0` of the probability weight.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Degree(f64);

impl Degree {
    pub fn new(d: f64) -> Result<Self> {
        if d.is_finite() && d >= 0.0 {
            Ok(Degree(d))
        } else {
            Err(PeaceError::InvalidDegree(d))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `f^{2d}`, with `0^0 := 1` so that degree zero weighs every point by one.
    #[inline]
    pub fn weight(self, f: f64) -> f64 {
        if self.0 == 0.0 {
            1.0
        } else {
            crate::expr::pow(f.max(0.0), 2.0 * self.0)
        }
    }

    /// `p^d` for probability masses, same convention.
    #[inline]
    pub fn pmf_weight(self, p: f64) -> f64 {
        if self.0 == 0.0 {
            1.0
        } else {
            crate::expr::pow(p.max(0.0), self.0)
        }
    }

    /// The `4^d` normalizer.
    pub fn four_pow(self) -> f64 {
        4f64.powf(self.0)
    }
}

impl fmt::Display for Degree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Closed interval `[lo, hi]`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo >= hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
            return Err(PeaceError::InvalidDomain(format!("interval [{lo}, {hi}] is empty")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn real_line() -> Self {
        Interval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

fn bound_value(x: f64) -> Value {
    if x == f64::INFINITY {
        Value::from("inf")
    } else if x == f64::NEG_INFINITY {
        Value::from("-inf")
    } else {
        Value::from(x)
    }
}

impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(2))?;
        seq.serialize_element(&bound_value(self.lo))?;
        seq.serialize_element(&bound_value(self.hi))?;
        seq.end()
    }
}

/// Axis-aligned box, one interval per dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct DomainBox {
    intervals: Vec<Interval>,
}

impl DomainBox {
    pub fn new(intervals: Vec<Interval>) -> Result<Self> {
        for iv in &intervals {
            Interval::new(iv.lo, iv.hi)?;
        }
        Ok(DomainBox { intervals })
    }

    pub fn from_bounds(bounds: &[(f64, f64)]) -> Result<Self> {
        DomainBox::new(
            bounds
                .iter()
                .map(|&(lo, hi)| Interval::new(lo, hi))
                .collect::<Result<_>>()?,
        )
    }

    pub fn unit(dim: usize) -> Self {
        DomainBox {
            intervals: vec![Interval { lo: 0.0, hi: 1.0 }; dim],
        }
    }

    pub fn real_space(dim: usize) -> Self {
        DomainBox {
            intervals: vec![Interval::real_line(); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn is_bounded(&self) -> bool {
        self.intervals.iter().all(Interval::is_bounded)
    }

    pub fn volume(&self) -> f64 {
        self.intervals.iter().map(Interval::width).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.intervals.iter().zip(x).all(|(iv, &v)| iv.contains(v))
    }

    /// Intersection, or `None` if it has empty interior.
    pub fn intersect(&self, other: &DomainBox) -> Option<DomainBox> {
        let ivs = self
            .intervals
            .iter()
            .zip(&other.intervals)
            .map(|(a, b)| Interval::new(a.lo.max(b.lo), a.hi.min(b.hi)).ok())
            .collect::<Option<Vec<_>>>()?;
        Some(DomainBox { intervals: ivs })
    }

    /// True if the interiors of the two boxes overlap.
    pub fn overlaps(&self, other: &DomainBox) -> bool {
        self.intersect(other).is_some()
    }
}

impl fmt::Display for DomainBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, iv) in self.intervals.iter().enumerate() {
            if i > 0 {
                f.write_str(" x ")?;
            }
            write!(f, "[{}, {}]", iv.lo, iv.hi)?;
        }
        Ok(())
    }
}

/// f(x | z): an expression over `x_vars ++ z_vars`, or a fitted estimator.
#[derive(Debug, Clone)]
pub enum ConditionalDensity {
    Expr(Expr),
    Estimated(Arc<EstimatedDensity>),
}

impl ConditionalDensity {
    /// `xz` holds the x coordinates followed by the z coordinates.
    #[inline]
    pub fn eval(&self, xz: &[f64], nx: usize) -> f64 {
        match self {
            ConditionalDensity::Expr(e) => e.eval(xz),
            ConditionalDensity::Estimated(k) => k.eval(&xz[..nx], &xz[nx..]),
        }
    }

    pub fn depends_on_z(&self, nx: usize) -> bool {
        match self {
            ConditionalDensity::Expr(e) => (nx..e.vars().len()).any(|i| e.depends_on(i)),
            ConditionalDensity::Estimated(k) => k.z_dim() > 0,
        }
    }
}

/// Support points, PMF and g tables of a discrete model.
///
/// Tables are indexed `[z][flat]`, where `flat` enumerates the Cartesian
/// product of the supports with the last axis varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteGrid {
    supports: Vec<Vec<f64>>,
    z_values: Vec<Vec<f64>>,
    pmf: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
}

impl DiscreteGrid {
    pub fn new(supports: Vec<Vec<f64>>, z_values: Vec<Vec<f64>>, pmf: Vec<Vec<f64>>, g: Vec<Vec<f64>>) -> Result<Self> {
        if supports.is_empty() {
            return Err(PeaceError::InvalidModel("discrete grid has no axes".into()));
        }
        for (i, s) in supports.iter().enumerate() {
            if s.is_empty() {
                return Err(PeaceError::InvalidModel(format!("axis {i} has an empty support")));
            }
            if s.windows(2).any(|w| !(w[0] < w[1])) || s.iter().any(|v| !v.is_finite()) {
                return Err(PeaceError::InvalidModel(format!(
                    "support of axis {i} is not strictly increasing"
                )));
            }
        }
        let z_values = if z_values.is_empty() { vec![vec![]] } else { z_values };
        let len: usize = supports.iter().map(Vec::len).product();
        if pmf.len() != z_values.len() || g.len() != z_values.len() {
            return Err(PeaceError::InvalidModel(
                "one pmf and g table per z value required".into(),
            ));
        }
        for (p, gz) in pmf.iter().zip(&g) {
            if p.len() != len || gz.len() != len {
                return Err(PeaceError::InvalidModel(format!(
                    "table size mismatch: expected {len} grid points"
                )));
            }
            if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(PeaceError::InvalidModel(format!("pmf entry {bad} outside [0, 1]")));
            }
            if gz.iter().any(|v| !v.is_finite()) {
                return Err(PeaceError::InvalidModel("g table has non-finite entries".into()));
            }
        }
        Ok(DiscreteGrid {
            supports,
            z_values,
            pmf,
            g,
        })
    }

    /// Unconditional grid from closures over grid coordinates.
    pub fn from_fn(supports: Vec<Vec<f64>>, pmf: impl Fn(&[f64]) -> f64, g: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let shape: Vec<usize> = supports.iter().map(Vec::len).collect();
        let len: usize = shape.iter().product();
        let mut pt = vec![0.0; supports.len()];
        let (mut p, mut gv) = (Vec::with_capacity(len), Vec::with_capacity(len));
        for k in 0..len {
            unflatten(k, &shape, |a, i| pt[a] = supports[a][i]);
            p.push(pmf(&pt));
            gv.push(g(&pt));
        }
        DiscreteGrid::new(supports, vec![], vec![p], vec![gv])
    }

    /// Builds a grid from rows `x_1..x_n, z_1..z_m, pmf, g`. Every z value
    /// must carry the full Cartesian product of the x supports.
    pub fn from_rows(nx: usize, nz: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let width = nx + nz + 2;
        if nx == 0 {
            return Err(PeaceError::InvalidModel(
                "discrete grid needs at least one x column".into(),
            ));
        }
        if rows.is_empty() {
            return Err(PeaceError::InvalidModel("discrete table has no rows".into()));
        }
        let mut supports: Vec<Vec<f64>> = vec![Vec::new(); nx];
        let mut zs: Vec<Vec<f64>> = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(PeaceError::InvalidModel(format!(
                    "row {r} has {} columns, expected {width}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(PeaceError::InvalidModel(format!("row {r} has a non-finite value")));
            }
            for (a, s) in supports.iter_mut().enumerate() {
                s.push(row[a]);
            }
            zs.push(row[nx..nx + nz].to_vec());
        }
        for s in &mut supports {
            s.sort_by(f64::total_cmp);
            s.dedup();
        }
        zs.sort_by(|a, b| cmp_slices(a, b));
        zs.dedup();
        let shape: Vec<usize> = supports.iter().map(Vec::len).collect();
        let len: usize = shape.iter().product();
        let mut pmf = vec![vec![f64::NAN; len]; zs.len()];
        let mut g = vec![vec![f64::NAN; len]; zs.len()];
        for (r, row) in rows.iter().enumerate() {
            let zi = zs
                .binary_search_by(|z| cmp_slices(z, &row[nx..nx + nz]))
                .expect("z value collected above");
            let mut flat = 0;
            for a in 0..nx {
                let i = supports[a]
                    .binary_search_by(|v| v.total_cmp(&row[a]))
                    .expect("support value");
                flat = flat * shape[a] + i;
            }
            if !pmf[zi][flat].is_nan() {
                return Err(PeaceError::InvalidModel(format!("row {r} duplicates a grid point")));
            }
            pmf[zi][flat] = row[width - 2];
            g[zi][flat] = row[width - 1];
        }
        if pmf.iter().flatten().any(|v| v.is_nan()) {
            return Err(PeaceError::InvalidModel(
                "discrete table is not a full Cartesian product of the supports".into(),
            ));
        }
        DiscreteGrid::new(supports, zs, pmf, g)
    }

    pub fn dim(&self) -> usize {
        self.supports.len()
    }

    pub fn supports(&self) -> &[Vec<f64>] {
        &self.supports
    }

    pub fn shape(&self) -> Vec<usize> {
        self.supports.iter().map(Vec::len).collect()
    }

    pub fn len(&self) -> usize {
        self.supports.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn z_values(&self) -> &[Vec<f64>] {
        &self.z_values
    }

    pub fn z_index(&self, z: &[f64]) -> Option<usize> {
        self.z_values.iter().position(|v| cmp_slices(v, z).is_eq())
    }

    pub fn pmf_table(&self, zi: usize) -> &[f64] {
        &self.pmf[zi]
    }

    pub fn g_table(&self, zi: usize) -> &[f64] {
        &self.g[zi]
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.supports).fold(0, |acc, (&i, s)| acc * s.len() + i)
    }

    /// Grid with axes reordered so that new axis `k` is old axis `perm[k]`.
    pub fn permute_axes(&self, perm: &[usize]) -> Result<Self> {
        let n = self.dim();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(PeaceError::InvalidArgument("not a permutation of the grid axes".into()));
        }
        let supports: Vec<Vec<f64>> = perm.iter().map(|&p| self.supports[p].clone()).collect();
        let new_shape: Vec<usize> = supports.iter().map(Vec::len).collect();
        let len = self.len();
        let mut old_idx = vec![0; n];
        let mut map = vec![0; len];
        for (k, slot) in map.iter_mut().enumerate() {
            unflatten(k, &new_shape, |a, i| old_idx[perm[a]] = i);
            *slot = self.flat_index(&old_idx);
        }
        let remap = |t: &Vec<f64>| map.iter().map(|&o| t[o]).collect::<Vec<_>>();
        DiscreteGrid::new(
            supports,
            self.z_values.clone(),
            self.pmf.iter().map(remap).collect(),
            self.g.iter().map(remap).collect(),
        )
    }
}

fn cmp_slices(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        let c = x.total_cmp(y);
        if c.is_ne() {
            return c;
        }
    }
    a.len().cmp(&b.len())
}

/// Calls `set(axis, index)` for each axis of flat index `k` (last axis fastest).
#[inline]
pub(crate) fn unflatten(mut k: usize, shape: &[usize], mut set: impl FnMut(usize, usize)) {
    for a in (0..shape.len()).rev() {
        set(a, k % shape[a]);
        k /= shape[a];
    }
}

/// How the outer expectation over Z is taken.
#[derive(Debug, Clone)]
pub enum ZDistribution {
    /// No conditioning variables.
    None,
    /// Density over `z_vars` on a (possibly unbounded) box.
    Density { density: Expr, domain: DomainBox },
    /// Finite table of z values and probabilities.
    Discrete { values: Vec<Vec<f64>>, probs: Vec<f64> },
    /// Explicit samples; the expectation is their mean.
    Samples(Vec<Vec<f64>>),
}

#[derive(Debug, Clone)]
pub enum DensitySpec {
    Continuous(ConditionalDensity),
    Discrete(DiscreteGrid),
}

/// Whether the conditional PEACE carries the `4^d` factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalizer {
    /// `4^d` for conditional models, none for unconditional ones.
    #[default]
    Auto,
    None,
    FourPowD,
}

impl Normalizer {
    pub fn factor(self, d: Degree, conditional: bool) -> f64 {
        match self {
            Normalizer::Auto if conditional => d.four_pow(),
            Normalizer::FourPowD => d.four_pow(),
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StructuralModel {
    pub name: Option<String>,
    pub x_vars: Vec<String>,
    pub z_vars: Vec<String>,
    /// Structural function over `x_vars ++ z_vars`. Optional for discrete
    /// models whose table already carries g.
    pub g_in: Option<Expr>,
    /// Disjoint boxes whose union is the x domain.
    pub x_domain: Vec<DomainBox>,
    pub density: DensitySpec,
    pub z_dist: ZDistribution,
    pub quad: QuadratureSpec,
    pub trunc: TruncationPolicy,
    pub normalizer: Normalizer,
}

impl StructuralModel {
    /// Unconditional continuous model from expression sources.
    pub fn continuous(x_vars: &[&str], g_in: &str, density: &str, domain: DomainBox) -> Result<Self> {
        let vars: Vec<String> = x_vars.iter().map(|s| s.to_string()).collect();
        let g = Expr::parse(g_in, &vars)?;
        let f = Expr::parse(density, &vars)?;
        let m = StructuralModel {
            name: None,
            x_vars: vars,
            z_vars: vec![],
            g_in: Some(g),
            x_domain: vec![domain],
            density: DensitySpec::Continuous(ConditionalDensity::Expr(f)),
            z_dist: ZDistribution::None,
            quad: QuadratureSpec::default(),
            trunc: TruncationPolicy::default(),
            normalizer: Normalizer::Auto,
        };
        m.check()?;
        Ok(m)
    }

    /// Unconditional discrete model.
    pub fn discrete(x_vars: &[&str], grid: DiscreteGrid) -> Result<Self> {
        let m = StructuralModel {
            name: None,
            x_vars: x_vars.iter().map(|s| s.to_string()).collect(),
            z_vars: vec![],
            g_in: None,
            x_domain: vec![],
            density: DensitySpec::Discrete(grid),
            z_dist: ZDistribution::None,
            quad: QuadratureSpec::default(),
            trunc: TruncationPolicy::default(),
            normalizer: Normalizer::Auto,
        };
        m.check()?;
        Ok(m)
    }

    pub fn nx(&self) -> usize {
        self.x_vars.len()
    }

    pub fn nz(&self) -> usize {
        self.z_vars.len()
    }

    pub fn is_conditional(&self) -> bool {
        !self.z_vars.is_empty()
    }

    pub fn all_vars(&self) -> Vec<String> {
        self.x_vars.iter().chain(&self.z_vars).cloned().collect()
    }

    pub fn g(&self) -> Result<&Expr> {
        self.g_in
            .as_ref()
            .ok_or_else(|| PeaceError::InvalidModel("model has no g_in expression".into()))
    }

    pub fn continuous_density(&self) -> Result<&ConditionalDensity> {
        match &self.density {
            DensitySpec::Continuous(c) => Ok(c),
            DensitySpec::Discrete(_) => Err(PeaceError::Unsupported(
                "operation requires a continuous density".into(),
            )),
        }
    }

    pub fn grid(&self) -> Result<&DiscreteGrid> {
        match &self.density {
            DensitySpec::Discrete(g) => Ok(g),
            DensitySpec::Continuous(_) => Err(PeaceError::Unsupported("operation requires a discrete model".into())),
        }
    }

    pub fn normalizer_factor(&self, d: Degree) -> f64 {
        self.normalizer.factor(d, self.is_conditional())
    }

    /// Structural consistency checks (not numeric validation).
    pub fn check(&self) -> Result<()> {
        if self.x_vars.is_empty() {
            return Err(PeaceError::InvalidModel("x_vars must not be empty".into()));
        }
        let mut all = self.all_vars();
        all.sort();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(PeaceError::InvalidModel("variable names must be distinct".into()));
        }
        let expected = self.all_vars();
        if let Some(g) = &self.g_in {
            if g.vars() != expected.as_slice() {
                return Err(PeaceError::InvalidModel(
                    "g_in is not declared over x_vars ++ z_vars".into(),
                ));
            }
        }
        match &self.density {
            DensitySpec::Continuous(c) => {
                if self.g_in.is_none() {
                    return Err(PeaceError::InvalidModel("continuous model requires g_in".into()));
                }
                if let ConditionalDensity::Expr(e) = c {
                    if e.vars() != expected.as_slice() {
                        return Err(PeaceError::InvalidModel(
                            "density is not declared over x_vars ++ z_vars".into(),
                        ));
                    }
                }
                if self.x_domain.is_empty() {
                    return Err(PeaceError::InvalidModel("continuous model needs an x domain".into()));
                }
                for (i, b) in self.x_domain.iter().enumerate() {
                    if b.dim() != self.nx() {
                        return Err(PeaceError::InvalidModel(format!(
                            "domain box {i} has dimension {}, expected {}",
                            b.dim(),
                            self.nx()
                        )));
                    }
                    for b2 in &self.x_domain[i + 1..] {
                        if b.overlaps(b2) {
                            return Err(PeaceError::InvalidDomain(format!("domain boxes {b} and {b2} overlap")));
                        }
                    }
                }
            }
            DensitySpec::Discrete(grid) => {
                if grid.dim() != self.nx() {
                    return Err(PeaceError::InvalidModel(format!(
                        "discrete grid has {} axes, expected {}",
                        grid.dim(),
                        self.nx()
                    )));
                }
                if grid.z_values().iter().any(|z| z.len() != self.nz()) {
                    return Err(PeaceError::InvalidModel(
                        "discrete z values have the wrong width".into(),
                    ));
                }
            }
        }
        match (&self.z_dist, self.is_conditional()) {
            (ZDistribution::None, true) => {
                return Err(PeaceError::InvalidModel("conditional model requires z_dist".into()))
            }
            (ZDistribution::None, false) => {}
            (_, false) => return Err(PeaceError::InvalidModel("z_dist given but z_vars is empty".into())),
            (ZDistribution::Density { density, domain }, true) => {
                if density.vars() != self.z_vars.as_slice() || domain.dim() != self.nz() {
                    return Err(PeaceError::InvalidModel(
                        "z density must be declared over z_vars".into(),
                    ));
                }
            }
            (ZDistribution::Discrete { values, probs }, true) => {
                if values.len() != probs.len() || values.is_empty() {
                    return Err(PeaceError::InvalidModel("z table values/probs length mismatch".into()));
                }
                if values.iter().any(|v| v.len() != self.nz()) {
                    return Err(PeaceError::InvalidModel("z table values have the wrong width".into()));
                }
                if let DensitySpec::Discrete(grid) = &self.density {
                    if let Some(v) = values.iter().find(|v| grid.z_index(v).is_none()) {
                        return Err(PeaceError::InvalidModel(format!(
                            "z value {v:?} has no rows in the discrete table"
                        )));
                    }
                }
            }
            (ZDistribution::Samples(s), true) => {
                if s.iter().any(|v| v.len() != self.nz()) {
                    return Err(PeaceError::InvalidModel("z samples have the wrong width".into()));
                }
            }
        }
        self.quad.validate()?;
        self.trunc.validate()?;
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json_str(&text, &base)
    }

    /// Parses a model document; relative file references resolve against `base`.
    pub fn from_json_str(text: &str, base: &Path) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        Self::from_json_value(&v, base)
    }

    pub fn from_json_value(v: &Value, base: &Path) -> Result<Self> {
        let obj = v
            .as_object()
            .ok_or_else(|| PeaceError::InvalidModel("model must be a JSON object".into()))?;
        let x_vars = string_list(obj.get("x_vars"), "x_vars")?;
        let z_vars = match obj.get("z_vars") {
            Some(z) => string_list(Some(z), "z_vars")?,
            None => vec![],
        };
        let all: Vec<String> = x_vars.iter().chain(&z_vars).cloned().collect();
        let g_in = match obj.get("g_in") {
            Some(Value::String(s)) => Some(Expr::parse(s, &all)?),
            Some(_) => return Err(PeaceError::InvalidModel("g_in must be a string".into())),
            None => None,
        };
        let domain_map = |value: &Value| -> Result<BTreeMap<String, Interval>> {
            let m = value
                .as_object()
                .ok_or_else(|| PeaceError::InvalidModel("domain entries must be objects".into()))?;
            m.iter().map(|(k, v)| Ok((k.clone(), parse_interval(v, k)?))).collect()
        };
        let domain_maps: Vec<BTreeMap<String, Interval>> = match obj.get("domain") {
            None => vec![BTreeMap::new()],
            Some(Value::Array(list)) => list.iter().map(domain_map).collect::<Result<_>>()?,
            Some(other) => vec![domain_map(other)?],
        };
        for m in &domain_maps {
            if let Some(k) = m.keys().find(|k| !all.contains(k)) {
                return Err(PeaceError::InvalidModel(format!(
                    "domain names undeclared variable `{k}`"
                )));
            }
        }
        let box_over = |names: &[String], m: &BTreeMap<String, Interval>| {
            DomainBox::new(
                names
                    .iter()
                    .map(|n| m.get(n).copied().unwrap_or_else(Interval::real_line))
                    .collect(),
            )
        };
        let x_domain = domain_maps
            .iter()
            .map(|m| box_over(&x_vars, m))
            .collect::<Result<Vec<_>>>()?;
        let z_domain = box_over(&z_vars, &domain_maps[0])?;

        let density = if let Some(disc) = obj.get("discrete") {
            let rows = table_rows(disc, base, &x_vars, &z_vars)?;
            DensitySpec::Discrete(DiscreteGrid::from_rows(x_vars.len(), z_vars.len(), &rows)?)
        } else {
            match obj.get("density") {
                Some(Value::String(s)) if s == "estimated" => {
                    let data = obj
                        .get("data")
                        .ok_or_else(|| PeaceError::InvalidModel("estimated density requires a `data` entry".into()))?;
                    let path = data
                        .as_str()
                        .or_else(|| data.get("csv").and_then(Value::as_str))
                        .ok_or_else(|| PeaceError::InvalidModel("`data` must name a CSV file".into()))?;
                    let table = SampleTable::from_csv_path(resolve(base, path))?;
                    let xs: Vec<&str> = x_vars.iter().map(String::as_str).collect();
                    let zs: Vec<&str> = z_vars.iter().map(String::as_str).collect();
                    let fitted = fit_conditional_density(&table.select(&xs, &zs, None)?)?;
                    DensitySpec::Continuous(ConditionalDensity::Estimated(Arc::new(fitted)))
                }
                Some(Value::String(s)) => DensitySpec::Continuous(ConditionalDensity::Expr(Expr::parse(s, &all)?)),
                _ => {
                    return Err(PeaceError::InvalidModel(
                        "model needs a `density` string or a `discrete` table".into(),
                    ))
                }
            }
        };
        if let DensitySpec::Discrete(_) = density {
            if domain_maps.len() > 1 {
                return Err(PeaceError::InvalidModel("discrete models take no domain union".into()));
            }
        }
        let x_domain = match density {
            DensitySpec::Discrete(_) => vec![],
            _ => x_domain,
        };

        let z_dist = match obj.get("z_dist") {
            None | Some(Value::Null) => ZDistribution::None,
            Some(Value::String(s)) => ZDistribution::Density {
                density: Expr::parse(s, &z_vars)?,
                domain: z_domain,
            },
            Some(Value::Object(m)) if m.contains_key("values") => {
                let values = number_rows(&m["values"], z_vars.len(), "z_dist.values")?;
                let probs = m
                    .get("probs")
                    .and_then(Value::as_array)
                    .ok_or_else(|| PeaceError::InvalidModel("z_dist.probs missing".into()))?
                    .iter()
                    .map(|p| {
                        p.as_f64()
                            .ok_or_else(|| PeaceError::InvalidModel("probs must be numbers".into()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                ZDistribution::Discrete { values, probs }
            }
            Some(Value::Object(m)) if m.contains_key("samples") => match &m["samples"] {
                Value::String(p) => {
                    let table = SampleTable::from_csv_path(resolve(base, p))?;
                    let cols = z_vars.iter().map(|n| table.column(n)).collect::<Result<Vec<_>>>()?;
                    let rows = (0..table.rows()).map(|r| cols.iter().map(|c| c[r]).collect()).collect();
                    ZDistribution::Samples(rows)
                }
                other => ZDistribution::Samples(number_rows(other, z_vars.len(), "z_dist.samples")?),
            },
            Some(_) => return Err(PeaceError::InvalidModel("unrecognised z_dist".into())),
        };

        let mut quad = QuadratureSpec::default();
        if let Some(q) = obj.get("quad") {
            if let Some(p) = q.get("points").and_then(Value::as_u64) {
                quad.points = p as usize;
            }
            if let Some(p) = q.get("panels").and_then(Value::as_u64) {
                quad.panels = p as usize;
            }
            if let Some(b) = q.get("budget").and_then(Value::as_f64) {
                quad.budget = b as u64;
            }
            if let Some(r) = q.get("rule").and_then(Value::as_str) {
                quad.rule = match r {
                    "gauss-legendre" => Rule::GaussLegendre,
                    "midpoint" => Rule::Midpoint,
                    other => return Err(PeaceError::InvalidModel(format!("unknown quadrature rule `{other}`"))),
                };
            }
        }
        let mut trunc = TruncationPolicy::default();
        if let Some(eps) = obj.get("trunc").and_then(|t| t.get("eps")).and_then(Value::as_f64) {
            trunc.eps = eps;
        }
        let normalizer = match obj.get("normalizer").and_then(Value::as_str) {
            None | Some("auto") => Normalizer::Auto,
            Some("none") => Normalizer::None,
            Some("four-pow-d") => Normalizer::FourPowD,
            Some(other) => return Err(PeaceError::InvalidModel(format!("unknown normalizer `{other}`"))),
        };
        let model = StructuralModel {
            name: obj.get("name").and_then(Value::as_str).map(str::to_string),
            x_vars,
            z_vars,
            g_in,
            x_domain,
            density,
            z_dist,
            quad,
            trunc,
            normalizer,
        };
        model.check()?;
        Ok(model)
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn string_list(v: Option<&Value>, key: &str) -> Result<Vec<String>> {
    let arr = v
        .and_then(Value::as_array)
        .ok_or_else(|| PeaceError::InvalidModel(format!("`{key}` must be a list of names")))?;
    arr.iter()
        .map(|s| {
            s.as_str()
                .map(str::to_string)
                .ok_or_else(|| PeaceError::InvalidModel(format!("`{key}` entries must be strings")))
        })
        .collect()
}

fn parse_bound(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => match s.trim() {
            "inf" | "+inf" | "infinity" => Some(f64::INFINITY),
            "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
            other => other.parse().ok(),
        },
        _ => None,
    }
}

fn parse_interval(v: &Value, name: &str) -> Result<Interval> {
    let bad = || PeaceError::InvalidDomain(format!("domain of `{name}` must be [lo, hi]"));
    let arr = v.as_array().filter(|a| a.len() == 2).ok_or_else(bad)?;
    let lo = parse_bound(&arr[0]).ok_or_else(bad)?;
    let hi = parse_bound(&arr[1]).ok_or_else(bad)?;
    Interval::new(lo, hi).map_err(|_| PeaceError::InvalidDomain(format!("domain of `{name}` is empty: [{lo}, {hi}]")))
}

fn number_rows(v: &Value, width: usize, key: &str) -> Result<Vec<Vec<f64>>> {
    let bad = || PeaceError::InvalidModel(format!("`{key}` must be a list of numbers or number lists"));
    let arr = v.as_array().ok_or_else(bad)?;
    arr.iter()
        .map(|row| match row {
            Value::Number(n) if width == 1 => Ok(vec![n.as_f64().ok_or_else(bad)?]),
            Value::Array(cells) if cells.len() == width => cells.iter().map(|c| c.as_f64().ok_or_else(bad)).collect(),
            _ => Err(bad()),
        })
        .collect()
}

fn table_rows(disc: &Value, base: &Path, x_vars: &[String], z_vars: &[String]) -> Result<Vec<Vec<f64>>> {
    let width = x_vars.len() + z_vars.len() + 2;
    if let Some(rows) = disc.get("rows") {
        return number_rows(rows, width, "discrete.rows");
    }
    let path = disc
        .get("csv")
        .and_then(Value::as_str)
        .ok_or_else(|| PeaceError::InvalidModel("`discrete` needs `rows` or `csv`".into()))?;
    let table = SampleTable::from_csv_path(resolve(base, path))?;
    let names: Vec<&str> = x_vars
        .iter()
        .chain(z_vars)
        .map(String::as_str)
        .chain(["pmf", "g"])
        .collect();
    let cols = names.iter().map(|n| table.column(n)).collect::<Result<Vec<_>>>()?;
    Ok((0..table.rows()).map(|r| cols.iter().map(|c| c[r]).collect()).collect())
}
