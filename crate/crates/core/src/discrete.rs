//! Flux-based total variation and PEACE on discrete grids.
//!
//! A cube-like is the set of `2^m` grid points obtained by choosing, on each
//! of the `m` non-degenerate axes, a pair of adjacent support points. Axes
//! with a single support point are held fixed and contribute no pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::continuous::{integration_boxes, Sign};
use crate::error::{PeaceError, Result};
use crate::expect::PMF_TOL;
use crate::gradient::{with_xz, Gradient};
use crate::model::{unflatten, ConditionalDensity, Degree, DiscreteGrid, DomainBox, StructuralModel, ZDistribution};
use crate::quad::{pairwise_sum, par_sum};
use crate::result::{Method, PeaceResult};

/// Upper limit on cubes for the φ oracle.
pub const MAX_ORACLE_CUBES: usize = 10_000;

/// Cube-like selected by the upper index `j_i >= 1` on every active axis
/// (degenerate axes carry index 0).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CubeLike {
    pub upper: Vec<usize>,
}

/// One face-like of a cube-like: the corners with `axis` fixed at its lower
/// or upper support point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaceLike {
    pub cube: CubeLike,
    pub axis: usize,
    pub upper: bool,
}

impl FaceLike {
    /// `(Π_k Δ_k) / Δ_axis` over the active axes.
    pub fn volume(&self, grid: &DiscreteGrid) -> Result<f64> {
        let layout = Layout::new(grid)?;
        check_cube(grid, &layout, &self.cube)?;
        Ok(layout.face_volume(grid, &self.cube.upper, self.axis))
    }

    /// Coordinates of the `2^{m-1}` corners of the face.
    pub fn corners(&self, grid: &DiscreteGrid) -> Result<Vec<Vec<f64>>> {
        let layout = Layout::new(grid)?;
        check_cube(grid, &layout, &self.cube)?;
        Ok(layout
            .pairs(&self.cube.upper, self.axis)
            .map(|(hi, lo)| layout.coords(grid, if self.upper { hi } else { lo }))
            .collect())
    }
}

/// Per-cube quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePeaceTerms {
    /// Mean difference across each active axis.
    pub dif: Vec<f64>,
    /// Face-like volume per active axis.
    pub vol: Vec<f64>,
    pub omega: f64,
    /// `omega * dif_i * vol_i`.
    pub pflux_axis: Vec<f64>,
    /// Euclidean norm of `pflux_axis`.
    pub pflux: f64,
}

struct Layout {
    shape: Vec<usize>,
    active: Vec<usize>,
    strides: Vec<usize>,
}

impl Layout {
    fn new(grid: &DiscreteGrid) -> Result<Self> {
        let shape = grid.shape();
        let active: Vec<usize> = (0..shape.len()).filter(|&a| shape[a] >= 2).collect();
        if active.is_empty() {
            return Err(PeaceError::InvalidModel(
                "every axis of the grid is degenerate (one support point)".into(),
            ));
        }
        let mut strides = vec![1; shape.len()];
        for a in (0..shape.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }
        Ok(Layout { shape, active, strides })
    }

    fn m(&self) -> usize {
        self.active.len()
    }

    fn cube_count(&self) -> usize {
        self.active.iter().map(|&a| self.shape[a] - 1).product()
    }

    /// Upper indices of cube `c` (enumerated with the last active axis fastest).
    fn cube(&self, mut c: usize) -> Vec<usize> {
        let mut upper = vec![0; self.shape.len()];
        for &a in self.active.iter().rev() {
            let n = self.shape[a] - 1;
            upper[a] = c % n + 1;
            c /= n;
        }
        upper
    }

    fn coords(&self, grid: &DiscreteGrid, flat: usize) -> Vec<f64> {
        let mut pt = vec![0.0; self.shape.len()];
        unflatten(flat, &self.shape, |a, i| pt[a] = grid.supports()[a][i]);
        pt
    }

    fn delta(&self, grid: &DiscreteGrid, upper: &[usize], a: usize) -> f64 {
        let s = &grid.supports()[a];
        s[upper[a]] - s[upper[a] - 1]
    }

    fn face_volume(&self, grid: &DiscreteGrid, upper: &[usize], axis: usize) -> f64 {
        self.active
            .iter()
            .filter(|&&a| a != axis)
            .map(|&a| self.delta(grid, upper, a))
            .product()
    }

    /// Flat indices of the corresponding corner pairs `(upper, lower)` across `axis`.
    fn pairs<'a>(&'a self, upper: &'a [usize], axis: usize) -> impl Iterator<Item = (usize, usize)> + 'a {
        let others: Vec<usize> = self.active.iter().copied().filter(|&a| a != axis).collect();
        let base: usize = upper
            .iter()
            .enumerate()
            .map(|(a, &u)| {
                if self.shape[a] >= 2 {
                    (u - 1) * self.strides[a]
                } else {
                    0
                }
            })
            .sum();
        (0..1usize << others.len()).map(move |bits| {
            let mut flat = base;
            for (b, &a) in others.iter().enumerate() {
                if bits >> b & 1 == 1 {
                    flat += self.strides[a];
                }
            }
            (flat + self.strides[axis], flat)
        })
    }
}

fn z_slot(grid: &DiscreteGrid, z: &[f64]) -> Result<usize> {
    grid.z_index(z)
        .ok_or_else(|| PeaceError::InvalidArgument(format!("z value {z:?} is not in the discrete table")))
}

fn terms_at(
    grid: &DiscreteGrid,
    layout: &Layout,
    zi: usize,
    upper: &[usize],
    d: Degree,
    unit_weight: bool,
) -> DiscretePeaceTerms {
    let g = grid.g_table(zi);
    let p = grid.pmf_table(zi);
    let m = layout.m();
    let half = (1usize << (m - 1)) as f64;
    let mut dif = Vec::with_capacity(m);
    let mut vol = Vec::with_capacity(m);
    let mut pair_products = 0.0;
    for &axis in &layout.active {
        let (mut sd, mut sp) = (0.0, 0.0);
        for (hi, lo) in layout.pairs(upper, axis) {
            sd += g[hi] - g[lo];
            if !unit_weight {
                sp += d.pmf_weight(p[hi]) * d.pmf_weight(p[lo]);
            }
        }
        dif.push(sd / half);
        vol.push(layout.face_volume(grid, upper, axis));
        pair_products += sp / half;
    }
    let omega = if unit_weight {
        1.0
    } else {
        d.four_pow() * pair_products / m as f64
    };
    let pflux_axis: Vec<f64> = dif.iter().zip(&vol).map(|(a, v)| omega * a * v).collect();
    let pflux = pflux_axis.iter().map(|x| x * x).sum::<f64>().sqrt();
    DiscretePeaceTerms {
        dif,
        vol,
        omega,
        pflux_axis,
        pflux,
    }
}

/// All cube-likes of the grid.
pub fn cube_likes(grid: &DiscreteGrid) -> Result<Vec<CubeLike>> {
    let layout = Layout::new(grid)?;
    Ok((0..layout.cube_count())
        .map(|c| CubeLike { upper: layout.cube(c) })
        .collect())
}

fn check_cube(grid: &DiscreteGrid, layout: &Layout, cube: &CubeLike) -> Result<()> {
    let ok = cube.upper.len() == grid.dim()
        && cube.upper.iter().enumerate().all(|(a, &u)| {
            if layout.shape[a] >= 2 {
                u >= 1 && u < layout.shape[a]
            } else {
                u == 0
            }
        });
    if ok {
        Ok(())
    } else {
        Err(PeaceError::InvalidArgument(format!(
            "cube indices {:?} are out of range",
            cube.upper
        )))
    }
}

/// Mean difference of g across the pair of face-likes orthogonal to `axis`.
pub fn dif(grid: &DiscreteGrid, cube: &CubeLike, axis: usize, z: &[f64]) -> Result<f64> {
    let layout = Layout::new(grid)?;
    check_cube(grid, &layout, cube)?;
    let pos = layout
        .active
        .iter()
        .position(|&a| a == axis)
        .ok_or_else(|| PeaceError::InvalidArgument(format!("axis {axis} is degenerate or out of range")))?;
    let t = terms_at(grid, &layout, z_slot(grid, z)?, &cube.upper, Degree::new(0.0)?, true);
    Ok(t.dif[pos])
}

/// The availability weight ω of a cube-like.
pub fn omega(grid: &DiscreteGrid, cube: &CubeLike, d: Degree, z: &[f64]) -> Result<f64> {
    let layout = Layout::new(grid)?;
    check_cube(grid, &layout, cube)?;
    Ok(terms_at(grid, &layout, z_slot(grid, z)?, &cube.upper, d, false).omega)
}

/// Per-cube terms of the flux construction, in [`cube_likes`] order.
pub fn cube_terms(grid: &DiscreteGrid, d: Degree, z: &[f64]) -> Result<Vec<DiscretePeaceTerms>> {
    let layout = Layout::new(grid)?;
    let zi = z_slot(grid, z)?;
    Ok((0..layout.cube_count())
        .map(|c| terms_at(grid, &layout, zi, &layout.cube(c), d, false))
        .collect())
}

fn flux_sum(grid: &DiscreteGrid, zi: usize, d: Degree, unit_weight: bool) -> Result<f64> {
    let layout = Layout::new(grid)?;
    par_sum(layout.cube_count(), |range, out| {
        for c in range {
            out.push(terms_at(grid, &layout, zi, &layout.cube(c), d, unit_weight).pflux);
        }
        Ok(())
    })
}

/// Discrete total variation `Σ_cubes sqrt(Σ_i (dif_i Vol_i)²)`.
pub fn flux_tv(grid: &DiscreteGrid, z: &[f64]) -> Result<f64> {
    flux_sum(grid, z_slot(grid, z)?, Degree::new(0.0)?, true)
}

fn require_2d(grid: &DiscreteGrid) -> Result<()> {
    if grid.dim() != 2 {
        return Err(PeaceError::Unsupported(format!(
            "image total variation needs a 2-D grid, got {} axes",
            grid.dim()
        )));
    }
    Ok(())
}

fn forward_differences(grid: &DiscreteGrid, z: &[f64]) -> Result<Vec<(f64, f64)>> {
    require_2d(grid)?;
    let g = grid.g_table(z_slot(grid, z)?);
    let (n1, n2) = (grid.shape()[0], grid.shape()[1]);
    let mut out = Vec::new();
    for k in 0..n1.saturating_sub(1) {
        for l in 0..n2.saturating_sub(1) {
            let at = |i: usize, j: usize| g[i * n2 + j];
            out.push((at(k + 1, l) - at(k, l), at(k, l + 1) - at(k, l)));
        }
    }
    Ok(out)
}

/// Isotropic image TV with unit-spacing forward differences at points that
/// have both forward neighbours.
pub fn tv_classic(grid: &DiscreteGrid, z: &[f64]) -> Result<f64> {
    let terms: Vec<f64> = forward_differences(grid, z)?
        .into_iter()
        .map(|(a, b)| (a * a + b * b).sqrt())
        .collect();
    Ok(pairwise_sum(&terms))
}

/// Anisotropic image TV, `Σ |∂₁g| + |∂₂g|`, same stencil as [`tv_classic`].
pub fn tv_ani(grid: &DiscreteGrid, z: &[f64]) -> Result<f64> {
    let terms: Vec<f64> = forward_differences(grid, z)?
        .into_iter()
        .map(|(a, b)| a.abs() + b.abs())
        .collect();
    Ok(pairwise_sum(&terms))
}

/// Expectation over the model's Z table (or the single table when unconditional).
fn over_discrete_z<F>(model: &StructuralModel, mut f: F) -> Result<(f64, Option<f64>)>
where
    F: FnMut(usize) -> Result<f64>,
{
    let grid = model.grid()?;
    if !model.is_conditional() {
        return Ok((f(0)?, None));
    }
    match &model.z_dist {
        ZDistribution::Discrete { values, probs } => {
            let total: f64 = probs.iter().sum();
            if (total - 1.0).abs() > PMF_TOL {
                return Err(PeaceError::NotNormalized { sum: total });
            }
            let mut acc = 0.0;
            for (z, p) in values.iter().zip(probs) {
                acc += p * f(z_slot(grid, z)?)?;
            }
            Ok((acc, None))
        }
        ZDistribution::Samples(s) => {
            if s.is_empty() {
                return Err(PeaceError::EmptySamples);
            }
            let vals = s.iter().map(|z| f(z_slot(grid, z)?)).collect::<Result<Vec<_>>>()?;
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = if vals.len() > 1 {
                vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            Ok((mean, Some((var / n).sqrt())))
        }
        _ => Err(PeaceError::Unsupported(
            "discrete models need a tabulated or sampled Z distribution".into(),
        )),
    }
}

/// Discrete PEACE: `Σ_cubes ω sqrt(Σ_i (dif_i Vol_i)²)` per z, then `E_Z`.
/// The `4^d` factor lives inside ω.
pub fn peace_discrete(model: &StructuralModel, d: Degree) -> Result<PeaceResult> {
    let grid = model.grid()?;
    let (value, stderr) = over_discrete_z(model, |zi| flux_sum(grid, zi, d, false))?;
    let mut r = PeaceResult::new(value, d, Method::Discrete);
    r.stderr = stderr;
    Ok(r)
}

/// `Σ_cubes Σ_i dif_i φ_i Vol_i` for per-cube vectors φ (one entry per active axis).
pub fn phi_peace(terms: &[DiscretePeaceTerms], phi: &[Vec<f64>]) -> f64 {
    let per: Vec<f64> = terms
        .iter()
        .zip(phi)
        .map(|(t, f)| t.dif.iter().zip(&t.vol).zip(f).map(|((a, v), p)| a * v * p).sum())
        .collect();
    pairwise_sum(&per)
}

/// The Cauchy-Schwarz optimum `φ = ω F / |F|` per cube.
pub fn aligned_phi(terms: &[DiscretePeaceTerms]) -> Vec<Vec<f64>> {
    terms
        .iter()
        .map(|t| {
            let f: Vec<f64> = t.dif.iter().zip(&t.vol).map(|(a, v)| a * v).collect();
            let n = f.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n == 0.0 {
                vec![0.0; f.len()]
            } else {
                f.iter().map(|x| t.omega * x / n).collect()
            }
        })
        .collect()
}

/// A random admissible field: per cube, uniform in the ball of radius ω.
pub fn random_phi(terms: &[DiscretePeaceTerms], rng: &mut impl Rng) -> Vec<Vec<f64>> {
    terms
        .iter()
        .map(|t| {
            let m = t.dif.len();
            let dir: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(rand_distr_normal())).collect();
            let n = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            let radius = t.omega * rng.gen::<f64>().powf(1.0 / m as f64);
            dir.iter().map(|x| radius * x / n).collect()
        })
        .collect()
}

// Standard normal via Box-Muller, without pulling in a distributions crate.
fn rand_distr_normal() -> impl rand::distributions::Distribution<f64> {
    struct Normal;
    impl rand::distributions::Distribution<f64> for Normal {
        fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
            let u1: f64 = 1.0 - rng.gen::<f64>();
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        }
    }
    Normal
}

/// Supremum of `PEACE^φ` over admissible per-cube fields, by `budget` random
/// starts plus the aligned start (which attains the closed form).
pub fn phi_oracle_discrete(model: &StructuralModel, d: Degree, budget: usize, seed: u64) -> Result<PeaceResult> {
    if budget == 0 {
        return Err(PeaceError::InvalidArgument("oracle budget must be positive".into()));
    }
    let grid = model.grid()?;
    let layout = Layout::new(grid)?;
    if layout.cube_count() > MAX_ORACLE_CUBES {
        return Err(PeaceError::InvalidArgument(format!(
            "grid has {} cube-likes; the oracle accepts at most {MAX_ORACLE_CUBES}",
            layout.cube_count()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (value, stderr) = over_discrete_z(model, |zi| {
        let terms: Vec<DiscretePeaceTerms> = (0..layout.cube_count())
            .map(|c| terms_at(grid, &layout, zi, &layout.cube(c), d, false))
            .collect();
        let mut best = phi_peace(&terms, &aligned_phi(&terms));
        for _ in 0..budget {
            best = best.max(phi_peace(&terms, &random_phi(&terms, &mut rng)));
        }
        Ok(best.max(0.0))
    })?;
    let mut r = PeaceResult::new(value, d, Method::DiscreteOracle);
    r.stderr = stderr;
    Ok(r)
}

/// Signed discrete effect for one-dimensional X: `Σ ω (dif)^±`, then `E_Z`.
pub fn signed_discrete(model: &StructuralModel, d: Degree, sign: Sign) -> Result<PeaceResult> {
    let grid = model.grid()?;
    if grid.dim() != 1 {
        return Err(PeaceError::Unsupported(
            "signed effects are defined for one-dimensional X only".into(),
        ));
    }
    let layout = Layout::new(grid)?;
    let (value, stderr) = over_discrete_z(model, |zi| {
        let parts: Vec<f64> = (0..layout.cube_count())
            .map(|c| {
                let t = terms_at(grid, &layout, zi, &layout.cube(c), d, false);
                t.omega * sign.part(t.dif[0])
            })
            .collect();
        Ok(pairwise_sum(&parts))
    })?;
    let mut r = PeaceResult::new(value, d, Method::Signed);
    r.stderr = stderr;
    Ok(r)
}

/// Uniform partition of a bounded box with `res` cells per axis.
fn partition(b: &DomainBox, res: usize) -> Vec<Vec<f64>> {
    b.intervals()
        .iter()
        .map(|iv| (0..=res).map(|k| iv.lo + iv.width() * k as f64 / res as f64).collect())
        .collect()
}

/// How differences are mapped before use; the identity in normal operation.
pub type DifMap = fn(f64) -> f64;

fn refine_at(
    model: &StructuralModel,
    grad: &Gradient,
    density: &ConditionalDensity,
    z: &[f64],
    res: usize,
    d: Degree,
    kind: RefineKind,
) -> Result<f64> {
    let g = model.g()?;
    let nx = model.nx();
    let w = |x: &[f64]| {
        with_xz(x, z, |xz| {
            let wt = d.weight(density.eval(xz, nx));
            if wt == 0.0 {
                0.0
            } else {
                grad.norm(xz) * wt
            }
        })
    };
    let boxes = integration_boxes(model, &w)?;
    let mut total = 0.0;
    for b in boxes.iter().flatten() {
        let nodes = partition(b, res);
        let cubes = res.pow(nx as u32);
        let h: Vec<f64> = b.intervals().iter().map(|iv| iv.width() / res as f64).collect();
        let half = (1usize << (nx - 1)) as f64;
        total += par_sum(cubes, |range, out| {
            let mut lower = vec![0; nx];
            let mut pt = vec![0.0; nx];
            for c in range {
                unflatten(c, &vec![res; nx], |a, i| lower[a] = i);
                for a in 0..nx {
                    pt[a] = nodes[a][lower[a]];
                }
                let weight = with_xz(&pt, z, |xz| d.weight(density.eval(xz, nx)));
                if weight == 0.0 {
                    out.push(0.0);
                    continue;
                }
                // g at the 2^n corners, bit a set = upper on axis a
                let corners: Vec<f64> = (0..1usize << nx)
                    .map(|bits| {
                        let mut q = pt.clone();
                        for a in 0..nx {
                            if bits >> a & 1 == 1 {
                                q[a] = nodes[a][lower[a] + 1];
                            }
                        }
                        with_xz(&q, z, |xz| g.eval(xz))
                    })
                    .collect();
                let vol_all: f64 = h.iter().product();
                let mut sq = 0.0;
                let mut signed = 0.0;
                for a in 0..nx {
                    let mut s = 0.0;
                    for (bits, v) in corners.iter().enumerate() {
                        if bits >> a & 1 == 1 {
                            s += v - corners[bits & !(1 << a)];
                        }
                    }
                    let dif = match kind {
                        RefineKind::Signed(_, map) => map(s / half),
                        RefineKind::Norm => s / half,
                    };
                    let flux = dif * vol_all / h[a];
                    sq += flux * flux;
                    signed = flux;
                }
                let term = match kind {
                    RefineKind::Norm => weight * sq.sqrt(),
                    RefineKind::Signed(sign, _) => weight * sign.part(signed),
                };
                if !term.is_finite() {
                    return Err(PeaceError::NonFinite { coords: pt.clone() });
                }
                out.push(term);
            }
            Ok(())
        })?;
    }
    Ok(total)
}

#[derive(Clone, Copy)]
enum RefineKind {
    Norm,
    Signed(Sign, DifMap),
}

fn refine(model: &StructuralModel, resolutions: &[usize], d: Degree, kind: RefineKind) -> Result<Vec<(usize, f64)>> {
    if let Some(&r) = resolutions.iter().find(|&&r| r < 2) {
        return Err(PeaceError::InvalidArgument(format!(
            "resolution {r} is below 2 cells per axis"
        )));
    }
    let density = model.continuous_density()?;
    let grad = Gradient::new(model.g()?, model.nx());
    let factor = model.normalizer_factor(d);
    resolutions
        .iter()
        .map(|&res| {
            let v = if model.is_conditional() {
                crate::expect::expect_over_z(
                    |z| Ok((refine_at(model, &grad, density, z, res, d, kind)?, 0.0)),
                    &model.z_dist,
                    &model.quad,
                    &model.trunc,
                    1.0,
                )?
                .value
            } else {
                refine_at(model, &grad, density, &[], res, d, kind)?
            };
            Ok((res, factor * v))
        })
        .collect()
}

/// Discrete PEACE of a continuous model sampled on uniform partitions with
/// `res` cells per axis, weighting each cube by `f^{2d}` at its lower corner.
pub fn grid_refine_peace(model: &StructuralModel, resolutions: &[usize], d: Degree) -> Result<Vec<(usize, f64)>> {
    refine(model, resolutions, d, RefineKind::Norm)
}

/// Signed counterpart of [`grid_refine_peace`] for one-dimensional X. `map`
/// is applied to every mean difference.
pub fn grid_refine_signed(
    model: &StructuralModel,
    resolutions: &[usize],
    d: Degree,
    sign: Sign,
    map: DifMap,
) -> Result<Vec<(usize, f64)>> {
    if model.nx() != 1 {
        return Err(PeaceError::Unsupported(
            "signed effects are defined for one-dimensional X only".into(),
        ));
    }
    refine(model, resolutions, d, RefineKind::Signed(sign, map))
}

/// Reads a discrete table from CSV with columns `x.., z.., pmf, g`.
pub fn grid_from_csv(path: impl AsRef<std::path::Path>, x_vars: &[&str], z_vars: &[&str]) -> Result<DiscreteGrid> {
    let table = crate::estimation::SampleTable::from_csv_path(path)?;
    let names: Vec<&str> = x_vars.iter().chain(z_vars).copied().chain(["pmf", "g"]).collect();
    let cols = names.iter().map(|n| table.column(n)).collect::<Result<Vec<_>>>()?;
    let rows: Vec<Vec<f64>> = (0..table.rows()).map(|r| cols.iter().map(|c| c[r]).collect()).collect();
    DiscreteGrid::from_rows(x_vars.len(), z_vars.len(), &rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(g: impl Fn(&[f64]) -> f64, pmf: f64) -> DiscreteGrid {
        DiscreteGrid::from_fn(vec![vec![0.0, 1.0], vec![0.0, 1.0]], |_| pmf, g).unwrap()
    }

    fn deg(d: f64) -> Degree {
        Degree::new(d).unwrap()
    }

    #[test]
    fn dif_on_unit_square() {
        let g = square(|p| p[0] + p[1], 0.25);
        let c = CubeLike { upper: vec![1, 1] };
        assert_eq!(dif(&g, &c, 0, &[]).unwrap(), 1.0);
        assert_eq!(dif(&g, &c, 1, &[]).unwrap(), 1.0);
        let one = DiscreteGrid::from_fn(vec![vec![0.0, 1.0]], |_| 0.5, |p| 3.0 + 2.0 * p[0]).unwrap();
        assert_eq!(dif(&one, &CubeLike { upper: vec![1] }, 0, &[]).unwrap(), 2.0);
        let flat = square(|_| 4.0, 0.25);
        assert_eq!(dif(&flat, &c, 0, &[]).unwrap(), 0.0);
    }

    #[test]
    fn flux_tv_examples() {
        let seq = DiscreteGrid::new(
            vec![vec![0.0, 1.0, 2.0]],
            vec![],
            vec![vec![1.0 / 3.0; 3]],
            vec![vec![0.0, 1.0, 0.0]],
        )
        .unwrap();
        assert_eq!(flux_tv(&seq, &[]).unwrap(), 2.0);
        assert!((flux_tv(&square(|p| p[0] + p[1], 0.25), &[]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(flux_tv(&square(|_| 1.0, 0.25), &[]).unwrap(), 0.0);
    }

    #[test]
    fn image_tv_baselines() {
        let s = vec![0.0, 1.0, 2.0];
        let g = DiscreteGrid::from_fn(vec![s.clone(), s.clone()], |_| 1.0 / 9.0, |p| p[0] + p[1]).unwrap();
        assert_eq!(tv_ani(&g, &[]).unwrap(), 8.0);
        assert!((tv_classic(&g, &[]).unwrap() - 4.0 * 2f64.sqrt()).abs() < 1e-14);
        let ramp = DiscreteGrid::from_fn(vec![s.clone(), s.clone()], |_| 1.0 / 9.0, |p| p[0]).unwrap();
        assert_eq!(tv_classic(&ramp, &[]).unwrap(), tv_ani(&ramp, &[]).unwrap());
        let flat = DiscreteGrid::from_fn(vec![s.clone(), s], |_| 1.0 / 9.0, |_| 2.0).unwrap();
        assert_eq!(tv_classic(&flat, &[]).unwrap(), 0.0);
        let line = DiscreteGrid::from_fn(vec![vec![0.0, 1.0]], |_| 0.5, |p| p[0]).unwrap();
        assert!(tv_ani(&line, &[]).is_err());
    }

    #[test]
    fn omega_examples() {
        let c = CubeLike { upper: vec![1, 1] };
        let g = square(|p| p[0], 0.25);
        for d in [0.0, 0.5, 1.0, 2.5] {
            let w = omega(&g, &c, deg(d), &[]).unwrap();
            assert!((w - 0.25f64.powf(d)).abs() < 1e-15, "d={d}");
        }
        let pair = DiscreteGrid::from_fn(vec![vec![0.0, 1.0]], |_| 0.5, |p| p[0]).unwrap();
        assert_eq!(omega(&pair, &CubeLike { upper: vec![1] }, deg(1.0), &[]).unwrap(), 1.0);
    }

    #[test]
    fn peace_on_unit_square() {
        let m = StructuralModel::discrete(&["x", "y"], square(|p| p[0] + p[1], 0.25)).unwrap();
        for d in [0.0, 0.5, 1.0] {
            let v = peace_discrete(&m, deg(d)).unwrap().value;
            assert!((v - 2f64.sqrt() * 0.25f64.powf(d)).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_axes_are_fixed_coordinates() {
        let g = DiscreteGrid::from_fn(vec![vec![0.0, 1.0, 3.0], vec![5.0]], |_| 1.0 / 3.0, |p| p[0] * p[1]).unwrap();
        assert_eq!(cube_likes(&g).unwrap().len(), 2);
        assert!((flux_tv(&g, &[]).unwrap() - 15.0).abs() < 1e-12);
        let all = DiscreteGrid::from_fn(vec![vec![1.0]], |_| 1.0, |_| 0.0).unwrap();
        assert!(flux_tv(&all, &[]).is_err());
    }

    #[test]
    fn aligned_phi_attains_closed_form() {
        let g = DiscreteGrid::from_fn(
            vec![vec![0.0, 0.5, 1.5], vec![0.0, 1.0, 2.0, 2.5]],
            |p| (1.0 + p[0] + p[1]) / 33.0,
            |p| (p[0] * 2.0).sin() + p[1] * p[1],
        )
        .unwrap();
        let d = deg(0.7);
        let terms = cube_terms(&g, d, &[]).unwrap();
        let closed: f64 = flux_sum(&g, 0, d, false).unwrap();
        assert!((phi_peace(&terms, &aligned_phi(&terms)) - closed).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            assert!(phi_peace(&terms, &random_phi(&terms, &mut rng)) <= closed + 1e-12);
        }
        let m = StructuralModel::discrete(&["x", "y"], g).unwrap();
        let o = phi_oracle_discrete(&m, d, 32, 42).unwrap().value;
        assert!((o - closed).abs() < 1e-12);
        assert!(phi_oracle_discrete(&m, d, 0, 42).is_err());
    }

    #[test]
    fn zero_pmf_gives_zero_oracle() {
        let g = DiscreteGrid::from_fn(
            vec![vec![0.0, 1.0, 2.0]],
            |p| if p[0] == 1.0 { 1.0 } else { 0.0 },
            |p| p[0],
        )
        .unwrap();
        let m = StructuralModel::discrete(&["x"], g).unwrap();
        assert_eq!(phi_oracle_discrete(&m, deg(1.0), 8, 1).unwrap().value, 0.0);
    }

    #[test]
    fn signed_discrete_parts_add_up() {
        let g = DiscreteGrid::new(
            vec![vec![0.0, 1.0, 2.0, 3.0]],
            vec![],
            vec![vec![0.1, 0.2, 0.3, 0.4]],
            vec![vec![0.0, 2.0, 1.0, 4.0]],
        )
        .unwrap();
        let m = StructuralModel::discrete(&["x"], g).unwrap();
        let d = deg(0.5);
        let p = signed_discrete(&m, d, Sign::Plus).unwrap().value;
        let n = signed_discrete(&m, d, Sign::Minus).unwrap().value;
        let t = peace_discrete(&m, d).unwrap().value;
        assert!((p + n - t).abs() < 1e-15);
    }

    #[test]
    fn refinement_of_plane_is_exact() {
        let m = StructuralModel::continuous(&["x", "y"], "x + y", "1", DomainBox::unit(2)).unwrap();
        for (_, v) in grid_refine_peace(&m, &[2, 3, 7, 16], deg(1.3)).unwrap() {
            assert!((v - 2f64.sqrt()).abs() < 1e-12, "{v}");
        }
        assert!(grid_refine_peace(&m, &[1], deg(1.0)).is_err());
    }

    #[test]
    fn refinement_converges_for_ramp_density() {
        let m = StructuralModel::continuous(&["x"], "x", "2*x", DomainBox::unit(1)).unwrap();
        let rows = grid_refine_peace(&m, &[64, 128, 256, 512, 1024], deg(1.0)).unwrap();
        let errs: Vec<f64> = rows.iter().map(|(_, v)| (v - 4.0 / 3.0).abs()).collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0]));
        assert!(errs[4] / (4.0 / 3.0) < 0.005);
    }
}
