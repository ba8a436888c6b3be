//! Continuous effects through the gradient integral
//! `∫ |∂g/∂x (x, z)| f(x | z)^{2d} dx`.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{PeaceError, Result};
use crate::expect::{expect_over_z, z_weight_mass, PMF_TOL};
use crate::expr::{BinOp, Expr, Node};
use crate::gradient::{with_xz, Gradient};
use crate::model::{
    ConditionalDensity, Degree, DensitySpec, DomainBox, Interval, Normalizer, StructuralModel, ZDistribution,
};
use crate::quad::{integrate_box, Grid};
use crate::result::{Method, PeaceResult};
use crate::truncate::truncate_weight;

/// Which half of a signed decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    #[inline]
    pub fn part(self, r: f64) -> f64 {
        match self {
            Sign::Plus => r.max(0.0),
            Sign::Minus => (-r).max(0.0),
        }
    }
}

fn check_z(model: &StructuralModel, z: &[f64]) -> Result<()> {
    if z.len() != model.nz() {
        return Err(PeaceError::InvalidArgument(format!(
            "expected {} conditioning values, got {}",
            model.nz(),
            z.len()
        )));
    }
    Ok(())
}

/// Bounded boxes covering the x domain for the given integrand; `None`
/// marks a box on which the integrand vanishes everywhere probed.
pub(crate) fn integration_boxes<W>(model: &StructuralModel, w: &W) -> Result<Vec<Option<DomainBox>>>
where
    W: Fn(&[f64]) -> f64 + Sync,
{
    model
        .x_domain
        .iter()
        .map(|b| {
            if b.is_bounded() {
                Ok(Some(b.clone()))
            } else {
                truncate_weight(w, b, &model.trunc)
            }
        })
        .collect()
}

fn integrate_boxes<F>(model: &StructuralModel, boxes: &[Option<DomainBox>], f: F) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let (mut value, mut err) = (0.0, 0.0);
    for b in boxes.iter().flatten() {
        let e = integrate_box(&f, b, &model.quad)?;
        value += e.value;
        err += e.err;
    }
    Ok((value, err))
}

fn reported(model: &StructuralModel, boxes: &[Option<DomainBox>]) -> Vec<DomainBox> {
    boxes
        .iter()
        .zip(&model.x_domain)
        .map(|(b, decl)| b.clone().unwrap_or_else(|| decl.clone()))
        .collect()
}

struct Parts<'a> {
    model: &'a StructuralModel,
    grad: Gradient,
    density: &'a ConditionalDensity,
}

impl<'a> Parts<'a> {
    fn new(model: &'a StructuralModel) -> Result<Self> {
        let density = model.continuous_density()?;
        Ok(Parts {
            model,
            grad: Gradient::new(model.g()?, model.nx()),
            density,
        })
    }

    fn depends_on_z(&self) -> bool {
        self.grad.depends_on_z() || self.density.depends_on_z(self.model.nx())
    }

    /// `|∇g| f^{2d}` at x; the gradient is skipped where the weight is zero.
    fn integrand<'s>(&'s self, z: &'s [f64], d: Degree) -> impl Fn(&[f64]) -> f64 + Sync + 's {
        let nx = self.model.nx();
        move |x: &[f64]| {
            with_xz(x, z, |xz| {
                let w = d.weight(self.density.eval(xz, nx));
                if w == 0.0 {
                    0.0
                } else {
                    self.grad.norm(xz) * w
                }
            })
        }
    }

    fn piev(&self, z: &[f64], d: Degree) -> Result<(f64, f64, Vec<DomainBox>)> {
        let w = self.integrand(z, d);
        let boxes = integration_boxes(self.model, &w)?;
        let (value, err) = integrate_boxes(self.model, &boxes, &w)?;
        Ok((value, err, reported(self.model, &boxes)))
    }

    fn signed(&self, z: &[f64], d: Degree, sign: Sign) -> Result<(f64, f64, Vec<DomainBox>)> {
        let w = self.integrand(z, d);
        let boxes = integration_boxes(self.model, &w)?;
        let nx = self.model.nx();
        let part = |x: &[f64]| {
            with_xz(x, z, |xz| {
                let wt = d.weight(self.density.eval(xz, nx));
                if wt == 0.0 {
                    0.0
                } else {
                    sign.part(self.grad.partial(0, xz)) * wt
                }
            })
        };
        let (value, err) = integrate_boxes(self.model, &boxes, part)?;
        Ok((value, err, reported(self.model, &boxes)))
    }
}

/// A point of the Z support, used when the inner quantity does not depend on z.
pub(crate) fn representative_z(model: &StructuralModel) -> Vec<f64> {
    match &model.z_dist {
        ZDistribution::Density { domain, .. } => domain.intervals().iter().map(|iv| 0f64.clamp(iv.lo, iv.hi)).collect(),
        ZDistribution::Discrete { values, .. } => values.first().cloned().unwrap_or_default(),
        ZDistribution::Samples(s) => s.first().cloned().unwrap_or_default(),
        ZDistribution::None => vec![],
    }
}

/// Checks the Z distribution is usable as a probability distribution.
fn check_z_dist(model: &StructuralModel) -> Result<()> {
    match &model.z_dist {
        ZDistribution::Discrete { probs, .. } => {
            let total: f64 = probs.iter().sum();
            if probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (total - 1.0).abs() > PMF_TOL {
                return Err(PeaceError::NotNormalized { sum: total });
            }
        }
        ZDistribution::Samples(s) if s.is_empty() => return Err(PeaceError::EmptySamples),
        _ => {}
    }
    Ok(())
}

/// `PIEV_d^z`: the gradient integral at a fixed conditioning value.
pub fn piev(model: &StructuralModel, z: &[f64], d: Degree) -> Result<PeaceResult> {
    check_z(model, z)?;
    let parts = Parts::new(model)?;
    let (value, err, domain) = parts.piev(z, d)?;
    Ok(PeaceResult::new(value, d, Method::ClosedIntegral)
        .with_err(err)
        .with_domain(domain))
}

fn normalized(model: &StructuralModel) -> bool {
    match model.normalizer {
        Normalizer::Auto => model.is_conditional(),
        Normalizer::FourPowD => true,
        Normalizer::None => false,
    }
}

/// Value, error estimate, stderr and (for z-free models) the integrated boxes.
type OverZ = (f64, f64, Option<f64>, Option<Vec<DomainBox>>);

/// Expectation over Z of an inner per-z quantity, with a shortcut when the
/// quantity cannot depend on z.
fn over_z<F>(model: &StructuralModel, z_free: bool, r: f64, inner: F) -> Result<OverZ>
where
    F: Fn(&[f64]) -> Result<(f64, f64, Vec<DomainBox>)> + Sync,
{
    if z_free {
        check_z_dist(model)?;
        let (v, e, dom) = inner(&representative_z(model))?;
        let mass = if r == 1.0 {
            1.0
        } else {
            z_weight_mass(&model.z_dist, &model.quad, &model.trunc, r)?
        };
        let stderr = matches!(model.z_dist, ZDistribution::Samples(_)).then_some(0.0);
        return Ok((v * mass, e * mass, stderr, Some(dom)));
    }
    let e = expect_over_z(
        |z| inner(z).map(|(v, e, _)| (v, e)),
        &model.z_dist,
        &model.quad,
        &model.trunc,
        r,
    )?;
    Ok((e.value, e.err, e.stderr, None))
}

/// PEACE of degree d. Conditional models take `4^d E_Z[PIEV]`; unconditional
/// models return the plain gradient integral (the model's `normalizer` can
/// override either choice). Discrete models are dispatched to the flux engine.
pub fn peace(model: &StructuralModel, d: Degree) -> Result<PeaceResult> {
    if let DensitySpec::Discrete(_) = model.density {
        return crate::discrete::peace_discrete(model, d);
    }
    let parts = Parts::new(model)?;
    let factor = model.normalizer_factor(d);
    let method = if normalized(model) {
        Method::ClosedIntegralNormalized
    } else {
        Method::ClosedIntegral
    };
    if !model.is_conditional() {
        let (v, e, dom) = parts.piev(&[], d)?;
        return Ok(PeaceResult::new(factor * v, d, method)
            .with_err(factor * e)
            .with_domain(dom));
    }
    let (v, e, stderr, dom) = over_z(model, !parts.depends_on_z(), 1.0, |z| parts.piev(z, d))?;
    let mut res = PeaceResult::new(factor * v, d, method)
        .with_err(factor * e)
        .with_domain(dom.unwrap_or_else(|| model.x_domain.clone()));
    res.stderr = stderr.map(|s| factor * s);
    Ok(res)
}

/// `∫ PIEV_d^z f_Z(z)^r dz` (or `Σ PIEV P(z)^r`); no `4^d` factor.
pub fn peace_r(model: &StructuralModel, d: Degree, r: f64) -> Result<PeaceResult> {
    let parts = Parts::new(model)?;
    if !model.is_conditional() {
        let (v, e, dom) = parts.piev(&[], d)?;
        return Ok(PeaceResult::new(v, d, Method::WeightedExpectation)
            .with_err(e)
            .with_domain(dom));
    }
    let (v, e, stderr, dom) = over_z(model, !parts.depends_on_z(), r, |z| parts.piev(z, d))?;
    let mut res = PeaceResult::new(v, d, Method::WeightedExpectation)
        .with_err(e)
        .with_domain(dom.unwrap_or_else(|| model.x_domain.clone()));
    res.stderr = stderr;
    Ok(res)
}

fn require_1d(model: &StructuralModel) -> Result<()> {
    if model.nx() != 1 {
        return Err(PeaceError::Unsupported(format!(
            "signed effects are defined for one-dimensional X only (got {} causes)",
            model.nx()
        )));
    }
    Ok(())
}

/// `∫ (∂g/∂x)^± f^{2d} dx` for one-dimensional X. Both signs integrate over
/// the same truncated box as [`piev`], so they add up to it.
pub fn signed_piev(model: &StructuralModel, z: &[f64], d: Degree, sign: Sign) -> Result<PeaceResult> {
    require_1d(model)?;
    check_z(model, z)?;
    let parts = Parts::new(model)?;
    let (value, err, domain) = parts.signed(z, d, sign)?;
    Ok(PeaceResult::new(value, d, Method::Signed)
        .with_err(err)
        .with_domain(domain))
}

/// Normalized expectation over Z of [`signed_piev`].
pub fn signed_peace(model: &StructuralModel, d: Degree, sign: Sign) -> Result<PeaceResult> {
    require_1d(model)?;
    let parts = Parts::new(model)?;
    let factor = model.normalizer_factor(d);
    let method = if normalized(model) {
        Method::SignedNormalized
    } else {
        Method::Signed
    };
    if !model.is_conditional() {
        let (v, e, dom) = parts.signed(&[], d, sign)?;
        return Ok(PeaceResult::new(factor * v, d, method)
            .with_err(factor * e)
            .with_domain(dom));
    }
    let (v, e, stderr, dom) = over_z(model, !parts.depends_on_z(), 1.0, |z| parts.signed(z, d, sign))?;
    let mut res = PeaceResult::new(factor * v, d, method)
        .with_err(factor * e)
        .with_domain(dom.unwrap_or_else(|| model.x_domain.clone()));
    res.stderr = stderr.map(|s| factor * s);
    Ok(res)
}

fn check_matrix(model: &StructuralModel, a: &DMatrix<f64>, shift: &[f64]) -> Result<f64> {
    let n = model.nx();
    if a.nrows() != n || a.ncols() != n || shift.len() != n {
        return Err(PeaceError::InvalidArgument(format!(
            "affine map must be {n}x{n} with a length-{n} shift"
        )));
    }
    let det = a.determinant();
    if !(det.abs() > 1e-12) {
        return Err(PeaceError::Singular { det: det.abs() });
    }
    Ok(det)
}

/// PIEV of `W` where `X = A W + a`, evaluated as an integral over the X domain:
/// `∫ |Aᵀ∇g(x)| (|det A| f(x))^{2d} / |det A| dx`.
pub fn change_of_variables(
    model: &StructuralModel,
    a: &DMatrix<f64>,
    shift: &[f64],
    d: Degree,
    z: &[f64],
) -> Result<PeaceResult> {
    check_z(model, z)?;
    let det = check_matrix(model, a, shift)?.abs();
    let parts = Parts::new(model)?;
    let nx = model.nx();
    let at = a.transpose();
    let w = |x: &[f64]| {
        with_xz(x, z, |xz| {
            let wt = d.weight(det * parts.density.eval(xz, nx));
            if wt == 0.0 {
                return 0.0;
            }
            let mut norm2 = 0.0;
            for i in 0..nx {
                let mut s = 0.0;
                for j in 0..nx {
                    let c = at[(i, j)];
                    if c != 0.0 {
                        s += c * parts.grad.partial(j, xz);
                    }
                }
                norm2 += s * s;
            }
            norm2.sqrt() * wt / det
        })
    };
    let boxes = integration_boxes(model, &w)?;
    let (value, err) = integrate_boxes(model, &boxes, w)?;
    Ok(PeaceResult::new(value, d, Method::ChangeOfVariables)
        .with_err(err)
        .with_domain(reported(model, &boxes)))
}

/// The same causal model expressed in `W = A⁻¹(X − a)`: `g̃(w) = g(Aw + a)`,
/// `f̃(w) = |det A| f(Aw + a)`. Bounded boxes map exactly only when `A` is a
/// scaled permutation; otherwise the x domain must be all of ℝⁿ.
pub fn transform_model(model: &StructuralModel, a: &DMatrix<f64>, shift: &[f64]) -> Result<StructuralModel> {
    let det = check_matrix(model, a, shift)?.abs();
    let nx = model.nx();
    let density = match model.continuous_density()? {
        ConditionalDensity::Expr(e) => e,
        ConditionalDensity::Estimated(_) => {
            return Err(PeaceError::Unsupported("cannot transform an estimated density".into()))
        }
    };
    let vars: Arc<Vec<String>> = Arc::new(model.all_vars());
    let mut repl: Vec<Node> = (0..nx)
        .map(|i| {
            let mut acc: Option<Node> = None;
            for j in 0..nx {
                let c = a[(i, j)];
                if c == 0.0 {
                    continue;
                }
                let term = if c == 1.0 {
                    Node::Var(j)
                } else {
                    Node::binary(BinOp::Mul, Node::Const(c), Node::Var(j))
                };
                acc = Some(match acc {
                    None => term,
                    Some(prev) => Node::binary(BinOp::Add, prev, term),
                });
            }
            let lin = acc.unwrap_or(Node::Const(0.0));
            if shift[i] == 0.0 {
                lin
            } else {
                Node::binary(BinOp::Add, lin, Node::Const(shift[i]))
            }
        })
        .collect();
    repl.extend((nx..vars.len()).map(Node::Var));
    let g = model.g()?.substitute(&repl, vars.clone());
    let f = density.substitute(&repl, vars.clone());
    let f = Expr::new(Node::binary(BinOp::Mul, Node::Const(det), f.root().clone()), vars);

    let scaled_perm = (0..nx).all(|i| (0..nx).filter(|&j| a[(i, j)] != 0.0).count() == 1);
    let x_domain = model
        .x_domain
        .iter()
        .map(|b| {
            if b.intervals().iter().all(|iv| !iv.lo.is_finite() && !iv.hi.is_finite()) {
                return Ok(DomainBox::real_space(nx));
            }
            if !scaled_perm {
                return Err(PeaceError::Unsupported(
                    "bounded domains transform only under scaled permutations".into(),
                ));
            }
            let mut ivs = vec![Interval::real_line(); nx];
            for (i, iv) in b.intervals().iter().enumerate() {
                let j = (0..nx).find(|&j| a[(i, j)] != 0.0).expect("one entry per row");
                let c = a[(i, j)];
                let (p, q) = ((iv.lo - shift[i]) / c, (iv.hi - shift[i]) / c);
                ivs[j] = Interval::new(p.min(q), p.max(q))?;
            }
            DomainBox::new(ivs)
        })
        .collect::<Result<Vec<_>>>()?;
    let out = StructuralModel {
        g_in: Some(g),
        density: DensitySpec::Continuous(ConditionalDensity::Expr(f)),
        x_domain,
        ..model.clone()
    };
    out.check()?;
    Ok(out)
}

/// True iff the gradient norm is at most `tol` at every quadrature node where
/// the density is positive.
pub fn is_zero_effect(model: &StructuralModel, z: &[f64], tol: f64) -> Result<bool> {
    check_z(model, z)?;
    let parts = Parts::new(model)?;
    let nx = model.nx();
    let dens = |x: &[f64]| with_xz(x, z, |xz| parts.density.eval(xz, nx).max(0.0));
    for b in &model.x_domain {
        let bounded = if b.is_bounded() {
            b.clone()
        } else {
            match truncate_weight(&dens, b, &model.trunc)? {
                Some(t) => t,
                None => continue,
            }
        };
        model.quad.check_budget(nx)?;
        let bounds: Vec<(f64, f64)> = bounded.intervals().iter().map(|iv| (iv.lo, iv.hi)).collect();
        let grid = Grid::new(&bounds, &model.quad);
        let worst = grid.sum(|x| {
            with_xz(x, z, |xz| {
                if parts.density.eval(xz, nx) > 0.0 && parts.grad.norm(xz) > tol {
                    1.0
                } else {
                    0.0
                }
            })
        })?;
        if worst > 0.0 {
            return Ok(false);
        }
    }
    Ok(true)
}
