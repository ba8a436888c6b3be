//! Bounded approximation of unbounded integration domains.
//!
//! The weight is located by a coarse grid search, then each unbounded side
//! grows from a unit box around the mode until the mass beyond it is small,
//! and is finally tightened by bisection. Tail mass is integrated exactly over
//! the half-infinite slab by the substitution `x = b + L t / (1 - t)`.

use serde::Serialize;

use crate::error::{PeaceError, Result};
use crate::model::{ConditionalDensity, DomainBox, Interval};
use crate::quad::{gauss_legendre, Grid, QuadratureSpec};

const MAX_DOUBLINGS: usize = 64;
const BISECTIONS: usize = 40;
const ZOOMS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruncationPolicy {
    /// Mass allowed outside the box along each axis.
    pub eps: f64,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy { eps: 1e-10 }
    }
}

impl TruncationPolicy {
    pub fn new(eps: f64) -> Result<Self> {
        let p = TruncationPolicy { eps };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps > 0.0 && self.eps < 1.0 {
            Ok(())
        } else {
            Err(PeaceError::InvalidArgument(format!(
                "truncation eps must lie in (0, 1), got {}",
                self.eps
            )))
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Side {
    Lo,
    Hi,
}

struct Truncator<'a, F> {
    w: &'a F,
    mode: Vec<f64>,
    body: QuadratureSpec,
    tail_axis: (Vec<f64>, Vec<f64>),
}

fn safe(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Truncator<'_, F> {
    fn grid_for(&self, bounds: &[(f64, f64)], axis: Option<usize>, b: f64, side: Side, scale: f64) -> Grid {
        let axes = bounds
            .iter()
            .enumerate()
            .map(|(a, &(lo, hi))| {
                if Some(a) == axis {
                    let sign = if side == Side::Hi { 1.0 } else { -1.0 };
                    let (ts, tw) = &self.tail_axis;
                    let xs = ts.iter().map(|t| b + sign * scale * t / (1.0 - t)).collect();
                    let ws = ts
                        .iter()
                        .zip(tw)
                        .map(|(t, w)| w * scale / ((1.0 - t) * (1.0 - t)))
                        .collect();
                    (xs, ws)
                } else {
                    self.body.axis(lo, hi)
                }
            })
            .collect();
        Grid::from_axes(axes)
    }

    fn mass(&self, bounds: &[(f64, f64)]) -> f64 {
        let grid = Grid::new(bounds, &self.body);
        grid.sum(|x| safe((self.w)(x))).unwrap_or(f64::INFINITY)
    }

    /// Mass of the slab beyond `b` on `axis`, other axes limited to `bounds`.
    fn tail(&self, bounds: &[(f64, f64)], axis: usize, side: Side, b: f64, scale: f64) -> f64 {
        let grid = self.grid_for(bounds, Some(axis), b, side, scale);
        grid.sum(|x| safe((self.w)(x))).unwrap_or(f64::INFINITY)
    }
}

fn search_window(iv: &Interval, center: f64, half: f64) -> (f64, f64) {
    match (iv.lo.is_finite(), iv.hi.is_finite()) {
        (true, true) => (iv.lo, iv.hi),
        (true, false) => (iv.lo, iv.lo.max(center) + 2.0 * half),
        (false, true) => (iv.hi.min(center) - 2.0 * half, iv.hi),
        (false, false) => (center - half, center + half),
    }
}

fn probe_grid<F: Fn(&[f64]) -> f64>(w: &F, window: &[(f64, f64)], k: usize) -> (Vec<f64>, f64) {
    let n = window.len();
    let total = k.pow(n as u32);
    let mut pt = vec![0.0; n];
    let mut best = (vec![0.0; n], f64::NEG_INFINITY);
    for idx in 0..total {
        let mut r = idx;
        for a in (0..n).rev() {
            let i = r % k;
            r /= k;
            let (lo, hi) = window[a];
            pt[a] = lo + (hi - lo) * i as f64 / (k - 1) as f64;
        }
        let v = safe(w(&pt));
        if v > best.1 {
            best = (pt.clone(), v);
        }
    }
    best
}

/// Numeric mode of `w` over `domain`, found on a coarse grid that widens
/// until the weight is seen, then zooms in.
pub fn find_mode<F: Fn(&[f64]) -> f64>(w: &F, domain: &DomainBox) -> Option<(Vec<f64>, f64)> {
    let n = domain.dim();
    let k = match n {
        1 => 65,
        2 => 33,
        3 => 17,
        _ => ((64f64.powi(3)).powf(1.0 / n as f64).floor() as usize).clamp(3, 9),
    };
    let ivs = domain.intervals();
    let mut half = 1.0;
    let mut found = None;
    for _ in 0..=MAX_DOUBLINGS {
        let window: Vec<(f64, f64)> = ivs.iter().map(|iv| search_window(iv, 0.0, half)).collect();
        let (pt, v) = probe_grid(w, &window, k);
        let on_open_edge = ivs
            .iter()
            .zip(&window)
            .zip(&pt)
            .any(|((iv, &(lo, hi)), &x)| (x == lo && !iv.lo.is_finite()) || (x == hi && !iv.hi.is_finite()));
        if v > 0.0 && v.is_finite() && !on_open_edge {
            found = Some((pt, v, window));
            break;
        }
        if v > 0.0 && v.is_finite() {
            found = Some((pt, v, window));
        }
        half *= 2.0;
    }
    let (mut best, mut val, window) = found?;
    let mut step: Vec<f64> = window.iter().map(|(lo, hi)| (hi - lo) / (k - 1) as f64).collect();
    for _ in 0..ZOOMS {
        let zoom: Vec<(f64, f64)> = best
            .iter()
            .zip(&step)
            .zip(ivs)
            .map(|((&c, &s), iv)| ((c - s).max(iv.lo), (c + s).min(iv.hi)))
            .collect();
        let (pt, v) = probe_grid(w, &zoom, k.min(9));
        if v > val {
            best = pt;
            val = v;
        }
        for s in &mut step {
            *s *= 0.25;
        }
    }
    Some((best, val))
}

/// Truncates the unbounded sides of `domain` so that, along each axis, at
/// most `policy.eps` of the mass of the non-negative weight `w` lies outside.
/// Returns `None` when `w` vanishes everywhere the search looked.
pub fn truncate_weight<F>(w: &F, domain: &DomainBox, policy: &TruncationPolicy) -> Result<Option<DomainBox>>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    policy.validate()?;
    if domain.is_bounded() {
        return Ok(Some(domain.clone()));
    }
    let n = domain.dim();
    let Some((mode, _)) = find_mode(w, domain) else {
        return Ok(None);
    };
    let body = if n == 1 {
        QuadratureSpec::new(16, 8)
    } else {
        QuadratureSpec::new(8, 4)
    };
    let mut tail_axis = (Vec::new(), Vec::new());
    let breaks = [0.0, 1.0 / 64.0, 1.0 / 32.0, 1.0 / 16.0, 0.125, 0.25, 0.5, 1.0];
    let (gx, gw) = gauss_legendre(16);
    for p in breaks.windows(2) {
        let (mid, half) = (0.5 * (p[0] + p[1]), 0.5 * (p[1] - p[0]));
        for (x, wt) in gx.iter().zip(&gw) {
            tail_axis.0.push(mid + half * x);
            tail_axis.1.push(half * wt);
        }
    }
    let tr = Truncator {
        w,
        mode,
        body,
        tail_axis,
    };

    let ivs = domain.intervals();
    let mut bounds: Vec<(f64, f64)> = ivs
        .iter()
        .zip(&tr.mode)
        .map(|(iv, &m)| {
            let lo = if iv.lo.is_finite() { iv.lo } else { m.min(iv.hi) - 0.5 };
            let hi = if iv.hi.is_finite() { iv.hi } else { m.max(iv.lo) + 0.5 };
            (lo, hi)
        })
        .collect();
    let sides: Vec<(usize, Side, f64)> = ivs
        .iter()
        .enumerate()
        .flat_map(|(a, iv)| {
            let open = (!iv.lo.is_finite()) as usize + (!iv.hi.is_finite()) as usize;
            let target = policy.eps / open.max(1) as f64;
            let mut v = Vec::new();
            if !iv.lo.is_finite() {
                v.push((a, Side::Lo, target));
            }
            if !iv.hi.is_finite() {
                v.push((a, Side::Hi, target));
            }
            v
        })
        .collect();
    let anchor = |a: usize, side: Side, bounds: &[(f64, f64)]| -> f64 {
        let m = tr.mode[a];
        match side {
            Side::Lo => m.min(bounds[a].1),
            Side::Hi => m.max(bounds[a].0),
        }
    };
    let edge = |a: usize, side: Side, bounds: &[(f64, f64)]| match side {
        Side::Lo => bounds[a].0,
        Side::Hi => bounds[a].1,
    };

    let mut converged = false;
    let mut failing = 0;
    for _ in 0..=MAX_DOUBLINGS {
        let mass = tr.mass(&bounds);
        let mut all_ok = mass > 0.0 && mass.is_finite();
        for (i, &(a, side, target)) in sides.iter().enumerate() {
            let b = edge(a, side, &bounds);
            let dist = (b - anchor(a, side, &bounds)).abs().max(f64::MIN_POSITIVE);
            let t = tr.tail(&bounds, a, side, b, dist / 8.0);
            if !(mass > 0.0 && mass.is_finite() && t <= target * mass) {
                all_ok = false;
                failing = i;
                let m = anchor(a, side, &bounds);
                let nb = m + 2.0 * (b - m);
                match side {
                    Side::Lo => bounds[a].0 = nb,
                    Side::Hi => bounds[a].1 = nb,
                }
            }
        }
        if all_ok {
            converged = true;
            break;
        }
    }
    if !converged {
        let (axis, side, _) = sides[failing];
        return Err(PeaceError::TruncationFailed {
            axis,
            reason: format!(
                "tail mass on the {} side did not fall below the target after {MAX_DOUBLINGS} doublings",
                if side == Side::Lo { "lower" } else { "upper" }
            ),
        });
    }

    let mass = tr.mass(&bounds);
    let outer = bounds.clone();
    for &(a, side, target) in &sides {
        let m = anchor(a, side, &outer);
        let far = edge(a, side, &outer);
        let scale = ((far - m).abs() / 8.0).max(f64::MIN_POSITIVE);
        let (mut near, mut far) = (m, far);
        for _ in 0..BISECTIONS {
            let mid = 0.5 * (near + far);
            if tr.tail(&outer, a, side, mid, scale) <= target * mass {
                far = mid;
            } else {
                near = mid;
            }
        }
        match side {
            Side::Lo => bounds[a].0 = far,
            Side::Hi => bounds[a].1 = far,
        }
    }
    Ok(Some(DomainBox::from_bounds(&bounds)?))
}

/// Bounded box capturing all but `policy.eps` of the density mass along each
/// axis, for the conditioning value `z`.
pub fn truncate_domain(
    density: &ConditionalDensity,
    z: &[f64],
    domain: &DomainBox,
    policy: &TruncationPolicy,
) -> Result<DomainBox> {
    let nx = domain.dim();
    let f = |x: &[f64]| {
        let mut xz = Vec::with_capacity(nx + z.len());
        xz.extend_from_slice(x);
        xz.extend_from_slice(z);
        density.eval(&xz, nx)
    };
    truncate_weight(&f, domain, policy)?.ok_or_else(|| PeaceError::TruncationFailed {
        axis: 0,
        reason: "density vanishes on every probed point".into(),
    })
}
